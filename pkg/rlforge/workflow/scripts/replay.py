#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Fixed-capacity transition storage with episode-boundary navigation.

Every buffer is a list of circular segments laid end to end in one set of column arrays, so a row has one global
index. A plain ReplayBuffer has one segment, a VectorReplayBuffer has one per env, and a CachedReplayBuffer has a
main segment followed by one staging cache per env.
"""

__license__ = "MIT"

import numpy as np
import pandas as pd

from rlforge.workflow.scripts.batch_store import LEAF_DTYPES, Batch, stack_fields
from rlforge.workflow.scripts.segment_tree import SegmentTree
from rlforge.workflow.scripts.serialization import BinaryReader, BinaryWriter, atomic_write, read_bytes
from rlforge.workflow.scripts.utilities import (
    EmptyBuffer,
    FormatError,
    InvalidIndex,
    MissingField,
    StructureMismatch,
    UnknownEnvId,
    ValidationError,
    splitmix64,
)

BUFFER_MAGIC = b"TSBF"
BUFFER_VERSION = 1

LAYOUTS = {"vector": 0, "cached": 1, "single": 2}

TRANSITION_FIELDS = ["obs", "act", "rew", "done", "truncated", "obs_next", "env_id"]
INFO_PREFIX = "info."


class PrioritizedSampler(object):
    """
    Proportional prioritized sampling over the rows of a buffer. Leaves hold p^alpha; rows that are not stored
    hold 0 in the sum tree and +inf in the min tree.
    """

    def __init__(self, size, alpha=0.6, beta=0.4, max_priority=1.0):
        if alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {alpha}")

        if not 0 <= beta <= 1:
            raise ValidationError(f"beta must lie in [0, 1], got {beta}")

        self.alpha = float(alpha)
        self.beta = float(beta)
        self.max_priority = float(max_priority)
        self.sum_tree = SegmentTree(size, "sum")
        self.min_tree = SegmentTree(size, "min")

    def on_write(self, indices):
        self._set(indices, self.max_priority ** self.alpha)

    def on_clear(self, indices):
        indices = np.asarray(indices, dtype=np.int64)

        if indices.size:
            self.sum_tree[indices] = 0.0
            self.min_tree[indices] = np.inf

    def _set(self, indices, values):
        indices = np.asarray(indices, dtype=np.int64)

        if indices.size:
            self.sum_tree[indices] = values
            self.min_tree[indices] = values

    def update_priority(self, indices, priorities):
        priorities = np.asarray(priorities, dtype=np.float64)

        if np.any(priorities <= 0) or not np.all(np.isfinite(priorities)):
            raise ValidationError("Priorities must be positive and finite")

        self._set(indices, priorities ** self.alpha)
        self.max_priority = max(self.max_priority, float(priorities.max(initial=0.0)))

    def probabilities(self, indices):
        return self.sum_tree[indices] / self.sum_tree.reduce()

    def sample(self, n, rng):
        """Draw `n` iid rows with P(i) = p_i^alpha / sum_j p_j^alpha, with their importance weights."""
        total = self.sum_tree.reduce()

        if total <= 0:
            raise EmptyBuffer("No rows with a positive priority to sample from")

        x = np.minimum(rng.random(n) * total, np.nextafter(total, 0.0))
        indices = self.sum_tree.prefix_search(x)

        weights = (self.sum_tree[indices] / self.min_tree.reduce()) ** (-self.beta)
        return indices, weights

    def leaves(self):
        return self.sum_tree.leaves()


class ReplayBuffer(object):
    """
    Single circular queue of transitions.
    """

    layout = "single"

    def __init__(self, capacity, n_envs=1):
        if capacity < 1:
            raise ValidationError(f"Buffer capacity must be positive, got {capacity}")

        self.n_envs = n_envs
        self._setup([capacity])

    def _setup(self, capacities):
        self.capacities = np.asarray(capacities, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.capacities)[:-1]]).astype(np.int64)
        self.total_capacity = int(self.capacities.sum())

        n_segments = len(capacities)
        self.cursor = np.zeros(n_segments, dtype=np.int64)
        self.size = np.zeros(n_segments, dtype=np.int64)
        self.ep_return = np.zeros(n_segments, dtype=np.float64)
        self.ep_len = np.zeros(n_segments, dtype=np.int64)

        self.columns = {}
        self.head = np.zeros(self.total_capacity, dtype=bool)
        self.sampler = None

    def __len__(self):
        return int(self.size.sum())

    @property
    def capacity(self):
        return self.total_capacity

    def _segment_for(self, env_id):
        return 0

    def attach_sampler(self, sampler):
        """Use `sampler` for prioritized sampling; rows already stored get the running max priority."""
        if sampler.sum_tree.size != self.total_capacity:
            raise ValidationError(f"Sampler covers {sampler.sum_tree.size} rows, the buffer {self.total_capacity}")

        self.sampler = sampler
        sampler.on_clear(np.arange(self.total_capacity))
        sampler.on_write(self.sample_indices(0) if len(self) else [])
        return self

    # storage

    def _ensure_column(self, name, value):
        value = np.asarray(value)

        if name.startswith(INFO_PREFIX):
            if name not in self.columns:
                self.columns[name] = np.full(self.total_capacity, np.nan, dtype=np.float64)
            return

        if value.dtype.kind not in LEAF_DTYPES:
            raise StructureMismatch(f"Field '{name}' has unsupported dtype {value.dtype}")

        dtype = LEAF_DTYPES[value.dtype.kind]

        if name not in self.columns:
            self.columns[name] = np.zeros((self.total_capacity,) + value.shape, dtype=dtype)
        elif self.columns[name].shape[1:] != value.shape:
            raise StructureMismatch(
                f"Field '{name}' has shape {value.shape}, the buffer stores {self.columns[name].shape[1:]}"
            )

    def _write(self, segment, row, track=True):
        """
        Append one transition to `segment`, overwriting its oldest row when full. Returns the global index and,
        when `track` is set and the transition ends an episode, the episode's (return, length).
        """
        for name, value in row.items():
            self._ensure_column(name, value)

        capacity = self.capacities[segment]
        offset = self.offsets[segment]
        cursor = self.cursor[segment]
        index = offset + cursor

        if self.size[segment] == 0:
            is_head = True
        else:
            is_head = bool(self.columns["done"][offset + (cursor - 1) % capacity])

        for name, column in self.columns.items():
            column[index] = row.get(name, np.nan) if name.startswith(INFO_PREFIX) else row[name]

        self.head[index] = is_head

        full = self.size[segment] == capacity
        self.cursor[segment] = (cursor + 1) % capacity
        self.size[segment] = min(self.size[segment] + 1, capacity)

        # the surviving part of an overwritten episode starts at the new oldest row
        if full:
            self.head[offset + self.cursor[segment]] = True

        if self.sampler is not None:
            self.sampler.on_write([index])

        if not track:
            return index, None

        self.ep_return[segment] += float(row["rew"])
        self.ep_len[segment] += 1

        if not row["done"]:
            return index, None

        stats = (float(self.ep_return[segment]), int(self.ep_len[segment]))
        self.ep_return[segment] = 0.0
        self.ep_len[segment] = 0
        return index, stats

    def _row(self, obs, act, rew, done, truncated, obs_next, env_id, info=None):
        row = {
            "obs": np.asarray(obs, dtype=np.float64),
            "act": np.asarray(act),
            "rew": float(rew),
            "done": bool(done),
            "truncated": bool(truncated),
            "obs_next": np.asarray(obs_next, dtype=np.float64),
            "env_id": int(env_id),
        }

        for key, value in (info or {}).items():
            try:
                row[f"{INFO_PREFIX}{key}"] = float(value)
            except (TypeError, ValueError):
                raise StructureMismatch(f"Info entry '{key}' is not a numeric scalar")

        if row["truncated"] and not row["done"]:
            raise ValidationError("A truncated transition must also be done")

        return row

    def add_transition(self, obs, act, rew, done, truncated, obs_next, env_id=0, info=None):
        """Store one transition; returns (episode_return, episode_length) when it ends an episode."""
        row = self._row(obs, act, rew, done, truncated, obs_next, env_id, info)
        return self._add_row(row)

    def _add_row(self, row):
        _, stats = self._write(self._segment_for(row["env_id"]), row)
        return stats

    def add(self, batch):
        """
        Store a transition Batch (obs, act, rew, done, truncated, obs_next, env_id and an optional nested info)
        row by row. Returns (env_id, episode_return, episode_length) for every episode that ended.
        """
        for name in TRANSITION_FIELDS:
            if name not in batch:
                raise StructureMismatch(f"Transition batch is missing field '{name}'")

        info = batch["info"].to_dict() if "info" in batch.keys() else {}
        env_ids = batch["env_id"]

        for env_id in np.unique(env_ids):
            self._segment_for(int(env_id))

        finished = []

        for i in range(len(batch)):
            row = self._row(
                batch["obs"][i],
                batch["act"][i],
                batch["rew"][i],
                batch["done"][i],
                batch["truncated"][i],
                batch["obs_next"][i],
                env_ids[i],
                {key: values[i] for key, values in info.items()},
            )
            stats = self._add_row(row)

            if stats is not None:
                finished.append((int(env_ids[i]),) + stats)

        return finished

    def clear(self, keep_statistics=True):
        """
        Drop every stored row. With `keep_statistics`, the running return and length of in-progress episodes
        survive, so episodes that straddle a clear are still reported whole.
        """
        if self.sampler is not None and len(self):
            self.sampler.on_clear(self.sample_indices(0))

        self.cursor[:] = 0
        self.size[:] = 0

        if not keep_statistics:
            self.ep_return[:] = 0.0
            self.ep_len[:] = 0

    # navigation

    def _locate(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        segments = np.searchsorted(self.offsets, indices, side="right") - 1
        segments = np.clip(segments, 0, len(self.offsets) - 1)
        return segments, indices - self.offsets[segments]

    def _stored(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        segments, local = self._locate(indices)
        capacity = self.capacities[segments]
        oldest = (self.cursor[segments] - self.size[segments]) % capacity
        return (indices >= 0) & (indices < self.total_capacity) & ((local - oldest) % capacity < self.size[segments])

    def _check_indices(self, indices):
        indices = np.asarray(indices, dtype=np.int64)

        if not np.all(self._stored(indices)):
            raise InvalidIndex("Row index does not refer to a stored transition")

        return indices

    def _newest(self, segments):
        capacity = self.capacities[segments]
        return self.offsets[segments] + (self.cursor[segments] - 1) % capacity

    def _is_tail(self, indices):
        segments, _ = self._locate(indices)
        return self.columns["done"][indices] | (indices == self._newest(segments))

    def next(self, indices):
        """Chronological successor within the episode segment; a tail maps to itself."""
        scalar = np.ndim(indices) == 0
        indices = np.atleast_1d(self._check_indices(indices))
        segments, local = self._locate(indices)

        following = self.offsets[segments] + (local + 1) % self.capacities[segments]
        result = np.where(self._is_tail(indices), indices, following)
        return int(result[0]) if scalar else result

    def prev(self, indices):
        """Chronological predecessor within the episode segment; a head maps to itself."""
        scalar = np.ndim(indices) == 0
        indices = np.atleast_1d(self._check_indices(indices))
        result = self._prev_unchecked(indices)
        return int(result[0]) if scalar else result

    def _prev_unchecked(self, indices):
        segments, local = self._locate(indices)
        preceding = self.offsets[segments] + (local - 1) % self.capacities[segments]
        return np.where(self.head[indices], indices, preceding)

    def is_tail(self, indices):
        return self._is_tail(np.atleast_1d(self._check_indices(indices)))

    def tail_index(self):
        """Last stored row of every episode segment: natural ends, time-limit ends and in-progress tails."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)

        indices = self.sample_indices(0)
        return np.sort(indices[self._is_tail(indices)])

    def is_head(self, indices):
        return self.head[self._check_indices(indices)]

    # sampling

    def segment_rows(self, segment):
        """Global indices of one segment, oldest first."""
        size = self.size[segment]
        capacity = self.capacities[segment]
        oldest = (self.cursor[segment] - size) % capacity
        return self.offsets[segment] + (oldest + np.arange(size, dtype=np.int64)) % capacity

    def sample_indices(self, n, seed=0):
        """
        `n` = 0 gives every stored row, segment by segment, oldest first. Otherwise `n` rows are drawn uniformly
        with replacement.
        """
        if len(self) == 0:
            raise EmptyBuffer("Cannot sample from an empty buffer")

        if n < 0:
            raise ValidationError(f"Sample size must be >= 0, got {n}")

        rows = np.concatenate([self.segment_rows(segment) for segment in range(len(self.capacities))])

        if n == 0:
            return rows

        rng = np.random.default_rng(splitmix64(seed))
        return rows[rng.integers(0, rows.size, size=n)]

    def get(self, indices):
        """Batch of the stored transitions at `indices`."""
        indices = np.atleast_1d(self._check_indices(indices))

        if not self.columns:
            return Batch()

        entries = {name: self.columns[name][indices] for name in TRANSITION_FIELDS}
        info = {
            name[len(INFO_PREFIX) :]: column[indices]
            for name, column in self.columns.items()
            if name.startswith(INFO_PREFIX)
        }

        if info:
            entries["info"] = info

        return Batch(entries)

    def sample(self, n, seed=0):
        indices = self.sample_indices(n, seed)
        return self.get(indices), indices

    def prioritized_sample(self, n, seed=0):
        """Draw `n` rows in proportion to their priorities; returns the Batch, the indices and the weights."""
        if self.sampler is None:
            raise ValidationError("No prioritized sampler attached to the buffer")

        if n < 1:
            raise ValidationError(f"Sample size must be positive, got {n}")

        if len(self) == 0:
            raise EmptyBuffer("Cannot sample from an empty buffer")

        indices, weights = self.sampler.sample(n, np.random.default_rng(splitmix64(seed)))
        return self.get(indices), indices, weights

    def update_priority(self, indices, priorities):
        if self.sampler is None:
            raise ValidationError("No prioritized sampler attached to the buffer")

        self.sampler.update_priority(self._check_indices(indices), priorities)

    def stack(self, indices, field, depth, pad_mode="edge"):
        """Frame-stack `field` at `indices`: shape [k, depth, ...], oldest frame first, within episodes."""
        indices = np.atleast_1d(self._check_indices(indices))

        if field not in self.columns:
            raise MissingField(f"No column '{field}' in buffer")

        everything = np.arange(self.total_capacity, dtype=np.int64)
        prev_index = np.where(self._stored(everything), self._prev_unchecked(everything), everything)

        stacked = stack_fields(Batch(value=self.columns[field]), "value", depth, prev_index, pad_mode)
        return stacked[indices]

    def summary(self):
        """One row per segment with its occupancy and episode bookkeeping."""
        tails = set(self.tail_index().tolist())
        records = []

        for segment in range(len(self.capacities)):
            rows = self.segment_rows(segment)
            done = self.columns["done"][rows] if "done" in self.columns else np.zeros(0, dtype=bool)
            records.append(
                {
                    "segment": self._segment_name(segment),
                    "capacity": int(self.capacities[segment]),
                    "size": int(self.size[segment]),
                    "cursor": int(self.cursor[segment]),
                    "episodes": int(done.sum()),
                    "tails": sum(1 for row in rows.tolist() if row in tails),
                    "ep_return": float(self.ep_return[segment]),
                    "ep_len": int(self.ep_len[segment]),
                }
            )

        return pd.DataFrame.from_records(records)

    def _segment_name(self, segment):
        return "buffer"

    # persistence

    def save(self, path):
        save_buffer(self, path)

    @staticmethod
    def load(path):
        return load_buffer(path)


class VectorReplayBuffer(ReplayBuffer):
    """
    `n_envs` independent circular sub-buffers of `total_capacity / n_envs` rows; env i writes to sub-buffer i only.
    """

    layout = "vector"

    def __init__(self, total_capacity, n_envs):
        if n_envs < 1:
            raise ValidationError(f"n_envs must be positive, got {n_envs}")

        if total_capacity < n_envs or total_capacity % n_envs:
            raise ValidationError(f"Buffer capacity {total_capacity} is not divisible by {n_envs} envs")

        self.n_envs = n_envs
        self._setup([total_capacity // n_envs] * n_envs)

    def _segment_for(self, env_id):
        if not 0 <= env_id < self.n_envs:
            raise UnknownEnvId(f"Env id {env_id} is outside [0, {self.n_envs})")

        return env_id

    def _segment_name(self, segment):
        return f"env{segment}"


class CachedReplayBuffer(ReplayBuffer):
    """
    A main circular buffer of complete episodes plus one staging cache per env. An episode is staged in its env's
    cache and moved to the main buffer when it ends.
    """

    layout = "cached"

    def __init__(self, main_capacity, n_envs, cache_capacity):
        if main_capacity < 1 or cache_capacity < 1 or n_envs < 1:
            raise ValidationError("Cached buffer capacities and env count must be positive")

        self.n_envs = n_envs
        self._setup([main_capacity] + [cache_capacity] * n_envs)

    @property
    def main_capacity(self):
        return int(self.capacities[0])

    @property
    def cache_capacity(self):
        return int(self.capacities[1])

    def _segment_for(self, env_id):
        if not 0 <= env_id < self.n_envs:
            raise UnknownEnvId(f"Env id {env_id} is outside [0, {self.n_envs})")

        return env_id + 1

    def _add_row(self, row):
        segment = self._segment_for(row["env_id"])
        _, stats = self._write(segment, row)

        if row["done"]:
            self._migrate(segment)

        return stats

    def _migrate(self, segment):
        rows = self.segment_rows(segment)

        for index in rows:
            row = {name: column[index] for name, column in self.columns.items()}
            self._write(0, row, track=False)

        if self.sampler is not None:
            self.sampler.on_clear(rows)

        self.cursor[segment] = 0
        self.size[segment] = 0

    def _segment_name(self, segment):
        return "main" if segment == 0 else f"cache{segment - 1}"


def _layout_of(buffer):
    return LAYOUTS[buffer.layout]


def _file_segments(buffer):
    """Segments stored in the sub-buffer section: one per env, or the single queue. A cached main segment is not."""
    if buffer.layout == "single":
        return [0]

    if buffer.layout == "cached":
        return list(range(1, buffer.n_envs + 1))

    return list(range(buffer.n_envs))


def _write_segment(writer, buffer, segment):
    start = buffer.offsets[segment]
    stop = start + buffer.capacities[segment]

    writer.u64(int(buffer.size[segment]))
    writer.u64(int(buffer.cursor[segment]))

    for name, column in buffer.columns.items():
        writer.named_array(name, column[start:stop])

    # a zero-length name ends the column list
    writer.text("")
    writer.block(np.packbits(buffer.head[start:stop]).tobytes())

    if buffer.sampler is None:
        writer.u8(0)
    else:
        writer.u8(1)
        writer.array(buffer.sampler.leaves()[start:stop])


def _read_segment(reader, capacity):
    record = {"size": reader.u64(), "cursor": reader.u64(), "columns": {}}

    if record["size"] > capacity or record["cursor"] >= capacity:
        raise FormatError("Sub-buffer has an inconsistent size or cursor")

    while True:
        name = reader.text()

        if not name:
            break

        values = reader.array()

        if values.shape[0] != capacity:
            raise FormatError(f"Column '{name}' has {values.shape[0]} rows, expected {capacity}")

        record["columns"][name] = values

    bits = np.frombuffer(reader.block((capacity + 7) // 8), dtype=np.uint8)
    record["head"] = np.unpackbits(bits, count=capacity).astype(bool)
    record["leaves"] = reader.array() if reader.u8() else None

    if record["leaves"] is not None and record["leaves"].shape != (capacity,):
        raise FormatError("Priority block does not match the sub-buffer capacity")

    return record


def buffer_to_bytes(buffer):
    """
    TSBF body: u32 sub-buffer count, u64 per-sub-buffer capacity, then per sub-buffer its size, write cursor, column
    blocks, head bitmap and optional priority block. A trailing extension holds the layout byte, a JSON manifest of the
    running statistics and, for cached buffers, the main segment.
    """
    segments = _file_segments(buffer)
    writer = BinaryWriter(BUFFER_MAGIC, BUFFER_VERSION)

    writer.u32(len(segments))
    writer.u64(int(buffer.capacities[segments[0]]))

    for segment in segments:
        _write_segment(writer, buffer, segment)

    sampler = buffer.sampler
    params = None

    if sampler is not None:
        params = {"alpha": sampler.alpha, "beta": sampler.beta, "max_priority": sampler.max_priority}

    writer.u8(_layout_of(buffer))
    writer.json(
        {
            "n_envs": buffer.n_envs,
            "ep_return": [float(value) for value in buffer.ep_return],
            "ep_len": [int(value) for value in buffer.ep_len],
            "sampler": params,
        }
    )

    if buffer.layout == "cached":
        writer.u64(buffer.main_capacity)
        _write_segment(writer, buffer, 0)

    return writer.getvalue()


def _restore_segment(buffer, segment, record):
    start = buffer.offsets[segment]
    capacity = buffer.capacities[segment]

    buffer.size[segment] = record["size"]
    buffer.cursor[segment] = record["cursor"]

    for name, values in record["columns"].items():
        if name not in buffer.columns:
            fill = np.nan if name.startswith(INFO_PREFIX) else 0
            buffer.columns[name] = np.full((buffer.total_capacity,) + values.shape[1:], fill, dtype=values.dtype)

        buffer.columns[name][start : start + capacity] = values

    buffer.head[start : start + capacity] = record["head"]


def buffer_from_bytes(data):
    reader = BinaryReader(data, BUFFER_MAGIC, BUFFER_VERSION)

    n_segments = reader.u32()
    capacity = reader.u64()

    if n_segments < 1 or capacity < 1:
        raise FormatError("A buffer file needs at least one sub-buffer with a positive capacity")

    records = [_read_segment(reader, capacity) for _ in range(n_segments)]

    layout = reader.u8()
    manifest = reader.json()
    n_envs = manifest["n_envs"]

    if layout == LAYOUTS["vector"]:
        buffer = VectorReplayBuffer(capacity * n_segments, n_segments)
    elif layout == LAYOUTS["cached"]:
        main_capacity = reader.u64()
        records.insert(0, _read_segment(reader, main_capacity))
        buffer = CachedReplayBuffer(main_capacity, n_segments, capacity)
    elif layout == LAYOUTS["single"]:
        buffer = ReplayBuffer(capacity, n_envs)
    else:
        raise FormatError(f"Unknown buffer layout byte {layout}")

    if not reader.at_end():
        raise FormatError("Trailing bytes after the buffer contents")

    n_all = len(buffer.capacities)

    if buffer.n_envs != n_envs or len(records) != n_all:
        raise FormatError("Buffer manifest does not match its sub-buffers")

    if len(manifest["ep_return"]) != n_all or len(manifest["ep_len"]) != n_all:
        raise FormatError("Buffer manifest holds episode statistics for another number of segments")

    for segment, record in enumerate(records):
        _restore_segment(buffer, segment, record)

    buffer.ep_return[:] = manifest["ep_return"]
    buffer.ep_len[:] = manifest["ep_len"]

    params = manifest["sampler"]
    has_leaves = [record["leaves"] is not None for record in records]

    if params is None:
        if any(has_leaves):
            raise FormatError("Priority blocks without sampler parameters")
    else:
        if not all(has_leaves):
            raise FormatError("Every sub-buffer of a prioritized buffer needs a priority block")

        sampler = PrioritizedSampler(buffer.total_capacity, alpha=params["alpha"], beta=params["beta"])
        sampler.max_priority = params["max_priority"]

        everything = np.arange(buffer.total_capacity)
        leaves = np.concatenate([record["leaves"] for record in records])
        sampler.sum_tree[everything] = leaves
        sampler.min_tree[everything] = np.where(buffer._stored(everything), leaves, np.inf)
        buffer.sampler = sampler

    return buffer


def save_buffer(buffer, path):
    atomic_write(path, buffer_to_bytes(buffer))


def load_buffer(path):
    return buffer_from_bytes(read_bytes(path))


def make_buffer(config, n_envs):
    """Build the buffer described by the `buffer` config section."""
    kind = config["kind"]

    if kind == "vector":
        buffer = VectorReplayBuffer(config["capacity"], n_envs)
    elif kind == "cached":
        buffer = CachedReplayBuffer(config["capacity"], n_envs, config["cache_capacity"])
    elif kind == "single":
        buffer = ReplayBuffer(config["capacity"], n_envs)
    else:
        raise ValidationError(f"Unknown buffer kind '{kind}', expected one of {list(LAYOUTS)}")

    if config.get("prioritized"):
        buffer.attach_sampler(PrioritizedSampler(buffer.total_capacity, config["alpha"], config["beta"]))

    return buffer
