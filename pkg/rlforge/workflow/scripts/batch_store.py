#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Columnar, nestable container for batched RL data.
"""

__license__ = "MIT"

from collections.abc import Mapping

import numpy as np

from rlforge.workflow.scripts.utilities import (
    IndexOutOfRange,
    MissingField,
    StructureMismatch,
    ValidationError,
    splitmix64,
)

# every leaf is stored as one of three scalar kinds
LEAF_DTYPES = {"f": np.float64, "i": np.int64, "u": np.int64, "b": np.bool_}

PAD_MODES = ["edge", "zero"]


def _as_leaf(value, name):
    values = np.asarray(value)

    if values.ndim == 0:
        raise StructureMismatch(f"Field '{name}' must have a leading (batch) dimension")

    if values.dtype.kind not in LEAF_DTYPES:
        raise StructureMismatch(f"Field '{name}' has unsupported dtype {values.dtype}")

    leaf = np.array(values, dtype=LEAF_DTYPES[values.dtype.kind])
    leaf.setflags(write=False)
    return leaf


class Batch(object):
    """
    Map from field name to either a leaf array or a nested Batch. All the leaves reachable from one
    Batch share the same leading dimension. Batches are immutable; every operation returns a new one.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries=None, **fields):
        data = dict(entries or {})
        data.update(fields)

        self._entries = {}

        for key, value in data.items():
            if not isinstance(key, str) or not key or "." in key:
                raise StructureMismatch(f"Invalid field name {key!r}")

            if isinstance(value, Batch):
                self._entries[key] = value
            elif isinstance(value, Mapping):
                self._entries[key] = Batch(value)
            else:
                self._entries[key] = _as_leaf(value, key)

        self.validate()

    @classmethod
    def _wrap(cls, entries):
        """Build a Batch from already validated leaves without copying them."""
        batch = cls.__new__(cls)
        batch._entries = entries
        for value in entries.values():
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
        return batch

    def _leading_dims(self):
        for value in self._entries.values():
            if isinstance(value, Batch):
                yield from value._leading_dims()
            else:
                yield value.shape[0]

    def validate(self):
        """Check that every reachable leaf has the same leading dimension."""
        dims = set(self._leading_dims())

        if len(dims) > 1:
            raise StructureMismatch(f"Leaves have different leading dimensions {sorted(dims)}")

        return self

    def is_empty(self):
        return len(self._entries) == 0

    def __len__(self):
        return next(self._leading_dims(), 0)

    def __contains__(self, key):
        try:
            self._resolve(key)
            return True
        except MissingField:
            return False

    def __iter__(self):
        return iter(self._entries)

    def keys(self):
        return self._entries.keys()

    def items(self):
        return self._entries.items()

    def values(self):
        return self._entries.values()

    def _resolve(self, key):
        node = self
        for part in key.split("."):
            if not isinstance(node, Batch) or part not in node._entries:
                raise MissingField(f"No field '{key}' in batch")
            node = node._entries[part]
        return node

    def __getitem__(self, key):
        if isinstance(key, str):
            return self._resolve(key)

        return select(self, key)

    def structure(self):
        """Nested description of field names, scalar kinds and trailing shapes."""
        return {
            key: value.structure() if isinstance(value, Batch) else (value.dtype.name, value.shape[1:])
            for key, value in self._entries.items()
        }

    def map_leaves(self, fn):
        return Batch._wrap(
            {
                key: value.map_leaves(fn) if isinstance(value, Batch) else fn(value)
                for key, value in self._entries.items()
            }
        )

    def to_dict(self):
        return {
            key: value.to_dict() if isinstance(value, Batch) else np.array(value)
            for key, value in self._entries.items()
        }

    def __eq__(self, other):
        if not isinstance(other, Batch) or self.keys() != other.keys():
            return False

        for key, value in self._entries.items():
            theirs = other._entries[key]

            if isinstance(value, Batch) != isinstance(theirs, Batch):
                return False

            if isinstance(value, Batch):
                if value != theirs:
                    return False
            elif value.dtype != theirs.dtype or value.shape != theirs.shape:
                return False
            elif not np.array_equal(value, theirs, equal_nan=value.dtype.kind == "f"):
                return False

        return True

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        fields = ", ".join(
            f"{key}={value!r}" if isinstance(value, Batch) else f"{key}:{value.dtype.name}{list(value.shape)}"
            for key, value in self._entries.items()
        )
        return f"Batch({fields})"


def concat(parts):
    """
    Concatenate structure-matched Batches along the leading dimension. Batches without entries are skipped.
    """
    parts = [part for part in parts if not part.is_empty()]

    if not parts:
        return Batch()

    reference = parts[0].structure()

    for part in parts[1:]:
        if part.structure() != reference:
            raise StructureMismatch(f"Cannot concatenate {parts[0]!r} with {part!r}")

    return _concat_matched(parts)


def _concat_matched(parts):
    entries = {}

    for key, value in parts[0].items():
        if isinstance(value, Batch):
            entries[key] = _concat_matched([part._entries[key] for part in parts])
        else:
            entries[key] = np.concatenate([part._entries[key] for part in parts], axis=0)

    return Batch._wrap(entries)


def select(batch, indices):
    """
    Gather rows: row i of the result is row indices[i] of `batch`, for every leaf.
    """
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    size = len(batch)

    if indices.size and (indices.min() < 0 or indices.max() >= size):
        raise IndexOutOfRange(f"Row indices must lie in [0, {size})")

    return batch.map_leaves(lambda leaf: leaf[indices])


def split(batch, size, shuffle=False, seed=0):
    """
    Cut `batch` into chunks of at most `size` rows. With `shuffle`, the row order is a permutation determined by
    `seed` alone.
    """
    if size < 1:
        raise ValidationError(f"Split size must be positive, got {size}")

    total = len(batch)

    if total == 0:
        return []

    if shuffle:
        order = np.random.default_rng(splitmix64(seed)).permutation(total)
    else:
        order = np.arange(total)

    if not shuffle and size >= total:
        return [batch]

    return [select(batch, order[start : start + size]) for start in range(0, total, size)]


def stack_fields(batch, field, depth, prev_index=None, pad_mode="edge"):
    """
    Stack each row of `field` with its `depth - 1` predecessors into an array of shape [B, depth, ...], oldest first.

    `prev_index[i]` is the row preceding row i in its episode, and `prev_index[i] == i` at an episode start. Without
    a map all rows are treated as one episode. Before an episode start the first frame is repeated ("edge") or
    zeros are used ("zero").
    """
    leaf = batch[field]

    if isinstance(leaf, Batch):
        raise MissingField(f"Field '{field}' is a nested batch, not a leaf")

    if depth < 1:
        raise ValidationError(f"Stack depth must be positive, got {depth}")

    if pad_mode not in PAD_MODES:
        raise ValidationError(f"Unknown pad mode '{pad_mode}', expected one of {PAD_MODES}")

    size = leaf.shape[0]
    current = np.arange(size, dtype=np.int64)

    if prev_index is None:
        prev_index = np.maximum(current - 1, 0)
    else:
        prev_index = np.asarray(prev_index, dtype=np.int64)

        if prev_index.shape != (size,) or (size and (prev_index.min() < 0 or prev_index.max() >= size)):
            raise IndexOutOfRange(f"Predecessor map must hold {size} indices in [0, {size})")

    columns = [current]
    valid = [np.ones(size, dtype=bool)]

    for _ in range(depth - 1):
        previous = prev_index[columns[-1]]
        valid.append(valid[-1] & (previous != columns[-1]))
        columns.append(previous)

    # oldest frame first
    order = np.stack(columns[::-1], axis=1)
    stacked = leaf[order]

    if pad_mode == "zero":
        mask = np.stack(valid[::-1], axis=1)
        stacked[~mask] = 0

    return stacked
