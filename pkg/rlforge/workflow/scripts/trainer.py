#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
On-policy, off-policy and offline training loops with evaluation, logging and checkpointing.
"""

__license__ = "MIT"

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from rlforge.workflow.scripts.collector import EVAL_MODES, evaluate
from rlforge.workflow.scripts.policy import policy_from_bytes, policy_to_bytes, save_policy
from rlforge.workflow.scripts.replay import buffer_from_bytes, buffer_to_bytes
from rlforge.workflow.scripts.serialization import BinaryReader, BinaryWriter, atomic_write, read_bytes
from rlforge.workflow.scripts.utilities import (
    ConfigMismatch,
    EmptyBuffer,
    FormatError,
    SeedStream,
    ValidationError,
    print_info,
)

CHECKPOINT_MAGIC = b"TSCK"
CHECKPOINT_VERSION = 1

PARADIGMS = ["on-policy", "off-policy", "offline"]
COLLECT_UNITS = ["step", "episode"]

LOG_COLUMNS = ["wall_clock", "env_step", "update_step", "metric", "value"]

# the sections a resumed run must share with the run that wrote the checkpoint
RESUME_SECTIONS = ["env", "policy", "buffer", "returns"]


@dataclass
class TrainerConfig:
    paradigm: str = "off-policy"
    max_epoch: int = 10
    steps_per_epoch: int = 1000
    collect_unit: str = "step"
    collect_per_iter: int = 10
    update_per_collect: int = 1
    batch_size: int = 32
    warmup_factor: int = 4
    eval_interval: int = 10
    eval_episodes: int = 10
    eval_mode: str = "greedy"
    eval_seed: int = 0
    stop_score: Optional[float] = None
    seed: int = 0
    max_steps_without_episode: int = 100000
    checkpoint_every_epoch: bool = True
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ValidationError(f"Unknown paradigm '{self.paradigm}', expected one of {PARADIGMS}")

        if self.collect_unit not in COLLECT_UNITS:
            raise ValidationError(f"Unknown collect unit '{self.collect_unit}', expected one of {COLLECT_UNITS}")

        if self.eval_mode not in EVAL_MODES:
            raise ValidationError(f"Unknown eval mode '{self.eval_mode}', expected one of {EVAL_MODES}")

        for name in (
            "max_epoch",
            "steps_per_epoch",
            "collect_per_iter",
            "update_per_collect",
            "eval_interval",
            "eval_episodes",
            "max_steps_without_episode",
        ):
            if getattr(self, name) < 1:
                raise ValidationError(f"trainer.{name} must be positive, got {getattr(self, name)}")

        if self.batch_size < 0 or self.warmup_factor < 0:
            raise ValidationError("trainer.batch_size and trainer.warmup_factor must not be negative")

        if self.paradigm == "off-policy" and self.batch_size < 1:
            raise ValidationError("Off-policy training needs trainer.batch_size >= 1")

    @classmethod
    def from_config(cls, section, checkpoint_path=None):
        fields = {key: value for key, value in section.items() if key in cls.__dataclass_fields__}
        return cls(**fields, checkpoint_path=checkpoint_path)


@dataclass
class RunReport:
    paradigm: str
    epochs: list = field(default_factory=list)
    best_score: Optional[float] = None
    best_epoch: Optional[int] = None
    best_checkpoint: Optional[str] = None
    time_breakdown: dict = field(default_factory=dict)
    env_steps: int = 0
    update_steps: int = 0
    episodes: int = 0
    early_stop: bool = False

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        atomic_write(path, (json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n").encode())


def _json_safe(value):
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}

    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]

    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)

    if isinstance(value, np.integer):
        return int(value)

    return value


class CsvLogger(object):
    """
    Appends one row per metric to a CSV file. The wall-clock column is only filled when asked for, so that two
    identical runs write identical files.
    """

    def __init__(self, path, wall_clock=False, append=False):
        self.path = path
        self.wall_clock = wall_clock
        self.start = time.perf_counter()

        if not append and os.path.exists(path):
            os.remove(path)

    def write(self, env_step, update_step, metrics):
        elapsed = time.perf_counter() - self.start if self.wall_clock else ""

        rows = [
            [elapsed, int(env_step), int(update_step), metric, float(value)]
            for metric, value in metrics.items()
            if value is not None and not (isinstance(value, float) and math.isnan(value))
        ]

        if not rows:
            return

        pd.DataFrame(rows, columns=LOG_COLUMNS).to_csv(
            self.path, mode="a", header=not os.path.exists(self.path), index=False
        )


class Trainer(object):
    """
    Runs one of the three paradigms and accounts its wall time into collecting, updating, evaluating and others.
    """

    def __init__(
        self,
        policy,
        config,
        params,
        collector=None,
        buffer=None,
        test_venv=None,
        output_dir=None,
        logger=None,
        run_config=None,
        async_min_ready=None,
        wait_timeout=None,
        beta_final=None,
        verbose=False,
    ):
        if policy.mode != config.paradigm:
            raise ConfigMismatch(f"A {policy.mode} policy cannot be trained {config.paradigm}")

        if config.paradigm == "offline":
            if buffer is None:
                raise ValidationError("Offline training needs a dataset buffer")
        elif collector is None:
            raise ValidationError(f"{config.paradigm} training needs a collector")

        self.policy = policy
        self.config = config
        self.params = params
        self.collector = collector
        self.buffer = buffer if buffer is not None else collector.buffer

        if self.buffer is None:
            raise ValidationError("Training needs a buffer")

        self.test_venv = test_venv
        self.output_dir = output_dir
        self.logger = logger
        self.run_config = run_config or {}
        self.async_min_ready = async_min_ready
        self.wait_timeout = wait_timeout
        self.beta_final = beta_final
        self.verbose = verbose

        self.stream = SeedStream(config.seed).spawn(1)
        self.beta_start = None if self.buffer.sampler is None else self.buffer.sampler.beta

        self.epoch = 0
        self.iteration = 0
        self.env_steps = 0
        self.update_steps = 0
        self.episodes = 0
        self.timers = {"collecting": 0.0, "updating": 0.0, "evaluating": 0.0, "total": 0.0}
        self.report = RunReport(paradigm=config.paradigm)

    @property
    def total_env_steps(self):
        return self.config.max_epoch * self.config.steps_per_epoch

    # phases

    def _collect(self):
        unit = {"n_step" if self.config.collect_unit == "step" else "n_episode": self.config.collect_per_iter}

        if hasattr(self.policy, "set_epsilon"):
            self.policy.set_epsilon(self.env_steps)

        if self.beta_start is not None and self.beta_final is not None:
            progress = min(self.env_steps / self.total_env_steps, 1.0)
            self.buffer.sampler.beta = self.beta_start + (self.beta_final - self.beta_start) * progress

        start = time.perf_counter()

        if self.async_min_ready is not None:
            stats = self.collector.collect_async(min_ready=self.async_min_ready, timeout=self.wait_timeout, **unit)
        else:
            stats = self.collector.collect(**unit)

        self.timers["collecting"] += time.perf_counter() - start

        self.env_steps += stats.n_collected_steps
        self.episodes += stats.n_collected_episodes
        return stats

    def _drain(self):
        """Store the steps still in flight from async collection and count them like collected ones."""
        if self.collector is None or not self.collector.in_flight:
            return

        start = time.perf_counter()
        stats = self.collector.drain()
        self.timers["collecting"] += time.perf_counter() - start

        self.env_steps += stats.n_collected_steps
        self.episodes += stats.n_collected_episodes

    def _update(self, repeat):
        start = time.perf_counter()
        losses = []

        for _ in range(repeat):
            losses.append(self.policy.update(self.buffer, self.config.batch_size, self.params, self.stream.next()))
            self.update_steps += 1

        if self.config.paradigm == "on-policy":
            self.buffer.clear(keep_statistics=True)

        self.timers["updating"] += time.perf_counter() - start
        return losses[-1]["loss"] if losses else None

    def _evaluate(self):
        start = time.perf_counter()
        stats = evaluate(
            self.policy,
            self.test_venv,
            self.config.eval_episodes,
            mode=self.config.eval_mode,
            seed=self.config.eval_seed,
            max_steps_without_episode=self.config.max_steps_without_episode,
        )
        self.timers["evaluating"] += time.perf_counter() - start

        if self.report.best_score is None or stats.mean_return > self.report.best_score:
            self.report.best_score = stats.mean_return
            self.report.best_epoch = self.epoch

            if self.output_dir is not None:
                self.report.best_checkpoint = os.path.join(self.output_dir, "best_policy.tspl")
                save_policy(self.policy, self.report.best_checkpoint)

        self._log({"eval/return_mean": stats.mean_return, "eval/return_std": stats.std_return})
        return stats

    def _log(self, metrics):
        if self.logger is not None:
            self.logger.write(self.env_steps, self.update_steps, metrics)

    def _stop(self, eval_stats):
        return (
            eval_stats is not None
            and self.config.stop_score is not None
            and eval_stats.mean_return >= self.config.stop_score
        )

    # loops

    def _iteration(self):
        """One collect/update round (one update for offline). Returns the loss, train returns and eval stats."""
        self.iteration += 1
        train_returns = []

        if self.config.paradigm == "offline":
            loss = self._update(1)
        else:
            stats = self._collect()
            train_returns = stats.episode_returns

            if self.config.paradigm == "on-policy":
                loss = self._update(1)
            elif len(self.buffer) >= self.config.batch_size * self.config.warmup_factor:
                loss = self._update(self.config.update_per_collect)
            else:
                loss = None

        eval_stats = None
        if self.test_venv is not None and self.iteration % self.config.eval_interval == 0:
            eval_stats = self._evaluate()

        return loss, train_returns, eval_stats

    def _run_epoch(self):
        epoch_steps = 0
        epoch_returns = []
        loss = None
        last_eval = None
        start_steps = self.env_steps if self.config.paradigm != "offline" else self.update_steps

        while epoch_steps < self.config.steps_per_epoch:
            iteration_loss, train_returns, eval_stats = self._iteration()

            loss = iteration_loss if iteration_loss is not None else loss
            epoch_returns.extend(train_returns)
            last_eval = eval_stats if eval_stats is not None else last_eval

            if self.config.paradigm == "offline":
                epoch_steps = self.update_steps - start_steps
            else:
                epoch_steps = self.env_steps - start_steps

            if self._stop(eval_stats):
                self.report.early_stop = True
                break

        train_mean = float(np.mean(epoch_returns)) if epoch_returns else None

        record = {
            "epoch": self.epoch,
            "env_steps": self.env_steps,
            "update_steps": self.update_steps,
            "episodes": self.episodes,
            "train_return_mean": train_mean,
            "loss": loss,
            "eval_return_mean": None if last_eval is None else last_eval.mean_return,
            "eval_return_std": None if last_eval is None else last_eval.std_return,
        }
        self.report.epochs.append(_json_safe(record))
        self._log({"train/return_mean": train_mean, "train/loss": loss})

        print_info(
            f"Epoch #{self.epoch}: env_step={self.env_steps}, update_step={self.update_steps}, "
            f"loss={loss}, eval={record['eval_return_mean']}, best={self.report.best_score}",
            self.verbose,
        )

    def run(self):
        if self.config.paradigm == "offline" and len(self.buffer) == 0:
            raise EmptyBuffer("The offline dataset is empty")

        start = time.perf_counter() - self.timers["total"]

        while self.epoch < self.config.max_epoch and not self.report.early_stop:
            self.epoch += 1
            self._run_epoch()

            checkpoint = self.config.checkpoint_every_epoch and self.config.checkpoint_path is not None

            if checkpoint:
                self._drain()

            self.timers["total"] = time.perf_counter() - start

            if checkpoint:
                self.save_checkpoint(self.config.checkpoint_path)

        self.timers["total"] = time.perf_counter() - start
        return self.finish()

    def finish(self):
        self.report.time_breakdown = time_breakdown(self.timers)
        self.report.env_steps = self.env_steps
        self.report.update_steps = self.update_steps
        self.report.episodes = self.episodes
        return self.report

    # checkpoints

    def manifest(self):
        self._drain()

        return {
            "counters": {
                "epoch": self.epoch,
                "iteration": self.iteration,
                "env_steps": self.env_steps,
                "update_steps": self.update_steps,
                "episodes": self.episodes,
            },
            "timers": self.timers,
            "stream": self.stream.state_dict(),
            "report": _json_safe(self.report.to_dict()),
            "collector": None if self.collector is None else self.collector.state_dict(),
            "env_states": None if self.collector is None else self.collector.venv.get_env_states(),
            "config": self.run_config,
        }

    def save_checkpoint(self, path):
        save_checkpoint(self, path)

    def load_checkpoint(self, path):
        load_checkpoint(self, path)


def time_breakdown(timers):
    """Percentages of the total run time; `others` takes the remainder so the four always sum to 100."""
    total = timers["total"]

    if total <= 0:
        return {"collecting": 0.0, "updating": 0.0, "evaluating": 0.0, "others": 100.0}

    shares = {key: 100.0 * timers[key] / total for key in ("collecting", "updating", "evaluating")}
    shares["others"] = max(100.0 - sum(shares.values()), 0.0)
    return shares


def checkpoint_to_bytes(trainer):
    writer = BinaryWriter(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    writer.json(trainer.manifest())
    writer.raw(policy_to_bytes(trainer.policy))

    # the dataset of an offline run is reloaded from its own file
    if trainer.config.paradigm == "off-policy":
        writer.u8(1)
        writer.raw(buffer_to_bytes(trainer.buffer))
    else:
        writer.u8(0)

    return writer.getvalue()


def read_checkpoint(path):
    """Manifest, policy and (off-policy) buffer of a checkpoint file, fully validated before anything is restored."""
    reader = BinaryReader(read_bytes(path), CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    manifest = reader.json()
    policy = policy_from_bytes(reader.raw())
    buffer = buffer_from_bytes(reader.raw()) if reader.u8() else None

    if not reader.at_end():
        raise FormatError("Trailing bytes after the checkpoint contents")

    return manifest, policy, buffer


def save_checkpoint(trainer, path):
    atomic_write(path, checkpoint_to_bytes(trainer))


def load_checkpoint(trainer, path):
    manifest, policy, buffer = read_checkpoint(path)

    for section in RESUME_SECTIONS:
        theirs = manifest["config"].get(section)
        ours = trainer.run_config.get(section)

        if theirs is not None and ours is not None and theirs != ours:
            raise ConfigMismatch(f"Checkpoint was written with a different '{section}' configuration")

    if policy.kind != trainer.policy.kind:
        raise ConfigMismatch(f"Checkpoint holds a '{policy.kind}' policy, the run uses '{trainer.policy.kind}'")

    trainer.policy.load_parameters(policy.parameters())
    trainer.policy.load_state(policy.state())

    # restored in place, the collector holds the same buffer object
    if buffer is not None:
        trainer.buffer.__dict__.update(buffer.__dict__)

    counters = manifest["counters"]
    trainer.epoch = counters["epoch"]
    trainer.iteration = counters["iteration"]
    trainer.env_steps = counters["env_steps"]
    trainer.update_steps = counters["update_steps"]
    trainer.episodes = counters["episodes"]
    trainer.timers = dict(manifest["timers"])
    trainer.stream = SeedStream.from_state_dict(manifest["stream"])

    report = manifest["report"]
    trainer.report = RunReport(**report)

    if trainer.collector is not None:
        trainer.collector.load_state_dict(manifest["collector"])
        trainer.collector.venv.set_env_states(manifest["env_states"])


def _trainer(policy, collector, buffer, config, **kwargs):
    return Trainer(policy, config, kwargs.pop("params"), collector=collector, buffer=buffer, **kwargs)


def train_on_policy(policy, collector, buffer, config, **kwargs):
    if config.paradigm != "on-policy":
        raise ConfigMismatch(f"train_on_policy called with paradigm '{config.paradigm}'")

    return _trainer(policy, collector, buffer, config, **kwargs).run()


def train_off_policy(policy, collector, buffer, config, **kwargs):
    if config.paradigm != "off-policy":
        raise ConfigMismatch(f"train_off_policy called with paradigm '{config.paradigm}'")

    return _trainer(policy, collector, buffer, config, **kwargs).run()


def train_offline(policy, buffer, config, **kwargs):
    if config.paradigm != "offline":
        raise ConfigMismatch(f"train_offline called with paradigm '{config.paradigm}'")

    return _trainer(policy, None, buffer, config, **kwargs).run()
