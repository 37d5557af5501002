#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Throughput of lock-step versus submit/wait collection over a fixed wall-time budget.
"""

__license__ = "MIT"

import time

import numpy as np
import psutil

from rlforge.workflow.scripts.envs import make_env
from rlforge.workflow.scripts.utilities import SeedStream, ValidationError, print_info
from rlforge.workflow.scripts.vector_env import make_vector_env


def env_factories(env_id, n_envs, overrides=None):
    """One factory per env; `overrides` maps an env index to a different env id (e.g. a slower latency)."""
    overrides = {int(key): value for key, value in (overrides or {}).items()}

    for index in overrides:
        if not 0 <= index < n_envs:
            raise ValidationError(f"env.overrides names env {index}, but there are only {n_envs} envs")

    return [lambda env_id=overrides.get(i, env_id): make_env(env_id) for i in range(n_envs)]


def _random_actions(env_ids, n_actions, stream):
    rng = stream.generator()
    return {env_id: int(action) for env_id, action in zip(env_ids, rng.integers(0, n_actions, size=len(env_ids)))}


def _run_sync(venv, duration, stream, n_actions):
    counts = np.zeros(venv.n_envs, dtype=np.int64)
    venv.reset(seeds=[stream.next() for _ in range(venv.n_envs)])
    deadline = time.perf_counter() + duration

    while time.perf_counter() < deadline:
        result = venv.step_sync(_random_actions(range(venv.n_envs), n_actions, stream))
        counts[result.env_ids] += 1

        done = [env_id for env_id, flag in zip(result.env_ids, result.done) if flag]
        if done:
            venv.reset(done, [stream.next() for _ in done])

    return counts


def _run_async(venv, duration, stream, n_actions, min_ready):
    counts = np.zeros(venv.n_envs, dtype=np.int64)
    venv.reset(seeds=[stream.next() for _ in range(venv.n_envs)])
    idle = list(range(venv.n_envs))
    deadline = time.perf_counter() + duration

    while True:
        if idle:
            venv.step_async_submit(_random_actions(idle, n_actions, stream))

        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            break

        pending = len(venv.in_flight())
        result = venv.wait(min_ready=min(min_ready, pending), timeout=remaining)
        counts[result.env_ids] += 1

        done = [env_id for env_id, flag in zip(result.env_ids, result.done) if flag]
        if done:
            venv.reset(done, [stream.next() for _ in done])

        idle = list(result.env_ids)

    if venv.in_flight():
        venv.wait(min_ready=len(venv.in_flight()))

    return counts


def _measure(mode, factories, duration, seed, min_ready):
    process = psutil.Process()
    cpu_before = process.cpu_times()

    with make_vector_env("pooled" if mode == "sync" else "async", factories) as venv:
        n_actions = venv.spec().action_space.n
        stream = SeedStream(seed)
        start = time.perf_counter()

        if mode == "sync":
            counts = _run_sync(venv, duration, stream, n_actions)
        else:
            counts = _run_async(venv, duration, stream, n_actions, min_ready)

        elapsed = time.perf_counter() - start

    cpu_after = process.cpu_times()
    total = int(counts.sum())

    return {
        "steps": total,
        "steps_per_sec": total / elapsed if elapsed > 0 else 0.0,
        "per_env_steps": counts.tolist(),
        "elapsed": elapsed,
        "cpu_seconds": (cpu_after.user - cpu_before.user) + (cpu_after.system - cpu_before.system),
    }


def bench(env_id, n_envs, duration, overrides=None, min_ready=1, seed=0, verbose=True):
    """
    Run lock-step (sync) and submit/wait (async) collection with uniformly random actions for `duration` seconds
    each. Returns the throughput report of both modes.
    """
    if duration <= 0:
        raise ValidationError(f"Bench duration must be positive, got {duration}")

    factories = env_factories(env_id, n_envs, overrides)
    report = {}

    for mode in ("sync", "async"):
        print_info(f"Benchmarking {mode} collection for {duration}s on {n_envs} envs", verbose)
        report[mode] = _measure(mode, factories, duration, seed, min_ready)

    return report
