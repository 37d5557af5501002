#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Drives a vector env with a policy and writes the resulting transitions into a buffer.
"""

__license__ = "MIT"

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from rlforge.workflow.scripts.batch_store import Batch
from rlforge.workflow.scripts.utilities import EnvInFlight, SeedStream, TargetUnreachable, ValidationError

EVAL_MODES = ["greedy", "stochastic"]


@dataclass
class CollectStats:
    n_collected_steps: int = 0
    n_collected_episodes: int = 0
    episode_returns: list = field(default_factory=list)
    episode_lengths: list = field(default_factory=list)
    wall_time: float = 0.0
    per_env_step_counts: list = field(default_factory=list)

    @property
    def mean_return(self):
        return float(np.mean(self.episode_returns)) if self.episode_returns else float("nan")

    @property
    def std_return(self):
        return float(np.std(self.episode_returns)) if self.episode_returns else float("nan")

    def to_dict(self):
        return asdict(self)


def _check_target(n_step, n_episode):
    if (n_step is None) == (n_episode is None):
        raise ValidationError("Exactly one of n_step and n_episode must be given")

    target = n_step if n_step is not None else n_episode

    if target < 1:
        raise ValidationError(f"Collection target must be positive, got {target}")

    return target


def _info_batch(infos):
    """Numeric info entries as float64 columns; rows lacking a key get NaN."""
    keys = sorted({key for info in infos for key, value in info.items() if np.isscalar(value)})
    return {key: np.array([float(info.get(key, np.nan)) for info in infos], dtype=np.float64) for key in keys}


class Collector(object):
    """
    Keeps the last observation of every env between calls so trajectories continue across collections.
    Decisions and env resets draw their seeds from one counter-based stream.
    """

    def __init__(self, policy, venv, buffer=None, seed=0, max_steps_without_episode=100000):
        self.policy = policy
        self.venv = venv
        self.buffer = buffer
        self.stream = SeedStream(seed)
        self.max_steps_without_episode = max_steps_without_episode

        n_envs = venv.n_envs
        obs_dim = venv.spec().obs_dim

        self.obs = np.zeros((n_envs, obs_dim), dtype=np.float64)
        self.needs_reset = set(range(n_envs))
        self.ep_returns = np.zeros(n_envs, dtype=np.float64)
        self.ep_lens = np.zeros(n_envs, dtype=np.int64)
        self.in_flight = {}

    def _reset(self, env_ids):
        env_ids = sorted(env_ids)

        if not env_ids:
            return

        seeds = [self.stream.next() for _ in env_ids]
        result = self.venv.reset(env_ids, seeds)

        self.obs[result.env_ids] = result.obs
        self.ep_returns[env_ids] = 0.0
        self.ep_lens[env_ids] = 0
        self.needs_reset.difference_update(env_ids)

    def _act(self, env_ids, explore):
        obs = self.obs[env_ids]

        if explore:
            self.policy.observe(obs)

        return obs, self.policy.forward(obs, explore=explore, seed=self.stream.next()).act

    def _store(self, result, obs, acts, stats):
        """Write one StepBatch to the buffer and book-keep episodes; `obs`/`acts` are aligned with its rows."""
        env_ids = np.asarray(result.env_ids, dtype=np.int64)

        if self.buffer is not None and len(env_ids):
            entries = {
                "obs": obs,
                "act": acts,
                "rew": result.rewards,
                "done": result.done,
                "truncated": result.truncated,
                "obs_next": result.obs,
                "env_id": env_ids,
            }
            info = _info_batch(result.infos)

            if info:
                entries["info"] = info

            self.buffer.add(Batch(entries))

        finished = 0

        for row, env_id in enumerate(env_ids.tolist()):
            self.ep_returns[env_id] += result.rewards[row]
            self.ep_lens[env_id] += 1
            stats.per_env_step_counts[env_id] += 1
            stats.n_collected_steps += 1

            if result.done[row]:
                stats.episode_returns.append(float(self.ep_returns[env_id]))
                stats.episode_lengths.append(int(self.ep_lens[env_id]))
                stats.n_collected_episodes += 1
                self.needs_reset.add(env_id)
                finished += 1
            else:
                self.obs[env_id] = result.obs[row]

        return finished

    def _new_stats(self):
        return CollectStats(per_env_step_counts=[0] * self.venv.n_envs)

    def _reached(self, stats, n_step, n_episode):
        if n_step is not None:
            return stats.n_collected_steps >= n_step

        return stats.n_collected_episodes >= n_episode

    def _check_progress(self, steps_since_episode, n_episode):
        if n_episode is not None and steps_since_episode > self.max_steps_without_episode:
            raise TargetUnreachable(
                f"No episode finished in {self.max_steps_without_episode} steps, add a time limit to the env"
            )

    def collect(self, n_step=None, n_episode=None, explore=True):
        """
        Step every env in lock-step until `n_step` transitions or `n_episode` episodes are collected; stops at the
        first batch crossing the target. Finished envs are reset automatically.
        """
        _check_target(n_step, n_episode)
        start = time.perf_counter()
        stats = self._new_stats()

        self.drain(stats)
        steps_since_episode = 0

        while not self._reached(stats, n_step, n_episode):
            self._reset(self.needs_reset)

            env_ids = list(range(self.venv.n_envs))
            obs, acts = self._act(env_ids, explore)
            result = self.venv.step_sync({env_id: act for env_id, act in zip(env_ids, acts)})

            finished = self._store(result, obs, acts, stats)
            steps_since_episode = 0 if finished else steps_since_episode + len(env_ids)
            self._check_progress(steps_since_episode, n_episode)

        stats.wall_time = time.perf_counter() - start
        return stats

    def collect_async(self, n_step=None, n_episode=None, min_ready=1, explore=True, timeout=None):
        """
        Submit/wait loop: only the envs returned by `wait` act again, so fast envs are not held back by slow ones.
        Steps still in flight when the target is met stay in flight for the next call.
        """
        _check_target(n_step, n_episode)

        if min_ready < 1:
            raise ValidationError(f"min_ready must be positive, got {min_ready}")

        start = time.perf_counter()
        stats = self._new_stats()
        steps_since_episode = 0

        while not self._reached(stats, n_step, n_episode):
            self._reset(self.needs_reset - set(self.in_flight))

            idle = [env_id for env_id in range(self.venv.n_envs) if env_id not in self.in_flight]

            if idle:
                obs, acts = self._act(idle, explore)
                self.venv.step_async_submit({env_id: act for env_id, act in zip(idle, acts)})
                self.in_flight.update({env_id: (obs[i], acts[i]) for i, env_id in enumerate(idle)})

            result = self.venv.wait(min_ready=min(min_ready, len(self.in_flight)), timeout=timeout)
            finished = self._store_completed(result, stats)

            steps_since_episode = 0 if finished else steps_since_episode + len(result)
            self._check_progress(steps_since_episode, n_episode)

        stats.wall_time = time.perf_counter() - start
        return stats

    def _store_completed(self, result, stats):
        if not len(result):
            return 0

        submitted = [self.in_flight.pop(env_id) for env_id in result.env_ids]
        obs = np.array([entry[0] for entry in submitted], dtype=np.float64)
        acts = np.array([entry[1] for entry in submitted])
        return self._store(result, obs, acts, stats)

    def drain(self, stats=None):
        """Wait for every in-flight step and store its result."""
        stats = stats if stats is not None else self._new_stats()

        while self.in_flight:
            result = self.venv.wait(min_ready=len(self.in_flight))
            self._store_completed(result, stats)

        return stats

    def state_dict(self):
        if self.in_flight:
            raise EnvInFlight("Drain the in-flight steps before snapshotting the collector")

        return {
            "stream": self.stream.state_dict(),
            "obs": self.obs.tolist(),
            "needs_reset": sorted(self.needs_reset),
            "ep_returns": self.ep_returns.tolist(),
            "ep_lens": self.ep_lens.tolist(),
        }

    def load_state_dict(self, state):
        self.stream = SeedStream.from_state_dict(state["stream"])
        self.obs = np.array(state["obs"], dtype=np.float64).reshape(self.obs.shape)
        self.needs_reset = set(state["needs_reset"])
        self.ep_returns = np.array(state["ep_returns"], dtype=np.float64)
        self.ep_lens = np.array(state["ep_lens"], dtype=np.int64)
        self.in_flight = {}


def evaluate(policy, venv, n_episode, mode="greedy", seed=0, max_steps_without_episode=100000):
    """
    Run exactly `n_episode` episodes on freshly reset envs without touching any buffer or normalizer statistics.
    Env seeds derive from `seed` alone, so repeated evaluations see the same episodes.
    """
    if n_episode < 1:
        raise ValidationError(f"n_episode must be positive, got {n_episode}")

    if mode not in EVAL_MODES:
        raise ValidationError(f"Unknown eval mode '{mode}', expected one of {EVAL_MODES}")

    explore = mode == "stochastic"
    stream = SeedStream(seed)
    start = time.perf_counter()
    stats = CollectStats(per_env_step_counts=[0] * venv.n_envs)

    frozen = policy.normalizer.frozen
    policy.normalizer.frozen = True

    try:
        active = list(range(min(venv.n_envs, n_episode)))
        started = len(active)

        result = venv.reset(active, [stream.next() for _ in active])
        obs = np.zeros((venv.n_envs, venv.spec().obs_dim), dtype=np.float64)
        obs[active] = result.obs
        returns = np.zeros(venv.n_envs, dtype=np.float64)
        lengths = np.zeros(venv.n_envs, dtype=np.int64)
        steps_since_episode = 0

        while active:
            acts = policy.forward(obs[active], explore=explore, seed=stream.next()).act
            result = venv.step_sync({env_id: act for env_id, act in zip(active, acts)})

            finished = []

            for row, env_id in enumerate(result.env_ids):
                returns[env_id] += result.rewards[row]
                lengths[env_id] += 1
                stats.per_env_step_counts[env_id] += 1
                stats.n_collected_steps += 1

                if result.done[row]:
                    stats.episode_returns.append(float(returns[env_id]))
                    stats.episode_lengths.append(int(lengths[env_id]))
                    stats.n_collected_episodes += 1
                    finished.append(env_id)
                else:
                    obs[env_id] = result.obs[row]

            steps_since_episode = 0 if finished else steps_since_episode + len(active)

            if steps_since_episode > max_steps_without_episode:
                raise TargetUnreachable(f"No evaluation episode finished in {max_steps_without_episode} steps")

            restart = finished[: max(n_episode - started, 0)]
            started += len(restart)
            active = sorted((set(active) - set(finished)) | set(restart))

            if restart:
                result = venv.reset(restart, [stream.next() for _ in restart])
                obs[restart] = result.obs
                returns[restart] = 0.0
                lengths[restart] = 0
    finally:
        policy.normalizer.frozen = frozen

    stats.wall_time = time.perf_counter() - start
    return stats
