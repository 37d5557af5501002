#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Random add logs and list-of-episodes oracles shared by the buffer and return tests.
"""

__license__ = "MIT"

import numpy as np

from rlforge.workflow.scripts.batch_store import Batch
from rlforge.workflow.scripts.replay import VectorReplayBuffer
from rlforge.workflow.scripts.utilities import splitmix64

OBS_DIM = 2


def random_log(seed, n_envs=4, max_steps=64, truncate_prob=0.3, end_prob=0.15):
    """
    Interleaved add log of (env_id, step_id, reward, done, truncated). Episodes end naturally, by a time limit, or
    are left in progress at the end of the log.
    """
    rng = np.random.default_rng(splitmix64(seed))
    steps = rng.integers(1, max_steps + 1, size=n_envs)
    per_env = []

    for env_id in range(n_envs):
        rows = []
        for _ in range(steps[env_id]):
            done = bool(rng.random() < end_prob)
            truncated = done and bool(rng.random() < truncate_prob)
            rows.append((env_id, float(rng.normal()), done, truncated))
        per_env.append(rows)

    # interleave the envs in a random order, keeping each env's own order
    order = np.concatenate([np.full(len(rows), env_id) for env_id, rows in enumerate(per_env)])
    rng.shuffle(order)

    positions = [0] * n_envs
    log = []

    for step_id, env_id in enumerate(order.tolist()):
        _, reward, done, truncated = per_env[env_id][positions[env_id]]
        positions[env_id] += 1
        log.append((env_id, step_id, reward, done, truncated))

    return log


def fill(buffer, log):
    """Add every logged transition; obs[0] carries the step id so rows can be matched to the log."""
    for env_id, step_id, reward, done, truncated in log:
        obs = np.array([step_id, env_id], dtype=np.float64)
        buffer.add_transition(obs, step_id % 2, reward, done, truncated, obs + 0.5, env_id)

    return buffer


def random_buffer(seed, n_envs=4, max_steps=64, capacity=None):
    log = random_log(seed, n_envs, max_steps)
    capacity = capacity or max_steps
    return fill(VectorReplayBuffer(capacity * n_envs, n_envs), log), log


class EpisodeOracle(object):
    """
    Replays an add log into plain per-env lists, keeping the newest `capacity` rows of every env.
    """

    def __init__(self, log, n_envs, capacity):
        self.rows = [[] for _ in range(n_envs)]

        for entry in log:
            env_rows = self.rows[entry[0]]
            env_rows.append(entry)
            if len(env_rows) > capacity:
                env_rows.pop(0)

    def step_ids(self):
        """Step ids in sample(0) order: ascending env id, oldest first."""
        return [entry[1] for env_rows in self.rows for entry in env_rows]

    def tail_ids(self):
        tails = []

        for env_rows in self.rows:
            for k, entry in enumerate(env_rows):
                if entry[3] or k == len(env_rows) - 1:
                    tails.append(entry[1])

        return sorted(tails)

    def next_ids(self):
        mapping = {}

        for env_rows in self.rows:
            for k, entry in enumerate(env_rows):
                is_tail = entry[3] or k == len(env_rows) - 1
                mapping[entry[1]] = entry[1] if is_tail else env_rows[k + 1][1]

        return mapping

    def prev_ids(self):
        mapping = {}

        for env_rows in self.rows:
            for k, entry in enumerate(env_rows):
                is_head = k == 0 or env_rows[k - 1][3]
                mapping[entry[1]] = entry[1] if is_head else env_rows[k - 1][1]

        return mapping

    def segments(self):
        """Episode segments in sample(0) order, each a list of (reward, done, truncated)."""
        result = []

        for env_rows in self.rows:
            current = []
            for entry in env_rows:
                current.append((entry[2], entry[3], entry[4]))
                if entry[3]:
                    result.append(current)
                    current = []
            if current:
                result.append(current)

        return result


def oracle_gae(segments, v_s, v_s_next, gamma, lam):
    """Explicit sum over l of (gamma * lam)^l * delta_{t+l} inside every segment."""
    advantages = []
    k = 0

    for segment in segments:
        deltas = []
        for j, (reward, done, truncated) in enumerate(segment):
            mask = 0.0 if done and not truncated else 1.0
            deltas.append(reward + gamma * mask * v_s_next[k + j] - v_s[k + j])

        for t in range(len(segment)):
            advantages.append(sum((gamma * lam) ** l * deltas[t + l] for l in range(len(segment) - t)))

        k += len(segment)

    return np.array(advantages)


def oracle_nstep(segments, v_s_next, gamma, n):
    targets = []
    k = 0

    for segment in segments:
        for t in range(len(segment)):
            steps = min(n, len(segment) - t)
            value = sum(gamma ** j * segment[t + j][0] for j in range(steps))
            _, done, truncated = segment[t + steps - 1]
            mask = 0.0 if done and not truncated else 1.0
            targets.append(value + gamma ** steps * mask * v_s_next[k + t + steps - 1])

        k += len(segment)

    return np.array(targets)


def oracle_reward_to_go(segments, gamma):
    returns = []

    for segment in segments:
        rewards = [entry[0] for entry in segment]
        for t in range(len(segment)):
            returns.append(sum(gamma ** j * rewards[t + j] for j in range(len(segment) - t)))

    return np.array(returns)


def transition_batch(env_ids, obs, acts, rewards, done, truncated=None, obs_next=None):
    size = len(env_ids)
    obs = np.asarray(obs, dtype=np.float64).reshape(size, -1)

    return Batch(
        obs=obs,
        act=np.asarray(acts, dtype=np.int64),
        rew=np.asarray(rewards, dtype=np.float64),
        done=np.asarray(done, dtype=bool),
        truncated=np.zeros(size, dtype=bool) if truncated is None else np.asarray(truncated, dtype=bool),
        obs_next=obs + 1.0 if obs_next is None else np.asarray(obs_next, dtype=np.float64).reshape(size, -1),
        env_id=np.asarray(env_ids, dtype=np.int64),
    )
