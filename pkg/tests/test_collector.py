#!/usr/bin/env python
# -*- coding: utf-8 -*-

__license__ = "MIT"

import numpy as np
import pytest

from rlforge.workflow.scripts.collector import Collector, evaluate
from rlforge.workflow.scripts.envs import make_env
from rlforge.workflow.scripts.policy import LinearQPolicy, LinearSoftmaxPolicy
from rlforge.workflow.scripts.replay import ReplayBuffer, VectorReplayBuffer
from rlforge.workflow.scripts.utilities import TargetUnreachable, ValidationError
from rlforge.workflow.scripts.vector_env import make_vector_env


def _venv(env_id, n_envs, mode="dummy"):
    return make_vector_env(mode, [lambda: make_env(env_id) for _ in range(n_envs)])


def _advancing_policy(length):
    """Greedy Q policy that always picks action 1 on a chain."""
    policy = LinearQPolicy(length, 2, epsilon_start=0.0, epsilon_end=0.0)
    policy.weights[:, 1] = 1.0
    return policy


def test_collect_steps_on_chain():
    with _venv("chain:3", 2) as venv:
        buffer = VectorReplayBuffer(20, 2)
        stats = Collector(_advancing_policy(3), venv, buffer).collect(n_step=4)

    assert stats.n_collected_steps == 4
    assert stats.n_collected_episodes == 2
    assert stats.episode_returns == [1.0, 1.0]
    assert stats.episode_lengths == [2, 2]
    assert stats.per_env_step_counts == [2, 2]
    assert len(buffer) == 4


def test_collect_stops_at_first_batch_crossing_target():
    with _venv("chain:10", 3) as venv:
        stats = Collector(_advancing_policy(10), venv, VectorReplayBuffer(30, 3)).collect(n_step=4)

    assert stats.n_collected_steps == 6


def test_collect_episodes_resets_finished_envs():
    with _venv("chain:3", 2) as venv:
        buffer = VectorReplayBuffer(40, 2)
        stats = Collector(_advancing_policy(3), venv, buffer).collect(n_episode=5)

    assert stats.n_collected_episodes >= 5
    assert all(value == 1.0 for value in stats.episode_returns)
    assert len(buffer.tail_index()) == stats.n_collected_episodes


def test_trajectories_continue_across_calls():
    with _venv("chain:5", 1) as venv:
        buffer = ReplayBuffer(20)
        collector = Collector(_advancing_policy(5), venv, buffer)

        first = collector.collect(n_step=2)
        second = collector.collect(n_step=2)

    assert first.n_collected_episodes == 0
    assert second.episode_returns == [1.0]
    assert buffer.columns["obs"][buffer.sample_indices(0)].argmax(axis=1).tolist() == [0, 1, 2, 3]


def test_info_is_stored():
    with _venv("chain:4", 1) as venv:
        buffer = ReplayBuffer(10)
        Collector(_advancing_policy(4), venv, buffer).collect(n_step=2)

    assert buffer.get(buffer.sample_indices(0))["info.state"].tolist() == [1.0, 2.0]


def test_collect_target_validation():
    with _venv("chain:3", 1) as venv:
        collector = Collector(_advancing_policy(3), venv, ReplayBuffer(10))

        with pytest.raises(ValidationError):
            collector.collect()

        with pytest.raises(ValidationError):
            collector.collect(n_step=1, n_episode=1)

        with pytest.raises(ValidationError):
            collector.collect(n_step=0)


def test_unreachable_episode_target():
    policy = LinearQPolicy(5, 2, epsilon_start=0.0, epsilon_end=0.0)
    policy.weights[:, 0] = 1.0

    with _venv("chain:5", 1) as venv:
        collector = Collector(policy, venv, ReplayBuffer(10), max_steps_without_episode=50)

        with pytest.raises(TargetUnreachable):
            collector.collect(n_episode=1)


def test_collection_is_seed_deterministic():
    def run(mode):
        with _venv("cartpole", 3, mode) as venv:
            buffer = VectorReplayBuffer(300, 3)
            Collector(LinearSoftmaxPolicy(4, 2), venv, buffer, seed=5).collect(n_step=150)
            return buffer_to_rows(buffer)

    assert np.array_equal(run("dummy"), run("dummy"))
    assert np.array_equal(run("dummy"), run("pooled"))


def buffer_to_rows(buffer):
    rows = buffer.sample_indices(0)
    return np.column_stack([buffer.columns["obs"][rows], buffer.columns["act"][rows], buffer.columns["rew"][rows]])


@pytest.mark.parametrize("mode", ["dummy", "async"])
def test_collect_async_keeps_envs_consistent(mode):
    with _venv("chain:4", 3, mode) as venv:
        buffer = VectorReplayBuffer(60, 3)
        collector = Collector(_advancing_policy(4), venv, buffer)

        stats = collector.collect_async(n_episode=4, min_ready=1)
        collector.drain(stats)

    assert stats.n_collected_episodes >= 4
    assert all(value == 1.0 for value in stats.episode_returns)
    assert all(length == 3 for length in stats.episode_lengths)
    assert not collector.in_flight


def test_collect_async_with_straggler():
    factories = [lambda: make_env("chain:50")] * 3 + [lambda: make_env("chain:50+latency:20")]

    with make_vector_env("async", factories) as venv:
        policy = LinearQPolicy(50, 2, epsilon_start=0.0, epsilon_end=0.0)
        collector = Collector(policy, venv, VectorReplayBuffer(1000, 4))
        stats = collector.collect_async(n_step=300, min_ready=1)
        collector.drain(stats)

    fast = min(stats.per_env_step_counts[:3])
    assert fast >= 2 * stats.per_env_step_counts[3]


def test_state_dict_round_trip():
    with _venv("cartpole", 2) as venv:
        collector = Collector(LinearSoftmaxPolicy(4, 2), venv, VectorReplayBuffer(200, 2), seed=3)
        collector.collect(n_step=20)

        state = collector.state_dict()
        env_states = venv.get_env_states()
        expected = collector.collect(n_step=20).episode_returns, collector.obs.copy()

        collector.load_state_dict(state)
        venv.set_env_states(env_states)
        got = collector.collect(n_step=20).episode_returns, collector.obs.copy()

    assert expected[0] == got[0]
    assert np.array_equal(expected[1], got[1])


def test_evaluate_counts_episodes_exactly():
    with _venv("chain:4+timelimit:10", 3) as venv:
        stats = evaluate(_advancing_policy(4), venv, 10)

    assert stats.n_collected_episodes == 10
    assert len(stats.episode_returns) == 10
    assert stats.mean_return == 1.0
    assert stats.std_return == 0.0


def test_evaluate_stochastic_is_reproducible():
    policy = LinearSoftmaxPolicy(4, 2)

    def run():
        with _venv("cartpole", 2) as venv:
            return evaluate(policy, venv, 6, mode="stochastic", seed=9).episode_returns

    assert run() == run()


def test_evaluate_leaves_normalizer_untouched():
    policy = LinearSoftmaxPolicy(4, 2, obs_norm=True)

    with _venv("cartpole", 2) as venv:
        evaluate(policy, venv, 3, mode="stochastic")

    assert policy.normalizer.count == 0
    assert not policy.normalizer.frozen


def test_evaluate_validation():
    with _venv("chain:3", 1) as venv:
        with pytest.raises(ValidationError):
            evaluate(_advancing_policy(3), venv, 0)

        with pytest.raises(ValidationError):
            evaluate(_advancing_policy(3), venv, 1, mode="random")
