#!/usr/bin/env python
# -*- coding: utf-8 -*-

__license__ = "MIT"

import time

import numpy as np
import pytest

from rlforge.workflow.scripts.envs import make_env
from rlforge.workflow.scripts.utilities import (
    EnvInFlight,
    SeedStream,
    StepAfterDone,
    UnknownEnvId,
    ValidationError,
)
from rlforge.workflow.scripts.vector_env import AWAITING_RESET, READY, make_vector_env


def _factories(env_id, n_envs):
    return [lambda: make_env(env_id) for _ in range(n_envs)]


@pytest.fixture(params=["dummy", "pooled", "async"])
def mode(request):
    return request.param


def test_reset_all(mode):
    with make_vector_env(mode, _factories("chain:4", 4)) as venv:
        result = venv.reset()

        assert result.env_ids == [0, 1, 2, 3]
        assert result.obs.shape == (4, 4)


def test_reset_subset(mode):
    with make_vector_env(mode, _factories("chain:4", 4)) as venv:
        result = venv.reset([2])

        assert result.env_ids == [2]
        assert len(result) == 1


def test_reset_same_seeds_same_obs(mode):
    with make_vector_env(mode, _factories("cartpole", 2)) as venv:
        result = venv.reset(seeds=[5, 5])
        assert np.array_equal(result.obs[0], result.obs[1])


def test_reset_unknown_env(mode):
    with make_vector_env(mode, _factories("chain:4", 2)) as venv:
        with pytest.raises(UnknownEnvId):
            venv.reset([2])


def test_single_env_matches_direct_env(mode):
    env = make_env("cartpole")
    direct = [env.reset(3)]

    with make_vector_env(mode, _factories("cartpole", 1)) as venv:
        batched = [venv.reset(seeds=3).obs[0]]

        for action in [1, 0, 0, 1, 1]:
            direct.append(env.step(action).obs)
            batched.append(venv.step_sync({0: action}).obs[0])

    assert np.array_equal(np.array(direct), np.array(batched))


def test_same_seed_same_actions_identical_rows(mode):
    with make_vector_env(mode, _factories("cartpole", 4)) as venv:
        venv.reset(seeds=11)
        result = venv.step_sync({env_id: 1 for env_id in range(4)})

        assert all(np.array_equal(result.obs[0], row) for row in result.obs)


def test_step_sync_orders_by_env_id(mode):
    with make_vector_env(mode, _factories("chain:4", 3)) as venv:
        venv.reset()
        result = venv.step_sync({2: 1, 0: 0})

        assert result.env_ids == [0, 2]
        assert result.infos == [{"state": 0}, {"state": 1}]


def test_step_after_done_needs_reset(mode):
    with make_vector_env(mode, _factories("chain:2", 1)) as venv:
        venv.reset()
        assert venv.step_sync({0: 1}).done[0]

        with pytest.raises(StepAfterDone):
            venv.step_sync({0: 1})


def _trajectory(mode, steps=100):
    stream = SeedStream(21)
    rows = []

    with make_vector_env(mode, _factories("cartpole", 3)) as venv:
        venv.reset(seeds=[stream.next() for _ in range(3)])

        for _ in range(steps):
            rng = stream.generator()
            result = venv.step_sync({env_id: int(rng.integers(0, 2)) for env_id in range(3)})
            rows.append(result.obs.copy())

            done = [env_id for env_id, flag in zip(result.env_ids, result.done) if flag]
            if done:
                rows.append(venv.reset(done, [stream.next() for _ in done]).obs.copy())

    return rows


def test_dummy_and_pooled_are_bitwise_identical():
    dummy = _trajectory("dummy")
    pooled = _trajectory("pooled")

    assert len(dummy) == len(pooled)
    assert all(np.array_equal(a, b) for a, b in zip(dummy, pooled))


def test_submit_independent_envs(mode):
    with make_vector_env(mode, _factories("chain:4", 2)) as venv:
        venv.reset()
        venv.step_async_submit({1: 1})
        venv.step_async_submit({0: 1})

        assert sorted(venv.in_flight()) == [0, 1]
        result = venv.wait(min_ready=2)
        assert result.env_ids == [0, 1]


def test_double_submit(mode):
    with make_vector_env(mode, _factories("chain:4", 2)) as venv:
        venv.reset()
        venv.step_async_submit({0: 1})

        with pytest.raises(EnvInFlight):
            venv.step_async_submit({0: 1})

        with pytest.raises(EnvInFlight):
            venv.step_sync({0: 1})

        venv.wait()


def test_wait_min_ready_bounds(mode):
    with make_vector_env(mode, _factories("chain:4", 2)) as venv:
        venv.reset()

        with pytest.raises(ValidationError):
            venv.wait()

        venv.step_async_submit({0: 1})

        with pytest.raises(ValidationError):
            venv.wait(min_ready=2)

        venv.wait(min_ready=1)


def test_full_barrier_matches_step_sync():
    with make_vector_env("pooled", _factories("cartpole", 3)) as sync_venv:
        sync_venv.reset(seeds=[1, 2, 3])
        expected = sync_venv.step_sync({0: 1, 1: 0, 2: 1})

    with make_vector_env("async", _factories("cartpole", 3)) as venv:
        venv.reset(seeds=[1, 2, 3])
        venv.step_async_submit({0: 1, 1: 0, 2: 1})
        result = venv.wait(min_ready=3)

    assert result.env_ids == expected.env_ids
    assert np.array_equal(result.obs, expected.obs)


def test_exactly_once_delivery_under_random_delays():
    factories = [lambda: make_env("chain:1000+latency:0,5") for _ in range(4)]
    delivered = {env_id: 0 for env_id in range(4)}
    submitted = {env_id: 0 for env_id in range(4)}

    with make_vector_env("async", factories) as venv:
        venv.reset(seeds=[1, 2, 3, 4])
        idle = list(range(4))

        for _ in range(40):
            venv.step_async_submit({env_id: 0 for env_id in idle})
            for env_id in idle:
                submitted[env_id] += 1

            first = venv.wait(min_ready=1)
            assert len(set(first.env_ids)) == len(first.env_ids)

            for env_id in first.env_ids:
                delivered[env_id] += 1

            idle = list(first.env_ids)

        while venv.in_flight():
            result = venv.wait(min_ready=len(venv.in_flight()))
            for env_id in result.env_ids:
                delivered[env_id] += 1

    assert delivered == submitted


def test_wait_skips_the_straggler():
    factories = [lambda: make_env("chain:100")] * 3 + [lambda: make_env("chain:100+latency:500")]

    with make_vector_env("async", factories) as venv:
        venv.reset()
        venv.step_async_submit({env_id: 0 for env_id in range(4)})

        start = time.perf_counter()
        result = venv.wait(min_ready=1)

        # give the fast envs a moment in case only some of them were done at the first notice
        while len(result) < 3 and time.perf_counter() - start < 0.2:
            more = venv.wait(min_ready=1, timeout=0.05)
            result.env_ids.extend(more.env_ids)

        assert 3 not in result.env_ids
        assert sorted(result.env_ids) == [0, 1, 2]

        venv.wait(min_ready=1)


def test_wait_timeout_returns_partial():
    factories = [lambda: make_env("chain:100+latency:300")]

    with make_vector_env("async", factories) as venv:
        venv.reset()
        venv.step_async_submit({0: 0})

        result = venv.wait(min_ready=1, timeout=0.01)

        assert result.timed_out
        assert len(result) == 0
        assert venv.in_flight() == [0]

        assert venv.wait(min_ready=1).env_ids == [0]


def test_worker_exception_is_reraised(mode):
    with make_vector_env(mode, _factories("chain:2", 1)) as venv:
        venv.reset()
        venv.step_sync({0: 1})
        venv.states[0] = READY

        venv.step_async_submit({0: 1})

        with pytest.raises(StepAfterDone):
            venv.wait()


def test_failed_env_does_not_lose_sibling_results(mode):
    factories = [lambda: make_env("chain:2"), lambda: make_env("chain:5")]

    with make_vector_env(mode, factories) as venv:
        venv.reset()
        venv.step_sync({0: 1})
        venv.states[0] = READY

        venv.step_async_submit({0: 1, 1: 1})

        with pytest.raises(StepAfterDone):
            venv.wait(min_ready=2)

        assert venv.states[0] == AWAITING_RESET
        assert venv.in_flight() == [1]

        result = venv.wait(min_ready=1, timeout=1.0)

        assert result.env_ids == [1]
        assert not result.timed_out
        assert result.infos[0]["state"] == 1
        assert venv.in_flight() == []

        venv.reset([0])
        assert sorted(venv.step_sync({0: 1, 1: 1}).env_ids) == [0, 1]


def test_env_states_round_trip(mode):
    with make_vector_env(mode, _factories("cartpole+timelimit:30", 2)) as venv:
        venv.reset(seeds=[4, 5])
        venv.step_sync({0: 1, 1: 0})
        states = venv.get_env_states()
        expected = venv.step_sync({0: 0, 1: 1})

    with make_vector_env(mode, _factories("cartpole+timelimit:30", 2)) as other:
        other.set_env_states(states)
        result = other.step_sync({0: 0, 1: 1})

    assert np.array_equal(result.obs, expected.obs)


def test_unknown_mode():
    with pytest.raises(ValidationError):
        make_vector_env("threads", _factories("chain:2", 1))
