#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Batched execution of several environments in dummy (sequential), pooled (one worker thread per env) and async modes.
"""

__license__ = "MIT"

import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from rlforge.workflow.scripts.utilities import (
    EnvInFlight,
    StepAfterDone,
    UnknownEnvId,
    ValidationError,
)

ENV_MODES = ["dummy", "pooled", "async"]

AWAITING_RESET = "awaiting-reset"
READY = "ready"
IN_FLIGHT = "in-flight"


def _stack_obs(observations):
    if len(observations) == 0:
        return np.zeros((0, 0), dtype=np.float64)

    return np.array(observations, dtype=np.float64).reshape(len(observations), -1)


@dataclass
class StepBatch:
    env_ids: list
    obs: np.ndarray
    rewards: np.ndarray
    done: np.ndarray
    truncated: np.ndarray
    infos: list = field(default_factory=list)
    timed_out: bool = False

    def __len__(self):
        return len(self.env_ids)

    @classmethod
    def from_results(cls, env_ids, results, timed_out=False):
        return cls(
            env_ids=list(env_ids),
            obs=_stack_obs([result.obs for result in results]),
            rewards=np.array([result.reward for result in results], dtype=np.float64),
            done=np.array([result.done for result in results], dtype=bool),
            truncated=np.array([result.truncated for result in results], dtype=bool),
            infos=[dict(result.info) for result in results],
            timed_out=timed_out,
        )

    @classmethod
    def from_reset(cls, env_ids, observations):
        size = len(env_ids)
        return cls(
            env_ids=list(env_ids),
            obs=_stack_obs(observations),
            rewards=np.zeros(size, dtype=np.float64),
            done=np.zeros(size, dtype=bool),
            truncated=np.zeros(size, dtype=bool),
            infos=[{} for _ in range(size)],
        )


class VectorEnv(object):
    """
    Dummy vector env: every call runs the envs one after the other in the calling thread. Async submissions are
    executed at submit time and handed out by the next `wait`.
    """

    mode = "dummy"

    def __init__(self, factories):
        if not factories:
            raise ValidationError("A vector env needs at least one environment")

        self.envs = [factory() for factory in factories]
        self.n_envs = len(self.envs)
        self.states = [AWAITING_RESET] * self.n_envs
        self._completed = {}
        # successful results held back by a wait that raised
        self._held = {}

    def spec(self):
        return self.envs[0].spec()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _check_ids(self, env_ids):
        env_ids = [int(env_id) for env_id in env_ids]

        if len(set(env_ids)) != len(env_ids):
            raise ValidationError(f"Env ids must be distinct, got {env_ids}")

        for env_id in env_ids:
            if not 0 <= env_id < self.n_envs:
                raise UnknownEnvId(f"Env id {env_id} is outside [0, {self.n_envs})")

        return env_ids

    def _check_steppable(self, env_ids):
        for env_id in env_ids:
            if self.states[env_id] == IN_FLIGHT:
                raise EnvInFlight(f"Env {env_id} already has a step in flight")

            if self.states[env_id] == AWAITING_RESET:
                raise StepAfterDone(f"Env {env_id} must be reset before it can step")

    def _after_step(self, env_id, result):
        self.states[env_id] = AWAITING_RESET if result.done else READY

    def reset(self, ids=None, seeds=0):
        """
        Reset the listed envs (default: all). `seeds` is either one seed for every listed env or one per env.
        """
        env_ids = self._check_ids(range(self.n_envs) if ids is None else ids)

        if np.isscalar(seeds):
            seeds = [int(seeds)] * len(env_ids)
        elif len(seeds) != len(env_ids):
            raise ValidationError(f"Got {len(seeds)} seeds for {len(env_ids)} envs")

        for env_id in env_ids:
            if self.states[env_id] == IN_FLIGHT:
                raise EnvInFlight(f"Env {env_id} cannot be reset while a step is in flight")

        observations = self._reset(env_ids, [int(seed) for seed in seeds])

        for env_id in env_ids:
            self.states[env_id] = READY

        return StepBatch.from_reset(env_ids, observations)

    def _reset(self, env_ids, seeds):
        return [self.envs[env_id].reset(seed) for env_id, seed in zip(env_ids, seeds)]

    def step_sync(self, actions):
        """
        Step every env keyed in `actions` and block until all of them finish. Rows are in ascending env id order.
        """
        env_ids = sorted(self._check_ids(actions.keys()))
        self._check_steppable(env_ids)

        results = self._step(env_ids, [actions[env_id] for env_id in env_ids])

        for env_id, result in zip(env_ids, results):
            self._after_step(env_id, result)

        return StepBatch.from_results(env_ids, results)

    def _step(self, env_ids, actions):
        return [self.envs[env_id].step(action) for env_id, action in zip(env_ids, actions)]

    def step_async_submit(self, actions):
        env_ids = self._check_ids(actions.keys())
        self._check_steppable(env_ids)

        for env_id in env_ids:
            self.states[env_id] = IN_FLIGHT
            self._submit(env_id, actions[env_id])

        return len(env_ids)

    def _submit(self, env_id, action):
        try:
            self._completed[env_id] = self.envs[env_id].step(action)
        except Exception as error:
            self._completed[env_id] = error

    def in_flight(self):
        return [env_id for env_id, state in enumerate(self.states) if state == IN_FLIGHT]

    def wait(self, min_ready=1, timeout=None):
        """
        Block until at least `min_ready` in-flight envs finished and return every result completed by then.
        On timeout, the results completed so far are returned with `timed_out` set.

        If an env raised, every failed env is left awaiting a reset and the first error (by env id) is re-raised.
        The successful results of that wait stay in flight and are handed out by the next `wait`.
        """
        pending = len(self.in_flight())

        if min_ready < 1 or min_ready > pending:
            raise ValidationError(f"min_ready must lie in [1, {pending}] (the number of in-flight envs)")

        held, self._held = self._held, {}
        completed, timed_out = self._collect(max(min_ready - len(held), 0), timeout)
        completed.update(held)

        failed = sorted(env_id for env_id, result in completed.items() if isinstance(result, Exception))

        if failed:
            for env_id in failed:
                self.states[env_id] = AWAITING_RESET

            self._held = {env_id: result for env_id, result in completed.items() if env_id not in failed}
            raise completed[failed[0]]

        env_ids = sorted(completed)
        results = [completed[env_id] for env_id in env_ids]

        for env_id, result in zip(env_ids, results):
            self._after_step(env_id, result)

        return StepBatch.from_results(env_ids, results, timed_out=timed_out)

    def _collect(self, min_ready, timeout):
        completed, self._completed = self._completed, {}
        return completed, False

    def get_env_states(self):
        if self.in_flight():
            raise EnvInFlight("Cannot snapshot envs while steps are in flight")

        return [env.state_dict() for env in self.envs]

    def set_env_states(self, states):
        if len(states) != self.n_envs:
            raise ValidationError(f"Got {len(states)} env states for {self.n_envs} envs")

        if self.in_flight():
            raise EnvInFlight("Cannot restore envs while steps are in flight")

        for env, state in zip(self.envs, states):
            env.load_state_dict(state)

        self.states = [AWAITING_RESET if state["done"] else READY for state in states]

    def close(self):
        for env in self.envs:
            env.close()


def _worker(env, requests, responses, notices, env_id):
    while True:
        command, payload, notify = requests.get()

        if command == "close":
            env.close()
            break

        try:
            if command == "reset":
                response = env.reset(payload)
            elif command == "step":
                response = env.step(payload)
            elif command == "get_state":
                response = env.state_dict()
            else:
                env.load_state_dict(payload)
                response = None
        except Exception as error:
            response = error

        responses.put(response)

        if notify:
            notices.put(env_id)


class PooledVectorEnv(VectorEnv):
    """
    One worker thread per env. Every worker owns a request/response queue pair; async completions are also
    announced on a shared notice queue so `wait` can take them in completion order.
    """

    mode = "pooled"

    def __init__(self, factories):
        super().__init__(factories)

        self.requests = [queue.Queue() for _ in range(self.n_envs)]
        self.responses = [queue.Queue() for _ in range(self.n_envs)]
        self.notices = queue.Queue()

        self.workers = [
            threading.Thread(
                target=_worker,
                args=(env, self.requests[env_id], self.responses[env_id], self.notices, env_id),
                name=f"rlforge-env-{env_id}",
                daemon=True,
            )
            for env_id, env in enumerate(self.envs)
        ]

        for worker in self.workers:
            worker.start()

        self.closed = False

    def _call(self, env_ids, command, payloads):
        for env_id, payload in zip(env_ids, payloads):
            self.requests[env_id].put((command, payload, False))

        results = [self.responses[env_id].get() for env_id in env_ids]

        for result in results:
            if isinstance(result, Exception):
                raise result

        return results

    def _reset(self, env_ids, seeds):
        return self._call(env_ids, "reset", seeds)

    def _step(self, env_ids, actions):
        try:
            return self._call(env_ids, "step", actions)
        except Exception:
            for env_id in env_ids:
                self.states[env_id] = AWAITING_RESET
            raise

    def _submit(self, env_id, action):
        self.requests[env_id].put(("step", action, True))

    def _collect(self, min_ready, timeout):
        deadline = None if timeout is None else time.monotonic() + timeout
        completed = {}
        timed_out = False

        while len(completed) < min_ready:
            remaining = None if deadline is None else max(deadline - time.monotonic(), 0.0)

            try:
                env_id = self.notices.get(timeout=remaining)
            except queue.Empty:
                timed_out = True
                break

            completed[env_id] = self.responses[env_id].get()

        # everything else that finished in the meantime
        while True:
            try:
                env_id = self.notices.get_nowait()
            except queue.Empty:
                break

            completed[env_id] = self.responses[env_id].get()

        return completed, timed_out

    def get_env_states(self):
        if self.in_flight():
            raise EnvInFlight("Cannot snapshot envs while steps are in flight")

        return self._call(range(self.n_envs), "get_state", [None] * self.n_envs)

    def set_env_states(self, states):
        if len(states) != self.n_envs:
            raise ValidationError(f"Got {len(states)} env states for {self.n_envs} envs")

        if self.in_flight():
            raise EnvInFlight("Cannot restore envs while steps are in flight")

        self._call(range(self.n_envs), "set_state", states)
        self.states = [AWAITING_RESET if state["done"] else READY for state in states]

    def close(self):
        if self.closed:
            return

        for requests in self.requests:
            requests.put(("close", None, False))

        for worker in self.workers:
            worker.join()

        self.closed = True


class AsyncVectorEnv(PooledVectorEnv):
    """
    Pooled workers driven through submit/wait, so a slow env does not hold back the others.
    """

    mode = "async"


def make_vector_env(mode, factories):
    if mode == "dummy":
        return VectorEnv(factories)
    elif mode == "pooled":
        return PooledVectorEnv(factories)
    elif mode == "async":
        return AsyncVectorEnv(factories)

    raise ValidationError(f"Unknown env mode '{mode}', expected one of {ENV_MODES}")
