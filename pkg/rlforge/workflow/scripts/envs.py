#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Environment contract and the built-in desk-scale environments.
"""

__license__ = "MIT"

import math
import re
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from rlforge.workflow.scripts.utilities import SeedStream, StepAfterDone, ValidationError

# cart-pole constants
GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
FORCE_MAG = 10.0
TAU = 0.02
THETA_THRESHOLD = 12 * 2 * math.pi / 360
X_THRESHOLD = 2.4
INIT_STATE_BOUND = 0.05

# salt mixed into the reset seed of a latency wrapper, so its delays do not mirror the inner env's draws
LATENCY_SALT = 0x6C6174656E6379


@dataclass(frozen=True)
class Discrete:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"Discrete action space needs n >= 1, got {self.n}")


@dataclass(frozen=True)
class Continuous:
    low: tuple
    high: tuple

    def __post_init__(self):
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)

        if low.shape != high.shape or low.ndim != 1 or not np.all(low < high):
            raise ValidationError("Continuous action space needs low < high element-wise")

    @property
    def dim(self):
        return len(self.low)


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    action_space: Union[Discrete, Continuous]
    max_episode_steps: Optional[int] = None

    def __post_init__(self):
        if self.obs_dim < 1:
            raise ValidationError(f"obs_dim must be positive, got {self.obs_dim}")

        if self.max_episode_steps is not None and self.max_episode_steps < 1:
            raise ValidationError(f"max_episode_steps must be positive, got {self.max_episode_steps}")


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    truncated: bool = False
    info: dict = field(default_factory=dict)


class Env(object):
    """
    Single-threaded environment. After `done`, `step` must not be called before `reset`.
    """

    def __init__(self):
        self._done = True

    def spec(self):
        raise NotImplementedError

    def reset(self, seed=0):
        self._done = False
        return self._reset(seed)

    def step(self, action):
        if self._done:
            raise StepAfterDone(f"{type(self).__name__} stepped past an episode end, call reset() first")

        result = self._step(action)
        self._done = result.done
        return result

    def _reset(self, seed):
        raise NotImplementedError

    def _step(self, action):
        raise NotImplementedError

    def state_dict(self):
        return {"done": self._done}

    def load_state_dict(self, state):
        self._done = state["done"]

    def close(self):
        pass


class ChainMDP(Env):
    """
    Deterministic chain 0..L-1 with one-hot observations. Action 1 advances, action 0 stays; entering the last
    state pays 1.0 and terminates the episode.
    """

    def __init__(self, length):
        super().__init__()

        if length < 2:
            raise ValidationError(f"Chain length must be at least 2, got {length}")

        self.length = length
        self.state = 0

    def spec(self):
        return EnvSpec(obs_dim=self.length, action_space=Discrete(2))

    def _obs(self):
        obs = np.zeros(self.length, dtype=np.float64)
        obs[self.state] = 1.0
        return obs

    def _reset(self, seed):
        self.state = 0
        return self._obs()

    def _step(self, action):
        if int(action) == 1:
            self.state += 1

        done = self.state == self.length - 1
        return StepResult(obs=self._obs(), reward=1.0 if done else 0.0, done=done, info={"state": self.state})

    def true_value(self, gamma):
        """V(s_i) under the always-advance policy, for every non-terminal state."""
        return np.array([gamma ** (self.length - 2 - i) for i in range(self.length - 1)])

    def state_dict(self):
        return {**super().state_dict(), "state": self.state}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.state = int(state["state"])


class CartPole(Env):
    """
    Classic cart-pole balancing with Euler integration and a reward of 1.0 per step.
    """

    def __init__(self):
        super().__init__()
        self.state = np.zeros(4, dtype=np.float64)

    def spec(self):
        return EnvSpec(obs_dim=4, action_space=Discrete(2))

    def _reset(self, seed):
        rng = SeedStream(seed).generator()
        self.state = rng.uniform(-INIT_STATE_BOUND, INIT_STATE_BOUND, size=4)
        return self.state.copy()

    def _step(self, action):
        x, x_dot, theta, theta_dot = self.state
        force = FORCE_MAG if int(action) == 1 else -FORCE_MAG

        cos_theta = math.cos(theta)
        sin_theta = math.sin(theta)

        total_mass = CART_MASS + POLE_MASS
        pole_mass_length = POLE_MASS * POLE_HALF_LENGTH

        temp = (force + pole_mass_length * theta_dot ** 2 * sin_theta) / total_mass
        theta_acc = (GRAVITY * sin_theta - cos_theta * temp) / (
            POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_theta ** 2 / total_mass)
        )
        x_acc = temp - pole_mass_length * theta_acc * cos_theta / total_mass

        x = x + TAU * x_dot
        x_dot = x_dot + TAU * x_acc
        theta = theta + TAU * theta_dot
        theta_dot = theta_dot + TAU * theta_acc

        self.state = np.array([x, x_dot, theta, theta_dot], dtype=np.float64)
        done = bool(abs(x) > X_THRESHOLD or abs(theta) > THETA_THRESHOLD)

        return StepResult(obs=self.state.copy(), reward=1.0, done=done)

    def state_dict(self):
        return {**super().state_dict(), "state": [float(value) for value in self.state]}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.state = np.array(state["state"], dtype=np.float64)


class Wrapper(Env):
    def __init__(self, inner):
        super().__init__()
        self.inner = inner

    def spec(self):
        return self.inner.spec()

    def _reset(self, seed):
        return self.inner.reset(seed)

    def _step(self, action):
        return self.inner.step(action)

    def state_dict(self):
        return {**super().state_dict(), "inner": self.inner.state_dict()}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.inner.load_state_dict(state["inner"])

    def close(self):
        self.inner.close()


class TimeLimit(Wrapper):
    """
    Ends an episode with done=True, truncated=True once `max_steps` steps pass without a natural termination.
    """

    def __init__(self, inner, max_steps):
        super().__init__(inner)

        if max_steps < 1:
            raise ValidationError(f"Time limit must be positive, got {max_steps}")

        self.max_steps = max_steps
        self.elapsed = 0

    def spec(self):
        inner = self.inner.spec()
        limit = self.max_steps if inner.max_episode_steps is None else min(inner.max_episode_steps, self.max_steps)
        return EnvSpec(obs_dim=inner.obs_dim, action_space=inner.action_space, max_episode_steps=limit)

    def _reset(self, seed):
        self.elapsed = 0
        return self.inner.reset(seed)

    def _step(self, action):
        result = self.inner.step(action)
        self.elapsed += 1

        if self.elapsed >= self.max_steps and not result.done:
            result.done = True
            result.truncated = True

        return result

    def state_dict(self):
        return {**super().state_dict(), "elapsed": self.elapsed}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.elapsed = int(state["elapsed"])


@dataclass(frozen=True)
class ConstantDelay:
    ms: float

    def sample(self, stream):
        return self.ms


@dataclass(frozen=True)
class UniformDelay:
    low: float
    high: float

    def sample(self, stream):
        return self.low + (self.high - self.low) * stream.uniform()


class LatencyEnv(Wrapper):
    """
    Blocks every step for a sampled number of milliseconds; delays are reproducible per reset seed.
    """

    def __init__(self, inner, delay):
        super().__init__(inner)
        self.delay = delay
        self.stream = SeedStream(LATENCY_SALT)
        self.last_delay_ms = 0.0

    def _reset(self, seed):
        self.stream = SeedStream(int(seed) ^ LATENCY_SALT)
        return self.inner.reset(seed)

    def _step(self, action):
        self.last_delay_ms = self.delay.sample(self.stream)

        if self.last_delay_ms > 0:
            time.sleep(self.last_delay_ms / 1000.0)

        return self.inner.step(action)

    def state_dict(self):
        return {**super().state_dict(), "stream": self.stream.state_dict()}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.stream = SeedStream.from_state_dict(state["stream"])


def chain_mdp(length):
    return ChainMDP(length)


def cartpole():
    return CartPole()


def time_limit(inner, max_steps):
    return TimeLimit(inner, max_steps)


def latency_env(inner, delay):
    return LatencyEnv(inner, delay)


def parse_env_id(env_id):
    """
    Parse `chain:L` or `cartpole`, followed by `+`-joined wrappers `timelimit:N`, `latency:c` or `latency:a,b`.
    Returns the base tuple and the list of wrapper tuples.
    """
    parts = [part.strip() for part in str(env_id).split("+")]

    match = re.fullmatch(r"chain:(\d+)", parts[0])

    if match:
        base = ("chain", int(match.group(1)))
        if base[1] < 2:
            raise ValidationError(f"Chain length must be at least 2 in '{env_id}'")
    elif parts[0] == "cartpole":
        base = ("cartpole",)
    else:
        raise ValidationError(f"Unknown environment '{parts[0]}', expected `chain:L` or `cartpole`")

    wrappers = []

    for part in parts[1:]:
        limit = re.fullmatch(r"timelimit:(\d+)", part)
        latency = re.fullmatch(r"latency:(\d+(?:\.\d*)?)(?:,(\d+(?:\.\d*)?))?", part)

        if limit and int(limit.group(1)) >= 1:
            wrappers.append(("timelimit", int(limit.group(1))))
        elif latency:
            low = float(latency.group(1))
            high = float(latency.group(2)) if latency.group(2) is not None else None

            if high is not None and high < low:
                raise ValidationError(f"Latency range '{part}' must have a <= b")

            wrappers.append(("latency", low, high))
        else:
            raise ValidationError(f"Unknown environment wrapper '{part}'")

    return base, wrappers


def make_env(env_id):
    base, wrappers = parse_env_id(env_id)

    env = chain_mdp(base[1]) if base[0] == "chain" else cartpole()

    for wrapper in wrappers:
        if wrapper[0] == "timelimit":
            env = time_limit(env, wrapper[1])
        elif wrapper[2] is None:
            env = latency_env(env, ConstantDelay(wrapper[1]))
        else:
            env = latency_env(env, UniformDelay(wrapper[1], wrapper[2]))

    return env
