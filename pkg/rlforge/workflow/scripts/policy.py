#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Linear policies with closed-form gradients, observation normalization and action scaling.
"""

__license__ = "MIT"

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from rlforge.workflow.scripts.envs import Continuous, Discrete
from rlforge.workflow.scripts.returns import nstep_return, reward_to_go
from rlforge.workflow.scripts.serialization import BinaryReader, BinaryWriter, atomic_write, read_bytes
from rlforge.workflow.scripts.utilities import (
    DiscreteSpaceError,
    EmptyBuffer,
    FormatError,
    ValidationError,
    splitmix64,
)

POLICY_MAGIC = b"TSPL"
POLICY_VERSION = 1

POLICY_KINDS = ["reinforce", "linear_q", "bc"]
POLICY_MODES = {"reinforce": "on-policy", "linear_q": "off-policy", "bc": "offline"}

NORM_EPS = 1e-8
PRIORITY_EPS = 1e-6


class ObsNormalizer(object):
    """
    Running mean and variance of observations, merged batch by batch. Statistics only move while not frozen.
    """

    def __init__(self, obs_dim, clip=10.0, enabled=True):
        self.obs_dim = obs_dim
        self.clip = float(clip)
        self.enabled = enabled
        self.frozen = False
        self.count = 0.0
        self.mean = np.zeros(obs_dim, dtype=np.float64)
        self.var = np.ones(obs_dim, dtype=np.float64)

    def update(self, obs):
        if not self.enabled or self.frozen:
            return

        obs = np.asarray(obs, dtype=np.float64).reshape(-1, self.obs_dim)

        if obs.shape[0] == 0:
            return

        batch_count = obs.shape[0]
        batch_mean = obs.mean(axis=0)
        batch_var = obs.var(axis=0)

        if self.count == 0:
            self.mean, self.var, self.count = batch_mean, batch_var, float(batch_count)
            return

        total = self.count + batch_count
        delta = batch_mean - self.mean
        m2 = self.var * self.count + batch_var * batch_count + delta ** 2 * self.count * batch_count / total

        self.mean = self.mean + delta * batch_count / total
        self.var = m2 / total
        self.count = total

    def normalize(self, obs):
        obs = np.asarray(obs, dtype=np.float64)

        if not self.enabled:
            return obs

        return np.clip((obs - self.mean) / np.sqrt(self.var + NORM_EPS), -self.clip, self.clip)

    def blocks(self):
        return {"norm_mean": self.mean, "norm_var": self.var, "norm_count": np.array([self.count])}

    def load_blocks(self, blocks):
        self.mean = blocks["norm_mean"].copy()
        self.var = blocks["norm_var"].copy()
        self.count = float(blocks["norm_count"][0])


class ActionScaler(object):
    """
    Affine map between [-1, 1]^d and the [low, high] box of a continuous action space.
    """

    def __init__(self, action_space):
        if not isinstance(action_space, Continuous):
            raise DiscreteSpaceError("Action scaling needs a continuous action space")

        self.low = np.asarray(action_space.low, dtype=np.float64)
        self.high = np.asarray(action_space.high, dtype=np.float64)

    def scale(self, action):
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        return self.low + (action + 1.0) / 2.0 * (self.high - self.low)

    def unscale(self, action):
        action = np.asarray(action, dtype=np.float64)
        return 2.0 * (action - self.low) / (self.high - self.low) - 1.0


def scale_action(action, spec):
    return ActionScaler(spec.action_space).scale(action)


def unscale_action(action, spec):
    return ActionScaler(spec.action_space).unscale(action)


@dataclass
class PolicyOutput:
    act: np.ndarray
    log_prob: Optional[np.ndarray] = None
    value: Optional[np.ndarray] = None


def reinforce_objective(weights, features, actions, returns):
    """sum_t log pi(a_t | s_t) * R_t for a linear-softmax policy."""
    logits = features @ weights
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    return float(np.sum(log_probs[np.arange(len(actions)), actions] * returns))


def reinforce_gradient(weights, features, actions, returns):
    """Gradient of `reinforce_objective` with respect to the weights."""
    probs = softmax(features @ weights, axis=1)
    onehot = np.eye(weights.shape[1])[actions]
    return features.T @ ((onehot - probs) * returns[:, None])


def bc_loss(weights, features, actions):
    """Mean cross-entropy between the policy and the stored actions."""
    return -reinforce_objective(weights, features, actions, np.ones(len(actions))) / len(actions)


def bc_gradient(weights, features, actions):
    return -reinforce_gradient(weights, features, actions, np.ones(len(actions))) / len(actions)


def q_loss(weights, features, actions, targets, importance=None):
    """Importance-weighted mean of 0.5 * (Q(s, a) - G)^2 for a linear Q function."""
    importance = np.ones(len(actions)) if importance is None else importance
    td = (features @ weights)[np.arange(len(actions)), actions] - targets
    return float(np.mean(importance * td ** 2) / 2.0)


def q_gradient(weights, features, actions, targets, importance=None):
    importance = np.ones(len(actions)) if importance is None else importance
    td = (features @ weights)[np.arange(len(actions)), actions] - targets
    onehot = np.eye(weights.shape[1])[actions]
    return features.T @ (onehot * (importance * td)[:, None]) / len(actions)


def standardize(values):
    return (values - values.mean()) / (values.std() + NORM_EPS)


class BasePolicy(object):
    """
    Policies map observation batches to actions and update their own parameters from a buffer.
    """

    kind = None

    def __init__(self, obs_dim, n_actions, learning_rate, obs_norm=False, obs_clip=10.0):
        if learning_rate <= 0:
            raise ValidationError(f"Learning rate must be positive, got {learning_rate}")

        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.learning_rate = float(learning_rate)
        self.normalizer = ObsNormalizer(obs_dim, obs_clip, enabled=obs_norm)
        self.weights = np.zeros((obs_dim, n_actions), dtype=np.float64)
        self.n_updates = 0

    @property
    def mode(self):
        return POLICY_MODES[self.kind]

    def features(self, obs):
        return self.normalizer.normalize(np.asarray(obs, dtype=np.float64).reshape(-1, self.obs_dim))

    def observe(self, obs):
        self.normalizer.update(obs)

    def forward(self, obs, explore=False, seed=0):
        raise NotImplementedError

    def update(self, buffer, batch_size, params, seed=0):
        raise NotImplementedError

    def hyperparameters(self):
        return {
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "learning_rate": self.learning_rate,
            "obs_norm": self.normalizer.enabled,
            "obs_clip": self.normalizer.clip,
        }

    def parameters(self):
        return {"weights": self.weights, **self.normalizer.blocks()}

    def load_parameters(self, blocks):
        weights = blocks["weights"]

        if weights.shape != self.weights.shape:
            raise FormatError(f"Policy weights have shape {weights.shape}, expected {self.weights.shape}")

        self.weights = weights.copy()
        self.normalizer.load_blocks(blocks)

    def state(self):
        return {"n_updates": self.n_updates}

    def load_state(self, state):
        self.n_updates = int(state["n_updates"])

    def save(self, path):
        save_policy(self, path)


class LinearSoftmaxPolicy(BasePolicy):
    """
    pi(a | s) = softmax(W^T x(s)). Trained by REINFORCE on-policy, or by behavior cloning offline.
    """

    kind = "reinforce"

    def __init__(
        self,
        obs_dim,
        n_actions,
        learning_rate=0.01,
        baseline="mean",
        normalize_returns=True,
        obs_norm=False,
        obs_clip=10.0,
        offline=False,
    ):
        super().__init__(obs_dim, n_actions, learning_rate, obs_norm, obs_clip)

        if baseline not in ("none", "mean"):
            raise ValidationError(f"Unknown baseline '{baseline}', expected 'none' or 'mean'")

        self.baseline = baseline
        self.normalize_returns = normalize_returns
        self.kind = "bc" if offline else "reinforce"

    def probs(self, obs):
        return softmax(self.features(obs) @ self.weights, axis=1)

    def forward(self, obs, explore=False, seed=0):
        probs = self.probs(obs)

        if explore:
            rng = np.random.default_rng(splitmix64(seed))
            cumulative = np.cumsum(probs, axis=1)
            draws = rng.random(probs.shape[0])[:, None]
            act = np.minimum((draws >= cumulative).sum(axis=1), self.n_actions - 1)
        else:
            act = np.argmax(probs, axis=1)

        log_prob = np.log(probs[np.arange(len(act)), act])
        return PolicyOutput(act=act.astype(np.int64), log_prob=log_prob)

    def reinforce_update(self, buffer, params):
        """One ascent step on sum_t log pi(a_t | s_t) * R_t over every stored row, averaged per row."""
        if len(buffer) == 0:
            raise EmptyBuffer("REINFORCE needs collected episodes")

        rows = buffer.sample_indices(0)
        returns = reward_to_go(buffer, params)

        if self.baseline == "mean":
            returns = returns - returns.mean()

        if self.normalize_returns:
            returns = standardize(returns)

        features = self.features(buffer.columns["obs"][rows])
        actions = buffer.columns["act"][rows].astype(np.int64)

        gradient = reinforce_gradient(self.weights, features, actions, returns)
        objective = reinforce_objective(self.weights, features, actions, returns)

        self.weights = self.weights + self.learning_rate * gradient / len(rows)
        self.n_updates += 1

        return {"loss": -objective / len(rows), "grad_norm": float(np.linalg.norm(gradient))}

    def offline_bc_update(self, buffer, batch_size, seed=0):
        """One cross-entropy descent step toward the stored actions; `batch_size` 0 means the full dataset."""
        if len(buffer) == 0:
            raise EmptyBuffer("Behavior cloning needs a dataset")

        rows = buffer.sample_indices(batch_size, seed)
        features = self.features(buffer.columns["obs"][rows])
        actions = buffer.columns["act"][rows].astype(np.int64)

        loss = bc_loss(self.weights, features, actions)
        self.weights = self.weights - self.learning_rate * bc_gradient(self.weights, features, actions)
        self.n_updates += 1

        return {"loss": loss}

    def update(self, buffer, batch_size, params, seed=0):
        if self.kind == "bc":
            return self.offline_bc_update(buffer, batch_size, seed)

        return self.reinforce_update(buffer, params)

    def hyperparameters(self):
        return {
            **super().hyperparameters(),
            "baseline": self.baseline,
            "normalize_returns": self.normalize_returns,
            "offline": self.kind == "bc",
        }


class LinearQPolicy(BasePolicy):
    """
    Q(s, .) = W^T x(s) with epsilon-greedy exploration, n-step targets and a hard-synced target copy of W.
    """

    kind = "linear_q"

    def __init__(
        self,
        obs_dim,
        n_actions,
        learning_rate=0.1,
        epsilon_start=1.0,
        epsilon_end=0.05,
        epsilon_decay_steps=10000,
        eps_test=0.0,
        target_sync_interval=50,
        obs_norm=False,
        obs_clip=10.0,
    ):
        super().__init__(obs_dim, n_actions, learning_rate, obs_norm, obs_clip)

        for name, value in (("epsilon_start", epsilon_start), ("epsilon_end", epsilon_end), ("eps_test", eps_test)):
            if not 0 <= value <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")

        if target_sync_interval < 1 or epsilon_decay_steps < 0:
            raise ValidationError("target_sync_interval must be positive and epsilon_decay_steps non-negative")

        self.epsilon_start = float(epsilon_start)
        self.epsilon_end = float(epsilon_end)
        self.epsilon_decay_steps = int(epsilon_decay_steps)
        self.eps_test = float(eps_test)
        self.target_sync_interval = int(target_sync_interval)
        self.epsilon = self.epsilon_start
        self.target_weights = self.weights.copy()

    def set_epsilon(self, env_steps):
        """Linear decay from epsilon_start to epsilon_end over epsilon_decay_steps env steps."""
        if self.epsilon_decay_steps == 0:
            self.epsilon = self.epsilon_end
        else:
            progress = min(env_steps / self.epsilon_decay_steps, 1.0)
            self.epsilon = self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress

        return self.epsilon

    def q_values(self, obs, target=False):
        return self.features(obs) @ (self.target_weights if target else self.weights)

    def forward(self, obs, explore=False, seed=0):
        q_values = self.q_values(obs)
        act = np.argmax(q_values, axis=1)
        epsilon = self.epsilon if explore else self.eps_test

        if epsilon > 0:
            rng = np.random.default_rng(splitmix64(seed))
            explore_mask = rng.random(len(act)) < epsilon
            random_act = rng.integers(0, self.n_actions, size=len(act))
            act = np.where(explore_mask, random_act, act)

        return PolicyOutput(act=act.astype(np.int64), value=q_values[np.arange(len(act)), act])

    def qlearn_update(self, buffer, batch_size, params, seed=0):
        """
        One semi-gradient step on 0.5 * (Q(s, a) - G)^2 with n-step targets G bootstrapped from the target weights.
        With a prioritized sampler attached, the loss is importance weighted and priorities are refreshed.
        """
        if len(buffer) == 0:
            raise EmptyBuffer("Q-learning needs collected transitions")

        if buffer.sampler is not None:
            _, rows, importance = buffer.prioritized_sample(batch_size, seed)
        else:
            rows = buffer.sample_indices(batch_size, seed)
            importance = np.ones(len(rows))

        def target_value(indices):
            return self.q_values(buffer.columns["obs_next"][indices], target=True).max(axis=1)

        targets = nstep_return(buffer, target_value, params, indices=rows)
        features = self.features(buffer.columns["obs"][rows])
        actions = buffer.columns["act"][rows].astype(np.int64)

        td = (features @ self.weights)[np.arange(len(rows)), actions] - targets
        loss = q_loss(self.weights, features, actions, targets, importance)
        gradient = q_gradient(self.weights, features, actions, targets, importance)
        self.weights = self.weights - self.learning_rate * gradient

        if buffer.sampler is not None:
            buffer.update_priority(rows, np.abs(td) + PRIORITY_EPS)

        self.n_updates += 1

        if self.n_updates % self.target_sync_interval == 0:
            self.sync_target()

        return {"loss": loss, "td_abs": float(np.mean(np.abs(td)))}

    def sync_target(self):
        self.target_weights = self.weights.copy()

    def update(self, buffer, batch_size, params, seed=0):
        return self.qlearn_update(buffer, batch_size, params, seed)

    def hyperparameters(self):
        return {
            **super().hyperparameters(),
            "epsilon_start": self.epsilon_start,
            "epsilon_end": self.epsilon_end,
            "epsilon_decay_steps": self.epsilon_decay_steps,
            "eps_test": self.eps_test,
            "target_sync_interval": self.target_sync_interval,
        }

    def parameters(self):
        return {**super().parameters(), "target_weights": self.target_weights}

    def load_parameters(self, blocks):
        super().load_parameters(blocks)
        self.target_weights = blocks["target_weights"].copy()

    def state(self):
        return {**super().state(), "epsilon": self.epsilon}

    def load_state(self, state):
        super().load_state(state)
        self.epsilon = float(state["epsilon"])


def make_policy(config, spec):
    """Build the policy described by the `policy` config section for an env spec."""
    if not isinstance(spec.action_space, Discrete):
        raise DiscreteSpaceError("The linear policies need a discrete action space")

    kind = config["kind"]
    common = {
        "obs_dim": spec.obs_dim,
        "n_actions": spec.action_space.n,
        "learning_rate": config["learning_rate"],
        "obs_norm": config["obs_norm"],
        "obs_clip": config["obs_clip"],
    }

    if kind in ("reinforce", "bc"):
        return LinearSoftmaxPolicy(
            baseline=config["baseline"],
            normalize_returns=config["normalize_returns"],
            offline=kind == "bc",
            **common,
        )
    elif kind == "linear_q":
        return LinearQPolicy(
            epsilon_start=config["epsilon_start"],
            epsilon_end=config["epsilon_end"],
            epsilon_decay_steps=config["epsilon_decay_steps"],
            eps_test=config["eps_test"],
            target_sync_interval=config["target_sync_interval"],
            **common,
        )

    raise ValidationError(f"Unknown policy kind '{kind}', expected one of {POLICY_KINDS}")


def policy_to_bytes(policy):
    writer = BinaryWriter(POLICY_MAGIC, POLICY_VERSION)
    writer.json({"kind": policy.kind, "hyperparameters": policy.hyperparameters(), "state": policy.state()})

    blocks = policy.parameters()
    writer.u32(len(blocks))

    for name, values in blocks.items():
        writer.named_array(name, np.asarray(values, dtype=np.float64))

    return writer.getvalue()


def policy_from_bytes(data):
    reader = BinaryReader(data, POLICY_MAGIC, POLICY_VERSION)
    header = reader.json()
    hyper = dict(header["hyperparameters"])

    if header["kind"] in ("reinforce", "bc"):
        policy = LinearSoftmaxPolicy(**hyper)
    elif header["kind"] == "linear_q":
        policy = LinearQPolicy(**hyper)
    else:
        raise FormatError(f"Unknown policy kind '{header['kind']}'")

    blocks = dict(reader.named_array() for _ in range(reader.u32()))

    if not reader.at_end():
        raise FormatError("Trailing bytes after the policy blocks")

    policy.load_parameters(blocks)
    policy.load_state(header["state"])
    return policy


def save_policy(policy, path):
    atomic_write(path, policy_to_bytes(policy))


def load_policy(path):
    return policy_from_bytes(read_bytes(path))
