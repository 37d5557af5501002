#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Return estimation over buffer segments: value masking, GAE, n-step returns and discounted reward-to-go.

All functions work on the rows of a buffer in `sample_indices(0)` order and walk episodes with the buffer's
`next`/`is_tail` navigation, so recursion never crosses an episode or env boundary.
"""

__license__ = "MIT"

from dataclasses import dataclass

import numpy as np

from rlforge.workflow.scripts.utilities import LengthMismatch, ValidationError


@dataclass(frozen=True)
class DiscountParams:
    gamma: float = 0.99
    lam: float = 0.95
    n_step: int = 1

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma}")

        if not 0 <= self.lam <= 1:
            raise ValidationError(f"lam must lie in [0, 1], got {self.lam}")

        if int(self.n_step) != self.n_step or self.n_step < 1:
            raise ValidationError(f"n_step must be a positive integer, got {self.n_step}")


@dataclass(frozen=True)
class ValueEstimates:
    v_s: np.ndarray
    v_s_next: np.ndarray

    def __post_init__(self):
        v_s = np.asarray(self.v_s, dtype=np.float64).reshape(-1)
        v_s_next = np.asarray(self.v_s_next, dtype=np.float64).reshape(-1)

        if v_s.shape != v_s_next.shape:
            raise LengthMismatch(f"V(s) has {v_s.size} entries but V(s') has {v_s_next.size}")

        if not (np.all(np.isfinite(v_s)) and np.all(np.isfinite(v_s_next))):
            raise ValidationError("Value estimates must be finite")

        object.__setattr__(self, "v_s", v_s)
        object.__setattr__(self, "v_s_next", v_s_next)

    def __len__(self):
        return self.v_s.size


def value_mask(buffer, indices):
    """
    Gate of the bootstrap term gamma * V(s_{t+1}): 0 at natural terminals, 1 at time-limit truncations,
    in-progress tails and ordinary rows.
    """
    indices = np.atleast_1d(buffer._check_indices(indices))
    done = buffer.columns["done"][indices]
    truncated = buffer.columns["truncated"][indices]
    return np.where(done & ~truncated, 0.0, 1.0)


def _rows(buffer):
    rows = buffer.sample_indices(0)
    position = np.full(buffer.total_capacity, -1, dtype=np.int64)
    position[rows] = np.arange(rows.size)
    return rows, position


def _check_length(name, values, expected):
    if len(values) != expected:
        raise LengthMismatch(f"{name} has {len(values)} entries for {expected} buffer rows")


def gae(buffer, values, params):
    """
    Generalized advantage estimates for every stored row, aligned with `sample_indices(0)`. Each segment is
    processed tail to head: the advantage of a tail is its TD residual, every other row adds gamma * lam times the
    advantage of its successor.
    """
    rows, position = _rows(buffer)
    _check_length("Value estimates", values, rows.size)

    rewards = buffer.columns["rew"][rows]
    mask = value_mask(buffer, rows)
    delta = rewards + mask * params.gamma * values.v_s_next - values.v_s

    successor = position[buffer.next(rows)]
    tail = buffer.is_tail(rows)
    factor = params.gamma * params.lam

    advantages = np.zeros(rows.size, dtype=np.float64)

    # successors always come later in chronological order
    for k in range(rows.size - 1, -1, -1):
        advantages[k] = delta[k] if tail[k] else delta[k] + factor * advantages[successor[k]]

    return advantages


def reward_to_go(buffer, params):
    """Discounted sum of the remaining rewards of each row's segment, without bootstrapping."""
    rows, position = _rows(buffer)

    rewards = buffer.columns["rew"][rows]
    successor = position[buffer.next(rows)]
    tail = buffer.is_tail(rows)

    returns = np.zeros(rows.size, dtype=np.float64)

    for k in range(rows.size - 1, -1, -1):
        returns[k] = rewards[k] if tail[k] else rewards[k] + params.gamma * returns[successor[k]]

    return returns


def nstep_return(buffer, v_s_next, params, indices=None):
    """
    n-step bootstrapped targets. `v_s_next` is either an array aligned with `sample_indices(0)` or a callable
    returning V(s') for a set of buffer indices. With `indices`, targets are only computed for those rows.
    """
    rows, position = _rows(buffer)

    if callable(v_s_next):
        lookup = v_s_next
    else:
        v_s_next = np.asarray(v_s_next, dtype=np.float64).reshape(-1)
        _check_length("V(s')", v_s_next, rows.size)

        def lookup(found):
            return v_s_next[position[found]]

    current = rows if indices is None else np.atleast_1d(buffer._check_indices(indices))
    rewards = buffer.columns["rew"]

    targets = np.zeros(current.size, dtype=np.float64)
    discount = np.ones(current.size, dtype=np.float64)
    active = np.ones(current.size, dtype=bool)
    last = current.copy()

    for _ in range(params.n_step):
        targets += np.where(active, discount * rewards[current], 0.0)
        last = np.where(active, current, last)
        discount = np.where(active, discount * params.gamma, discount)

        active &= ~buffer.is_tail(current)
        current = np.where(active, buffer.next(current), current)

    bootstrap = np.asarray(lookup(last), dtype=np.float64).reshape(-1)
    _check_length("V(s')", bootstrap, last.size)

    return targets + discount * value_mask(buffer, last) * bootstrap
