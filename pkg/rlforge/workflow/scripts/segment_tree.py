#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Array-backed binary tree with a sum or min reduction over its leaves.
"""

__license__ = "MIT"

import numpy as np

from rlforge.workflow.scripts.utilities import IndexOutOfRange, ValidationError

REDUCTIONS = {"sum": (np.add, 0.0), "min": (np.minimum, np.inf)}


class SegmentTree(object):
    """
    Node 1 is the root, node i has children 2i and 2i+1, and leaf j sits at node `leaf_count + j`. The leaf count
    is the size rounded up to a power of two; padding leaves hold the identity of the reduction.
    """

    def __init__(self, size, reduction="sum"):
        if size < 1:
            raise ValidationError(f"Segment tree size must be positive, got {size}")

        if reduction not in REDUCTIONS:
            raise ValidationError(f"Unknown reduction '{reduction}', expected one of {list(REDUCTIONS)}")

        self.size = size
        self.reduction = reduction
        self.op, self.identity = REDUCTIONS[reduction]

        self.leaf_count = 1
        while self.leaf_count < size:
            self.leaf_count *= 2

        self.values = np.full(2 * self.leaf_count, self.identity, dtype=np.float64)

    def __len__(self):
        return self.size

    def __getitem__(self, index):
        index = np.asarray(index, dtype=np.int64)
        self._check(index)
        return self.values[index + self.leaf_count]

    def __setitem__(self, index, value):
        """Set one or many leaves and refresh every ancestor, level by level."""
        index = np.atleast_1d(np.asarray(index, dtype=np.int64))
        self._check(index)

        nodes = index + self.leaf_count
        self.values[nodes] = np.broadcast_to(np.asarray(value, dtype=np.float64), nodes.shape)

        nodes = np.unique(nodes // 2)
        while nodes.size and nodes[0] >= 1:
            self.values[nodes] = self.op(self.values[2 * nodes], self.values[2 * nodes + 1])
            nodes = np.unique(nodes // 2)
            nodes = nodes[nodes >= 1]

    def _check(self, index):
        if index.size and (index.min() < 0 or index.max() >= self.size):
            raise IndexOutOfRange(f"Leaf index must lie in [0, {self.size})")

    def leaves(self):
        return self.values[self.leaf_count : self.leaf_count + self.size].copy()

    def reduce(self):
        """Reduction over all leaves (the root)."""
        return float(self.values[1])

    def prefix_search(self, x):
        """
        For each x, the smallest leaf index i whose inclusive cumulative sum exceeds x. Sum trees only.

        Rounding in the descent can end on a zero leaf when x is close to the total; such results move to the
        nearest positive leaf before them (or the first one after), so a zero leaf is never returned while the
        total is positive.
        """
        if self.reduction != "sum":
            raise ValidationError("Prefix search needs a sum tree")

        x = np.array(x, dtype=np.float64, ndmin=1)
        nodes = np.ones(x.shape, dtype=np.int64)

        while nodes[0] < self.leaf_count:
            left = 2 * nodes
            left_sum = self.values[left]
            go_right = x >= left_sum
            x = np.where(go_right, x - left_sum, x)
            nodes = np.where(go_right, left + 1, left)

        found = np.minimum(nodes - self.leaf_count, self.size - 1)
        empty = self.values[found + self.leaf_count] <= 0

        if np.any(empty):
            positive = np.flatnonzero(self.leaves() > 0)

            if positive.size:
                before = np.searchsorted(positive, found[empty], side="right") - 1
                found[empty] = positive[np.maximum(before, 0)]

        return found
