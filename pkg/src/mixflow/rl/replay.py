"""Proportional prioritized replay backed by a sum tree."""

from __future__ import annotations

from typing import Tuple

import numpy as np


class InsufficientSamplesError(ValueError):
    pass


class SumTree:
    """Binary tree in an array; every parent holds the sum of its children.

    Leaves live at ``[cap, 2 * cap)`` with ``cap`` the capacity rounded up to a
    power of two. Parents are recomputed from their children on every update,
    so the root never accumulates drift from repeated increments.
    """

    def __init__(self, capacity: int) -> None:
        cap = 1
        while cap < capacity:
            cap *= 2
        self.capacity = capacity
        self._cap = cap
        self.nodes = np.zeros(2 * cap)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def __getitem__(self, index: int) -> float:
        return float(self.nodes[self._cap + index])

    def update(self, index: int, value: float) -> None:
        i = self._cap + index
        nodes = self.nodes
        nodes[i] = value
        i //= 2
        while i >= 1:
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1]
            i //= 2

    def find(self, mass: float) -> int:
        """Leaf index whose cumulative range contains ``mass``."""
        nodes = self.nodes
        i = 1
        while i < self._cap:
            left = 2 * i
            if mass < nodes[left] or nodes[left + 1] <= 0.0:
                i = left
            else:
                mass -= nodes[left]
                i = left + 1
        return i - self._cap


class PrioritizedBuffer:
    """Fixed-capacity FIFO replay with sampling probability ``p_i**alpha / sum``."""

    def __init__(self, capacity: int, obs_dim: int, alpha: float = 0.5) -> None:
        self.capacity = capacity
        self.alpha = alpha
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity)
        self.priorities = np.zeros(capacity)
        self.tree = SumTree(capacity)
        self.max_priority = 1.0
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, obs, action: int, reward: float, next_obs, terminal: bool) -> int:
        """Store a transition at the current maximum priority; evicts the oldest when full."""
        i = self.cursor
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.terminals[i] = float(terminal)
        self._set_priority(i, self.max_priority)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def _set_priority(self, index: int, priority: float) -> None:
        self.priorities[index] = priority
        self.tree.update(index, priority ** self.alpha)

    def update_priorities(self, indices, priorities) -> None:
        for i, p in zip(indices, priorities):
            p = float(p)
            if not p > 0.0:
                raise ValueError(f"priority must be positive, got {p}")
            self._set_priority(int(i), p)
            if p > self.max_priority:
                self.max_priority = p

    def probabilities(self) -> np.ndarray:
        scaled = self.priorities[: self.size] ** self.alpha
        return scaled / scaled.sum()

    def sample(self, batch: int, is_exponent: float, rng: np.random.Generator
               ) -> Tuple[dict, np.ndarray, np.ndarray]:
        """Stratified draw of ``batch`` indices with importance weights.

        Weights are ``(N * P(i)) ** -is_exponent`` divided by their batch maximum.
        """
        if self.size < batch:
            raise InsufficientSamplesError(f"buffer holds {self.size} transitions, need {batch}")
        total = self.tree.total
        segment = total / batch
        lows = np.arange(batch) * segment
        draws = lows + rng.random(batch) * segment
        indices = np.empty(batch, dtype=np.int64)
        for k, mass in enumerate(draws):
            idx = self.tree.find(min(mass, np.nextafter(total, 0.0)))
            if idx >= self.size:
                idx = self.size - 1
            indices[k] = idx
        probs = np.array([self.tree[i] for i in indices]) / total
        weights = (self.size * probs) ** (-is_exponent)
        weights /= weights.max()
        batch_data = {
            "obs": self.obs[indices],
            "actions": self.actions[indices],
            "rewards": self.rewards[indices],
            "next_obs": self.next_obs[indices],
            "terminals": self.terminals[indices],
        }
        return batch_data, indices, weights
