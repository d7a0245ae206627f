"""Uniform FIFO replay buffer holding raw (unshifted) rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from shiftlab.envs import Termination, Transition


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray  # bool; truncation is not terminal

    def __len__(self) -> int:
        return self.rewards.shape[0]


class ReplayBuffer:
    def __init__(self, capacity: int, obs_shape, action_shape=(), action_dtype=np.int64) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        obs_shape = tuple(obs_shape)
        self.states = np.zeros((capacity, *obs_shape))
        self.next_states = np.zeros((capacity, *obs_shape))
        self.actions = np.zeros((capacity, *tuple(action_shape)), dtype=action_dtype)
        self.rewards = np.zeros(capacity)
        self.terms = np.zeros(capacity, dtype="<U1")
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, t: Transition) -> None:
        if not np.isfinite(t.reward):
            raise ValueError("reward must be finite")
        i = self.inserted % self.capacity
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.terms[i] = Termination(t.termination).value
        self.inserted += 1

    def _take(self, idx: np.ndarray) -> Batch:
        return Batch(
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terms[idx] == Termination.TERMINAL.value,
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement."""
        if len(self) == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self._take(rng.integers(0, len(self), size=batch_size))

    def ordered(self) -> Batch:
        """Stored transitions from oldest to newest."""
        n = len(self)
        start = self.inserted % self.capacity if self.inserted > self.capacity else 0
        return self._take((start + np.arange(n)) % self.capacity)
