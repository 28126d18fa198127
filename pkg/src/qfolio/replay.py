"""Fixed-capacity FIFO experience memory with uniform mini-batch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import Transition
from .errors import DataError


@dataclass(frozen=True)
class TransitionBatch:
    """Column-stacked transitions; indexing recovers individual quintuples."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, j: int) -> Transition:
        return Transition(
            state=self.states[j].copy(),
            action=int(self.actions[j]),
            reward=float(self.rewards[j]),
            next_state=self.next_states[j].copy(),
            terminal=bool(self.terminals[j]),
        )


class ReplayBuffer:
    """Ring of the most recent `capacity` transitions; once full, each push
    evicts exactly the oldest element. Single-writer, single-reader."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DataError("capacity must be >= 1")
        self.capacity = capacity
        self._cursor = 0
        self._size = 0
        self._states: np.ndarray | None = None
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._next_states: np.ndarray | None = None
        self._terminals = np.zeros(capacity, dtype=bool)

    def __len__(self) -> int:
        return self._size

    def push(self, transition: Transition) -> None:
        state = np.asarray(transition.state, dtype=np.float64)
        if self._states is None:
            dim = len(state)
            self._states = np.zeros((self.capacity, dim), dtype=np.float64)
            self._next_states = np.zeros((self.capacity, dim), dtype=np.float64)
        elif len(state) != self._states.shape[1]:
            raise DataError(
                f"state of length {len(state)} pushed into buffer of width {self._states.shape[1]}"
            )
        k = self._cursor
        self._states[k] = state
        self._actions[k] = transition.action
        self._rewards[k] = transition.reward
        self._next_states[k] = np.asarray(transition.next_state, dtype=np.float64)
        self._terminals[k] = transition.terminal
        self._cursor = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def warmup_reached(self, threshold: int) -> bool:
        if threshold > self.capacity:
            raise DataError(f"threshold {threshold} exceeds capacity {self.capacity}")
        return self._size >= threshold

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Draw `batch_size` stored transitions uniformly with replacement."""
        if self._size == 0:
            raise DataError("cannot sample from an empty buffer")
        if batch_size < 1:
            raise DataError("batch_size must be >= 1")
        idx = rng.integers(0, self._size, size=batch_size)
        return TransitionBatch(
            states=self._states[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_states=self._next_states[idx].copy(),
            terminals=self._terminals[idx].copy(),
        )

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first (for inspection and testing)."""
        if self._size < self.capacity:
            order = range(self._size)
        else:
            order = [(self._cursor + k) % self.capacity for k in range(self.capacity)]
        return [
            Transition(
                state=self._states[k].copy(),
                action=int(self._actions[k]),
                reward=float(self._rewards[k]),
                next_state=self._next_states[k].copy(),
                terminal=bool(self._terminals[k]),
            )
            for k in order
        ]
