from __future__ import annotations

import numpy as np

from ..core import Transition


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with uniform minibatch sampling."""

    def __init__(self, capacity: int = 50_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self.inserted = 0

    def add(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self.inserted % self.capacity] = t
        self.inserted += 1

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Transition:
        return self._items[i]

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform indices, without replacement inside one batch."""
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        n = min(batch_size, len(self._items))
        return rng.choice(len(self._items), size=n, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        return [self._items[i] for i in self.sample_indices(batch_size, rng)]
