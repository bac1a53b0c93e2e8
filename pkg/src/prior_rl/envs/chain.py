"""Deterministic chain MDP with a known tabular optimum, used as ground truth."""
from __future__ import annotations

import numpy as np

from ..core import Action, ConfigError, State
from .base import TextEnv

LEFT, RIGHT = Action("left"), Action("right")
ACTIONS = (LEFT, RIGHT)


class ChainEnv(TextEnv):
    """States 0..n-1 in a line; reaching the right end pays +1 and terminates."""

    name = "chain"

    def __init__(self, n_states: int = 5, horizon: int = 100):
        super().__init__()
        if n_states < 2:
            raise ConfigError("env.n_states", "must be >= 2")
        self.n_states = n_states
        self.horizon = horizon
        self.pos = 0

    def _reset(self, task_seed: int) -> None:
        self.pos = 0

    def _apply(self, a: Action) -> tuple[float, bool]:
        self.pos = min(self.pos + 1, self.n_states - 1) if a == RIGHT else max(self.pos - 1, 0)
        if self.pos == self.n_states - 1:
            return 1.0, True
        return 0.0, False

    def _snapshot(self):
        return self.pos

    def _admissible(self):
        return list(ACTIONS)

    def render_text(self) -> str:
        return f"You are at position {self.pos} of a chain of {self.n_states} cells."

    def oracle_action(self, state: State) -> Action:
        return RIGHT

    def optimal_q(self, gamma: float, tol: float = 1e-12) -> np.ndarray:
        """Value iteration; returns Q*[state, action] with actions ordered (left, right)."""
        n = self.n_states
        q = np.zeros((n, 2))
        while True:
            v = q.max(axis=1)
            v[n - 1] = 0.0
            new = np.zeros_like(q)
            for s in range(n - 1):
                for i, nxt in enumerate((max(s - 1, 0), min(s + 1, n - 1))):
                    terminal = nxt == n - 1
                    new[s, i] = (1.0 if terminal else 0.0) + (0.0 if terminal else gamma * v[nxt])
            if np.max(np.abs(new - q)) < tol:
                return new
            q = new

    def state_at(self, pos: int) -> State:
        """The non-terminal state observed at ``pos`` (for probing a learned Q)."""
        saved = self.pos
        self.pos = pos
        s = State(self.render_text(), ACTIONS, 0, False, key=(0, pos))
        self.pos = saved
        return s

