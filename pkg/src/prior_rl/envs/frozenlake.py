"""Deterministic 4x4 Frozen Lake with English observations."""
from __future__ import annotations

from collections import deque
from typing import Sequence

from ..core import Action, ConfigError, State
from .base import TextEnv, snapshot_of

DEFAULT_MAP = ("SFFF", "FHFH", "FFFH", "HFFG")
MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
ACTIONS = tuple(Action(m) for m in MOVES)


class FrozenLakeEnv(TextEnv):
    """Grid walk to the goal; +1 at the goal, -1 in a hole, 0 otherwise.

    No slipping. Walking into the edge leaves the agent in place.
    """

    name = "frozenlake"

    def __init__(self, grid: Sequence[str] = DEFAULT_MAP, horizon: int = 20):
        super().__init__()
        grid = tuple(str(row).upper() for row in grid)
        if not grid or any(len(row) != len(grid[0]) for row in grid):
            raise ConfigError("env.map", "rows must be non-empty and of equal length")
        cells = "".join(grid)
        if set(cells) - set("SFHG"):
            raise ConfigError("env.map", f"unknown cell codes {sorted(set(cells) - set('SFHG'))}")
        if cells.count("S") != 1 or cells.count("G") != 1:
            raise ConfigError("env.map", "need exactly one S and one G")
        if horizon < 1:
            raise ConfigError("env.horizon", "must be >= 1")
        self.grid = grid
        self.horizon = horizon
        self.n_rows, self.n_cols = len(grid), len(grid[0])
        self.start = self._find("S")
        self.goal = self._find("G")
        self.pos = self.start
        self._dist = self._goal_distances()

    def _find(self, code: str) -> tuple[int, int]:
        for r, row in enumerate(self.grid):
            c = row.find(code)
            if c >= 0:
                return r, c
        raise AssertionError(code)

    def cell(self, pos: tuple[int, int]) -> str:
        return self.grid[pos[0]][pos[1]]

    def move(self, pos: tuple[int, int], a: Action) -> tuple[int, int]:
        dr, dc = MOVES[a.text]
        r, c = pos[0] + dr, pos[1] + dc
        if 0 <= r < self.n_rows and 0 <= c < self.n_cols:
            return r, c
        return pos

    def _goal_distances(self) -> dict:
        """BFS distance to goal over non-hole cells."""
        dist = {self.goal: 0}
        queue = deque([self.goal])
        while queue:
            cur = queue.popleft()
            for r in range(self.n_rows):
                for c in range(self.n_cols):
                    p = (r, c)
                    if p in dist or self.cell(p) == "H":
                        continue
                    if any(self.move(p, a) == cur for a in ACTIONS):
                        dist[p] = dist[cur] + 1
                        queue.append(p)
        return dist

    def _reset(self, task_seed: int) -> None:
        self.pos = self.start

    def _apply(self, a: Action) -> tuple[float, bool]:
        self.pos = self.move(self.pos, a)
        code = self.cell(self.pos)
        if code == "G":
            return 1.0, True
        if code == "H":
            return -1.0, True
        return 0.0, False

    def _snapshot(self):
        return self.pos

    def _admissible(self) -> list[Action]:
        return list(ACTIONS)

    def render_text(self) -> str:
        r, c = self.pos
        where = {"S": "the start cell", "F": "frozen ice", "H": "a hole", "G": "the goal"}[self.cell(self.pos)]
        gr, gc = self.goal
        return (f"You are on a frozen lake at row {r}, column {c}. You are standing on {where}. "
                f"The goal is at row {gr}, column {gc}. "
                f"Admissible actions: {', '.join(a.text for a in ACTIONS)}.")

    def oracle_action(self, state: State) -> Action:
        pos = snapshot_of(state)
        best, best_d = ACTIONS[0], float("inf")
        for a in ACTIONS:
            d = self._dist.get(self.move(pos, a), float("inf"))
            if d < best_d:
                best, best_d = a, d
        return best
