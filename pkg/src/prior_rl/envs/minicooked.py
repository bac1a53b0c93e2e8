"""A 7x7 text kitchen with Overcooked-style reward shaping.

Layout (row, column), all cells walkable:

    tomato (1, 1)   lettuce (1, 5)   cutting board (3, 3)
    plate  (5, 1)   delivery (5, 5)  agent start   (3, 0)

Rules:
  * ``pickup`` takes the single loose item on the agent's cell (a plate carries its contents).
  * ``putdown`` places the carried item on an empty cell; a chopped ingredient put on the
    plate's cell (or the plate put on a chopped ingredient's cell) merges onto the plate.
  * ``chop`` at the board chops the whole ingredient lying there (+0.2 once per required
    ingredient per episode).
  * ``deliver`` at the counter: the correct dish gives +1 and ends the episode; anything
    else costs -0.1 and respawns the delivered items at their home cells.
  * Every step costs 0.001.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..core import Action, ConfigError, State
from .base import TextEnv, snapshot_of

SIZE = 7
MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
ACTIONS = tuple(Action(a) for a in
                ("up", "down", "left", "right", "pickup", "putdown", "chop", "deliver"))
A = {a.text: a for a in ACTIONS}

HOMES = {"tomato": (1, 1), "lettuce": (1, 5), "plate": (5, 1)}
BOARD = (3, 3)
DELIVERY = (5, 5)
START = (3, 0)
TASKS = {"tomato": ("tomato",), "salad": ("tomato", "lettuce")}
HORIZONS = {"tomato": 30, "salad": 50}

STEP_COST = 0.001
CHOP_REWARD = 0.2
DISH_REWARD = 1.0
WRONG_DELIVERY = -0.1


@dataclass(frozen=True)
class Kitchen:
    agent: tuple[int, int]
    carried: Optional[str]
    # name -> position (None while carried or on the plate)
    pos: tuple[tuple[str, Optional[tuple[int, int]]], ...]
    chopped: frozenset
    on_plate: frozenset
    rewarded: frozenset

    def where(self, name: str) -> Optional[tuple[int, int]]:
        return dict(self.pos)[name]


def _initial() -> Kitchen:
    return Kitchen(START, None, tuple(sorted(HOMES.items())), frozenset(), frozenset(), frozenset())


def _step_toward(src: tuple[int, int], dst: tuple[int, int]) -> str:
    if src[0] < dst[0]:
        return "down"
    if src[0] > dst[0]:
        return "up"
    if src[1] < dst[1]:
        return "right"
    return "left"


def _relative(src: tuple[int, int], dst: tuple[int, int]) -> str:
    dr, dc = dst[0] - src[0], dst[1] - src[1]
    parts = []
    if dr:
        parts.append(f"{abs(dr)} {'down' if dr > 0 else 'up'}")
    if dc:
        parts.append(f"{abs(dc)} {'right' if dc > 0 else 'left'}")
    return ", ".join(parts) if parts else "here"


class MiniCookedEnv(TextEnv):
    name = "minicooked"

    def __init__(self, task: str = "tomato", partial_obs: bool = False, horizon: Optional[int] = None):
        super().__init__()
        task = str(task).lower()
        if task not in TASKS:
            raise ConfigError("env.task", f"unknown task {task!r}; expected one of {sorted(TASKS)}")
        self.task = task
        self.required = TASKS[task]
        self.partial_obs = bool(partial_obs)
        self.horizon = HORIZONS[task] if horizon is None else int(horizon)
        if self.horizon < 1:
            raise ConfigError("env.horizon", "must be >= 1")
        self.k = _initial()

    @property
    def task_description(self) -> str:
        if self.task == "tomato":
            return "deliver a dish of chopped tomato"
        return "deliver a salad of chopped tomato and chopped lettuce"

    # -- state helpers ----------------------------------------------------
    def _loose_at(self, k: Kitchen, cell) -> Optional[str]:
        for name, p in k.pos:
            if p == cell and name not in k.on_plate:
                return name
        return None

    def _free_cell_near(self, k: Kitchen, cell) -> tuple[int, int]:
        occupied = {p for n, p in k.pos if p is not None and n not in k.on_plate}
        cells = sorted(((abs(r - cell[0]) + abs(c - cell[1]), r, c)
                        for r in range(SIZE) for c in range(SIZE)))
        for _, r, c in cells:
            if (r, c) not in occupied and (r, c) not in (BOARD, DELIVERY):
                return r, c
        raise AssertionError("kitchen is full")

    def _with_pos(self, k: Kitchen, **updates) -> tuple:
        d = dict(k.pos)
        d.update(updates)
        return tuple(sorted(d.items()))

    def _reset(self, task_seed: int) -> None:
        self.k = _initial()

    def _apply(self, a: Action) -> tuple[float, bool]:
        k = self.k
        reward = -STEP_COST
        done = False
        name = a.text
        if name in MOVES:
            dr, dc = MOVES[name]
            r, c = k.agent[0] + dr, k.agent[1] + dc
            if 0 <= r < SIZE and 0 <= c < SIZE:
                k = Kitchen((r, c), k.carried, k.pos, k.chopped, k.on_plate, k.rewarded)
        elif name == "pickup":
            item = self._loose_at(k, k.agent)
            if k.carried is None and item is not None:
                k = Kitchen(k.agent, item, self._with_pos(k, **{item: None}), k.chopped, k.on_plate,
                            k.rewarded)
        elif name == "putdown" and k.carried is not None:
            k = self._putdown(k)
        elif name == "chop" and k.agent == BOARD:
            item = self._loose_at(k, BOARD)
            if item in ("tomato", "lettuce") and item not in k.chopped:
                rewarded = k.rewarded
                if item in self.required and item not in k.rewarded:
                    reward += CHOP_REWARD
                    rewarded = rewarded | {item}
                k = Kitchen(k.agent, k.carried, k.pos, k.chopped | {item}, k.on_plate, rewarded)
        elif name == "deliver" and k.agent == DELIVERY and k.carried is not None:
            if k.carried == "plate" and k.on_plate == frozenset(self.required):
                reward += DISH_REWARD
                done = True
            else:
                reward += WRONG_DELIVERY
                k = self._respawn(k)
        self.k = k
        return reward, done

    def _putdown(self, k: Kitchen) -> Kitchen:
        here = self._loose_at(k, k.agent)
        held = k.carried
        if here is None:
            return Kitchen(k.agent, None, self._with_pos(k, **{held: k.agent}), k.chopped, k.on_plate,
                           k.rewarded)
        if held != "plate" and here == "plate" and held in k.chopped:
            return Kitchen(k.agent, None, k.pos, k.chopped, k.on_plate | {held}, k.rewarded)
        if held == "plate" and here != "plate" and here in k.chopped:
            pos = self._with_pos(k, plate=k.agent, **{here: None})
            return Kitchen(k.agent, None, pos, k.chopped, k.on_plate | {here}, k.rewarded)
        return k

    def _respawn(self, k: Kitchen) -> Kitchen:
        items = [k.carried] + (sorted(k.on_plate) if k.carried == "plate" else [])
        chopped, on_plate = set(k.chopped), set(k.on_plate)
        tmp = Kitchen(k.agent, None, k.pos, k.chopped, k.on_plate, k.rewarded)
        for item in items:
            cell = self._free_cell_near(tmp, HOMES[item])
            tmp = Kitchen(k.agent, None, self._with_pos(tmp, **{item: cell}), tmp.chopped,
                          tmp.on_plate, k.rewarded)
            chopped.discard(item)
            on_plate.discard(item)
        return Kitchen(k.agent, None, tmp.pos, frozenset(chopped), frozenset(on_plate), k.rewarded)

    def _snapshot(self):
        return self.k

    def _admissible(self) -> list[Action]:
        return list(ACTIONS)

    # -- rendering ----------------------------------------------------------
    def item_table(self) -> dict:
        """Visible items -> (row, col); the oracle for rendering tests."""
        k = self.k
        table = {}
        plate_pos = k.agent if k.carried == "plate" else k.where("plate")
        for name, p in k.pos:
            if name == k.carried:
                p = k.agent
            elif name in k.on_plate:
                p = plate_pos
            table[name] = p
        table["cutting board"] = BOARD
        table["delivery counter"] = DELIVERY
        if self.partial_obs:
            table = {n: p for n, p in table.items()
                     if abs(p[0] - k.agent[0]) + abs(p[1] - k.agent[1]) <= 2}
        return table

    def _describe(self, name: str) -> str:
        k = self.k
        if name == "plate":
            if k.on_plate:
                return "plate (holding " + " and ".join(f"chopped {n}" for n in sorted(k.on_plate)) + ")"
            return "plate (empty)"
        if name in ("tomato", "lettuce"):
            return f"{name} ({'chopped' if name in k.chopped else 'whole'})"
        return name

    def render_text(self) -> str:
        k = self.k
        r, c = k.agent
        held = "nothing" if k.carried is None else f"the {self._describe(k.carried)}"
        lines = [f"You are in a {SIZE}x{SIZE} kitchen at row {r}, column {c}. You are holding {held}.",
                 f"Task: {self.task_description}."]
        for name, p in self.item_table().items():
            where = f"row {p[0]}, column {p[1]} ({_relative(k.agent, p)})"
            if name == k.carried:
                lines.append(f"The {self._describe(name)} is in your hands at {where}.")
            elif name in k.on_plate:
                lines.append(f"The {self._describe(name)} is on the plate at {where}.")
            else:
                lines.append(f"The {self._describe(name)} is at {where}.")
        lines.append("Admissible actions: " + ", ".join(a.text for a in ACTIONS) + ".")
        return " ".join(lines)

    # -- scripted planner ---------------------------------------------------
    def oracle_action(self, state: State) -> Action:
        return A[self.plan(snapshot_of(state))]

    def plan(self, k: Kitchen) -> str:
        """Next action of a hand-written optimal policy from kitchen state ``k``."""
        def go(cell, then):
            return then if k.agent == cell else _step_toward(k.agent, cell)

        def park():
            if self._loose_at(k, k.agent) is None and k.agent not in (BOARD, DELIVERY):
                return "putdown"
            return _step_toward(k.agent, self._free_cell_near(k, k.agent))

        required = set(self.required)
        held = k.carried
        if held == "plate":
            if k.on_plate == frozenset(required):
                return go(DELIVERY, "deliver")
            if not k.on_plate <= required:
                return go(DELIVERY, "deliver")
            loose = [n for n in sorted(required - k.on_plate) if n in k.chopped]
            if loose:
                return go(k.where(loose[0]), "putdown")
            return park()
        if held is not None:
            if held not in required:
                return park()
            if held in k.chopped:
                return go(k.where("plate"), "putdown")
            if self._loose_at(k, BOARD) is not None:
                return park()
            return go(BOARD, "putdown")
        todo = [n for n in self.required if n not in k.chopped]
        if todo:
            occupant = self._loose_at(k, BOARD)
            if occupant is not None and occupant not in todo:
                return go(BOARD, "pickup")
            if occupant is not None:
                return go(BOARD, "chop")
            return go(k.where(todo[0]), "pickup")
        if not k.on_plate <= required:
            return go(k.where("plate"), "pickup")
        pending = [n for n in self.required if n not in k.on_plate]
        if pending:
            return go(k.where(pending[0]), "pickup")
        return go(k.where("plate"), "pickup")
