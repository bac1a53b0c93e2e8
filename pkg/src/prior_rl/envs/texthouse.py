"""A small household text game in the style of ALFWorld pick-and-place tasks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import Action, ConfigError, State
from .base import TextEnv, snapshot_of

RECEPTACLES = (
    "armchair 1", "bed 1", "cabinet 1", "desk 1", "diningtable 1", "drawer 1", "drawer 2",
    "dresser 1", "garbagecan 1", "shelf 1", "sidetable 1", "sidetable 2",
)
OPENABLE = frozenset({"cabinet 1", "drawer 1", "drawer 2"})
OBJECTS = (
    "book 1", "cd 1", "cd 2", "cellphone 1", "creditcard 1", "keychain 1", "laptop 1",
    "pen 1", "pencil 1", "pillow 1",
)
# (object type, receptacle type) goal pairs
GOALS = (
    ("cellphone", "armchair"), ("cd", "sidetable"), ("pen", "desk"), ("book", "bed"),
    ("keychain", "dresser"), ("creditcard", "diningtable"), ("pillow", "armchair"),
    ("laptop", "bed"),
)
MAX_ADMISSIBLE = 50


def _kind(name: str) -> str:
    return name.rsplit(" ", 1)[0]


def _prep(recep: str) -> str:
    return "in" if recep in OPENABLE or _kind(recep) == "garbagecan" else "on"


@dataclass(frozen=True)
class House:
    location: Optional[str]
    holding: Optional[str]
    placement: tuple[tuple[str, str], ...]  # object -> receptacle, sorted
    opened: frozenset

    def contents(self, recep: str) -> list[str]:
        return sorted(o for o, r in self.placement if r == recep)

    def where(self, obj: str) -> Optional[str]:
        return dict(self.placement).get(obj)


class TextHouseEnv(TextEnv):
    """Put an object of a given type on a receptacle of a given type; +1 on success only."""

    name = "texthouse"

    def __init__(self, horizon: int = 60, goal_index: Optional[int] = None):
        super().__init__()
        if horizon < 1:
            raise ConfigError("env.horizon", "must be >= 1")
        if goal_index is not None and not 0 <= goal_index < len(GOALS):
            raise ConfigError("env.goal_index", f"must be in [0, {len(GOALS)})")
        self.horizon = horizon
        self.goal_index = goal_index
        self.goal = GOALS[0]
        self.h = House(None, None, (), frozenset())

    @property
    def task_description(self) -> str:
        return f"put some {self.goal[0]} on {self.goal[1]}"

    def _reset(self, task_seed: int) -> None:
        rng = np.random.default_rng(task_seed)
        gi = self.goal_index if self.goal_index is not None else int(rng.integers(len(GOALS)))
        self.goal = GOALS[gi]
        sources = [r for r in RECEPTACLES if _kind(r) != self.goal[1]]
        placement = {}
        for obj in OBJECTS:
            # goal objects never start on a goal receptacle
            pool = sources if _kind(obj) == self.goal[0] else RECEPTACLES
            placement[obj] = pool[int(rng.integers(len(pool)))]
        self.h = House(None, None, tuple(sorted(placement.items())), frozenset())

    def _satisfied(self, h: House) -> bool:
        return any(_kind(o) == self.goal[0] and _kind(r) == self.goal[1] for o, r in h.placement)

    def _accessible(self, h: House, recep: str) -> bool:
        return recep not in OPENABLE or recep in h.opened

    def _admissible(self) -> list[Action]:
        h = self.h
        acts = [f"go to {r}" for r in RECEPTACLES if r != h.location]
        loc = h.location
        if loc is not None:
            if loc in OPENABLE:
                acts.append(f"close {loc}" if loc in h.opened else f"open {loc}")
            if self._accessible(h, loc):
                if h.holding is None:
                    acts.extend(f"take {o} from {loc}" for o in h.contents(loc))
                else:
                    acts.append(f"put {h.holding} {_prep(loc)} {loc}")
            acts.append(f"examine {loc}")
        acts.extend(["inventory", "look"])
        assert len(acts) <= MAX_ADMISSIBLE
        return [Action(a) for a in acts]

    def _apply(self, a: Action) -> tuple[float, bool]:
        h = self.h
        text = a.text
        place = dict(h.placement)
        if text.startswith("go to "):
            h = House(text[6:], h.holding, h.placement, h.opened)
        elif text.startswith("open "):
            h = House(h.location, h.holding, h.placement, h.opened | {h.location})
        elif text.startswith("close "):
            h = House(h.location, h.holding, h.placement, h.opened - {h.location})
        elif text.startswith("take "):
            obj = text[5:].split(" from ")[0]
            del place[obj]
            h = House(h.location, obj, tuple(sorted(place.items())), h.opened)
        elif text.startswith("put "):
            place[h.holding] = h.location
            h = House(h.location, None, tuple(sorted(place.items())), h.opened)
        self.h = h
        if text.startswith("put ") and self._satisfied(h):
            return 1.0, True
        return 0.0, False

    def _snapshot(self):
        return self.h

    def render_text(self) -> str:
        h = self.h
        parts = []
        if h.location is None:
            parts.append("You are in the middle of a room. Looking quickly around you, you see "
                         + ", ".join(f"a {r}" for r in RECEPTACLES) + ".")
        else:
            parts.append(f"You are at {h.location}.")
            if not self._accessible(h, h.location):
                parts.append(f"The {h.location} is closed.")
            else:
                items = h.contents(h.location)
                seen = ", ".join(f"a {o}" for o in items) if items else "nothing"
                parts.append(f"{_prep(h.location).capitalize()} the {h.location}, you see {seen}.")
        parts.append(f"You are carrying {'nothing' if h.holding is None else 'a ' + h.holding}.")
        parts.append(f"Your task is to: {self.task_description}.")
        return " ".join(parts)

    def oracle_action(self, state: State) -> Action:
        h: House = snapshot_of(state)
        goal_obj, goal_recep = self.goal
        targets = [r for r in RECEPTACLES if _kind(r) == goal_recep]
        if h.holding is not None and _kind(h.holding) == goal_obj:
            if h.location in targets:
                if not self._accessible(h, h.location):
                    return Action(f"open {h.location}")
                return Action(f"put {h.holding} {_prep(h.location)} {h.location}")
            return Action(f"go to {targets[0]}")
        if h.holding is not None:
            if h.location is not None and self._accessible(h, h.location):
                return Action(f"put {h.holding} {_prep(h.location)} {h.location}")
            return Action(f"open {h.location}")
        candidates = sorted(o for o, r in h.placement if _kind(o) == goal_obj and _kind(r) != goal_recep)
        obj = candidates[0]
        src = h.where(obj)
        if h.location != src:
            return Action(f"go to {src}")
        if not self._accessible(h, src):
            return Action(f"open {src}")
        return Action(f"take {obj} from {src}")
