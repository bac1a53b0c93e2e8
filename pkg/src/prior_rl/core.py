"""Domain types for text MDPs and trajectory arithmetic."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Optional, Sequence

import numpy as np


class PriorRLError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PriorRLError, ValueError):
    """A configuration value is missing or malformed; ``field`` names it."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class InadmissibleActionError(PriorRLError, ValueError):
    pass


class EnvDoneError(PriorRLError, RuntimeError):
    pass


_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    return _WS.sub(" ", text.strip().lower())


@dataclass(frozen=True)
class Action:
    """An action is a short sentence; equality is byte equality after normalization."""

    text: str

    def __post_init__(self):
        if not isinstance(self.text, str):
            raise TypeError(f"action text must be str, got {type(self.text).__name__}")
        norm = normalize_text(self.text)
        if not norm:
            raise ValueError("action text is empty")
        object.__setattr__(self, "text", norm)

    def __str__(self) -> str:
        return self.text

    def __lt__(self, other: "Action") -> bool:
        return self.text < other.text


def as_action(a: "Action | str") -> Action:
    return a if isinstance(a, Action) else Action(a)


@dataclass(frozen=True)
class State:
    """Textual observation plus the admissible actions at that point.

    ``key`` is an opaque, hashable snapshot of the simulator's internal state.
    It is excluded from equality and serialization; scripted oracles use it.
    """

    observation: str
    admissible: tuple[Action, ...]
    step_index: int = 0
    done: bool = False
    key: Optional[Hashable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        adm = tuple(as_action(a) for a in self.admissible)
        object.__setattr__(self, "admissible", adm)
        if self.step_index < 0:
            raise ValueError("step_index must be non-negative")
        if not self.done and not adm:
            raise ValueError("admissible must be non-empty for a non-terminal state")
        if len({a.text for a in adm}) != len(adm):
            raise ValueError("admissible contains duplicate actions")

    def is_admissible(self, a: Action) -> bool:
        return a in self.admissible

    def to_dict(self) -> dict:
        return {
            "observation": self.observation,
            "admissible": [a.text for a in self.admissible],
            "step_index": self.step_index,
            "done": self.done,
        }


@dataclass(frozen=True)
class CandidateSet:
    """An ordered multiset of k actions drawn from a prior for one state."""

    actions: tuple[Action, ...]
    source: str = "uniform"
    state_key: str = ""

    def __post_init__(self):
        acts = tuple(as_action(a) for a in self.actions)
        if not acts:
            raise ValueError("candidate set must contain at least one action")
        object.__setattr__(self, "actions", acts)

    @property
    def k(self) -> int:
        return len(self.actions)

    def distinct(self) -> tuple[Action, ...]:
        """Distinct actions in first-appearance order."""
        return tuple(dict.fromkeys(self.actions))

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)


@dataclass(frozen=True)
class Transition:
    s: State
    a: Action
    r: float
    s_next: State
    done: bool
    candidates_s: Optional[CandidateSet] = None
    candidates_s_next: Optional[CandidateSet] = None

    def __post_init__(self):
        if self.a not in self.s.admissible:
            raise InadmissibleActionError(
                f"action {self.a.text!r} not admissible in state {self.s.observation!r}")
        if bool(self.done) != bool(self.s_next.done):
            raise ValueError("transition done flag disagrees with s_next.done")
        for name, cands, st in (("candidates_s", self.candidates_s, self.s),
                                ("candidates_s_next", self.candidates_s_next, self.s_next)):
            if cands is None:
                continue
            bad = [c.text for c in cands if c not in st.admissible]
            if bad:
                raise ValueError(f"{name} contains inadmissible actions {bad}")

    def to_dict(self) -> dict:
        return {
            "s": self.s.to_dict(),
            "a": self.a.text,
            "r": self.r,
            "s_next": self.s_next.to_dict(),
            "done": self.done,
            "candidates_s": None if self.candidates_s is None else [c.text for c in self.candidates_s],
            "candidates_s_next": (None if self.candidates_s_next is None
                                  else [c.text for c in self.candidates_s_next]),
        }


@dataclass(frozen=True)
class Trajectory:
    transitions: tuple[Transition, ...]
    seed: int = 0

    def __post_init__(self):
        ts = tuple(self.transitions)
        object.__setattr__(self, "transitions", ts)
        for i in range(len(ts) - 1):
            if ts[i].s_next != ts[i + 1].s:
                raise ValueError(f"transitions {i} and {i + 1} do not chain")

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def rewards(self) -> list[float]:
        return [t.r for t in self.transitions]

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "transitions": [t.to_dict() for t in self.transitions]},
                          sort_keys=True, separators=(",", ":"))


def discounted_return(traj: "Trajectory | Sequence[float]", gamma: float) -> float:
    """Sum of gamma**t * r_t in trajectory order."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    rewards = traj.rewards if isinstance(traj, Trajectory) else list(traj)
    if not rewards:
        raise ValueError("empty trajectory")
    total = 0.0
    discount = 1.0
    for r in rewards:
        total += discount * r
        discount *= gamma
    return total


def rollout(env: Any, act_fn: Callable[[State, np.random.Generator], Action], horizon: int,
            rng: np.random.Generator, seed: int = 0) -> Trajectory:
    """Run ``act_fn`` from the env's current state until termination or ``horizon`` steps.

    ``act_fn`` receives the rollout's rng so that stochastic policies stay reproducible.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    state = env.state
    transitions = []
    for _ in range(horizon):
        if state.done:
            break
        a = as_action(act_fn(state, rng))
        if a not in state.admissible:
            raise InadmissibleActionError(
                f"policy chose inadmissible action {a.text!r} at step {state.step_index} "
                f"in state {state.observation!r}")
        s_next, r, done = env.step(a)
        transitions.append(Transition(state, a, float(r), s_next, done))
        state = s_next
    return Trajectory(tuple(transitions), seed=seed)
