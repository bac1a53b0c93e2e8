from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Hashable, Optional

from ..core import Action, EnvDoneError, InadmissibleActionError, State, as_action


class TextEnv(ABC):
    """Deterministic, text-rendered episodic environment.

    Subclasses implement ``_reset``, ``_apply``, ``_snapshot``, ``_admissible``,
    ``render_text`` and ``oracle_action``. Step bookkeeping (horizon, errors) lives here.
    """

    name: str = "env"
    horizon: int = 1

    def __init__(self):
        self._state: Optional[State] = None
        self._t = 0
        self._done = False
        self.task_seed = 0

    @property
    def state(self) -> State:
        if self._state is None:
            raise EnvDoneError("environment has not been reset")
        return self._state

    @property
    def task_description(self) -> str:
        return ""

    def reset(self, task_seed: int = 0) -> State:
        self.task_seed = int(task_seed)
        self._t = 0
        self._done = False
        self._reset(self.task_seed)
        self._state = self._make_state()
        return self._state

    def step(self, a: "Action | str") -> tuple[State, float, bool]:
        if self._state is None:
            raise EnvDoneError("step called before reset")
        if self._done:
            raise EnvDoneError("step called after episode end")
        a = as_action(a)
        if a not in self._state.admissible:
            raise InadmissibleActionError(
                f"{a.text!r} is not admissible; admissible: {[x.text for x in self._state.admissible]}")
        reward, terminal = self._apply(a)
        self._t += 1
        self._done = terminal or self._t >= self.horizon
        self._state = self._make_state()
        return self._state, float(reward), self._done

    def _make_state(self) -> State:
        return State(self.render_text(), tuple(self._admissible()), self._t, self._done,
                     key=(self._t, self._snapshot()))

    @property
    def action_space(self) -> tuple[Action, ...]:
        """Every action the env can ever make admissible, if finite and small."""
        return tuple(self._admissible())

    @abstractmethod
    def _reset(self, task_seed: int) -> None: ...

    @abstractmethod
    def _apply(self, a: Action) -> tuple[float, bool]: ...

    @abstractmethod
    def _snapshot(self) -> Hashable: ...

    @abstractmethod
    def _admissible(self) -> list[Action]: ...

    @abstractmethod
    def render_text(self) -> str: ...

    @abstractmethod
    def oracle_action(self, state: State) -> Action:
        """A scripted near-optimal action for ``state`` (uses ``state.key``)."""


def snapshot_of(state: State):
    if state.key is None:
        raise ValueError("state carries no simulator snapshot; scripted oracles need live env states")
    return state.key[1]
