from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Callable, Optional
from urllib.parse import urlparse

import numpy as np

from ..core import Action, CandidateSet, ConfigError, State
from .llm import LLMClient, build_prompt
from .projection import project_output

log = logging.getLogger(__name__)

PRIOR_KINDS = ("uniform", "scripted", "llm")


@dataclass(frozen=True)
class PriorConfig:
    kind: str = "uniform"
    k: int = 5
    quality: float = 0.0
    oracle: str = "env"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    temperature: float = 1.0
    cache_path: Optional[str] = None
    max_concurrency: int = 4
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError("prior.kind", f"expected one of {PRIOR_KINDS}, got {self.kind!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError("prior.k", "must be a positive integer")
        if not 0.0 <= self.quality <= 1.0:
            raise ConfigError("prior.quality", "must be in [0, 1]")
        if self.kind == "llm":
            url = urlparse(self.endpoint or "")
            if url.scheme not in ("http", "https") or not url.netloc:
                raise ConfigError("prior.endpoint", f"not a well-formed URL: {self.endpoint!r}")
            if not self.model:
                raise ConfigError("prior.model", "required for llm priors")


def state_key(state: State) -> str:
    return hashlib.sha1(" ".join(state.observation.lower().split()).encode("utf-8")).hexdigest()


class ActionPrior:
    """Base class for p(a | s); subclasses draw one action at a time."""

    source = "uniform"

    def __init__(self):
        self.projection_failures = 0

    def draw(self, state: State, rng: np.random.Generator) -> Action:
        return state.admissible[int(rng.integers(len(state.admissible)))]

    def sample(self, state: State, k: int, rng: np.random.Generator) -> CandidateSet:
        return CandidateSet(tuple(self.draw(state, rng) for _ in range(k)), self.source, state_key(state))

    def probs(self, state: State) -> Optional[dict[Action, float]]:
        """Exact action distribution when it is known in closed form."""
        return None


class UniformPrior(ActionPrior):
    source = "uniform"

    def probs(self, state):
        n = len(state.admissible)
        return {a: 1.0 / n for a in state.admissible}


class ScriptedPrior(ActionPrior):
    """With probability ``quality`` propose the oracle action, else a uniform admissible one."""

    source = "scripted"

    def __init__(self, quality: float, oracle: Callable[[State], Action]):
        super().__init__()
        if not 0.0 <= quality <= 1.0:
            raise ConfigError("prior.quality", "must be in [0, 1]")
        self.quality = quality
        self.oracle = oracle

    def draw(self, state, rng):
        # always consume two numbers so streams line up across quality settings
        u = rng.random()
        j = int(rng.integers(len(state.admissible)))
        if u < self.quality:
            return self.oracle(state)
        return state.admissible[j]

    def probs(self, state):
        n = len(state.admissible)
        out = {a: (1.0 - self.quality) / n for a in state.admissible}
        out[self.oracle(state)] += self.quality
        return out


class LLMPrior(ActionPrior):
    """Free-form completions projected onto admissible actions; one n-sample call per state."""

    source = "llm"

    def __init__(self, client: LLMClient, task: "str | Callable[[], str]" = ""):
        super().__init__()
        self.client = client
        self.task = task

    def sample(self, state, k, rng):
        prompt = build_prompt(state, self.task() if callable(self.task) else self.task)
        actions = []
        for raw in self.client.complete(prompt, n=k):
            a = project_output(raw, state.admissible)
            if a is None:
                self.projection_failures += 1
                log.debug("projection failed for %r", raw[:80])
                a = state.admissible[int(rng.integers(len(state.admissible)))]
            actions.append(a)
        return CandidateSet(tuple(actions), self.source, state_key(state))

    def draw(self, state, rng):
        return self.sample(state, 1, rng).actions[0]


def sample_candidates(prior: ActionPrior, state: State, k: int, rng: np.random.Generator) -> CandidateSet:
    """Draw ``k`` i.i.d. candidates (duplicates kept) for a non-terminal state."""
    if state.done:
        raise ValueError("cannot sample candidates for a terminal state")
    if k < 1:
        raise ValueError("k must be >= 1")
    return prior.sample(state, k, rng)


def make_prior(cfg: PriorConfig, env=None, transport=None) -> ActionPrior:
    if cfg.kind == "uniform":
        return UniformPrior()
    if cfg.kind == "scripted":
        if cfg.oracle != "env":
            raise ConfigError("prior.oracle", f"unknown oracle id {cfg.oracle!r}; only 'env' is built in")
        if env is None:
            raise ConfigError("prior.oracle", "scripted prior needs an environment oracle")
        return ScriptedPrior(cfg.quality, env.oracle_action)
    client = LLMClient(cfg.endpoint, cfg.model, cfg.temperature, cfg.cache_path, timeout=cfg.timeout,
                       max_concurrency=cfg.max_concurrency, transport=transport)
    return LLMPrior(client, (lambda: env.task_description) if env is not None else "")


@dataclass(frozen=True)
class EmpiricalPrior:
    support: tuple[Action, ...]
    probs: tuple[float, ...]

    def prob(self, a: Action) -> float:
        try:
            return self.probs[self.support.index(a)]
        except ValueError:
            return 0.0

    def as_dict(self) -> dict[Action, float]:
        return dict(zip(self.support, self.probs))


def empirical_prior(c: CandidateSet) -> EmpiricalPrior:
    """Multiplicity / k for each distinct candidate, in first-appearance order."""
    counts: dict[Action, int] = {}
    for a in c.actions:
        counts[a] = counts.get(a, 0) + 1
    k = len(c.actions)
    return EmpiricalPrior(tuple(counts), tuple(n / k for n in counts.values()))
