"""Offline datasets: behavior-policy rollouts stored as line-delimited JSON transitions.

The first line is a header ``{"provenance": {...}}``; every following line is one
transition with the candidate sets that were sampled when the data was generated.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import Action, CandidateSet, PriorRLError, State, Transition
from .prior import ActionPrior, ScriptedPrior, UniformPrior, sample_candidates, state_key
from .value import Featurizer, load_checkpoint

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
RECORD_FIELDS = ("s_obs", "s_admissible", "a", "r", "s_next_obs", "s_next_admissible", "done",
                 "candidates_s", "candidates_s_next", "episode", "good")


class DatasetError(PriorRLError, ValueError):
    pass


@dataclass(frozen=True)
class Behavior:
    """Behavior policy used to collect data: scripted(q), uniform random, or a Q checkpoint."""

    kind: str = "scripted"
    quality: float = 0.5
    epsilon: float = 0.1
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("scripted", "random", "checkpoint"):
            raise DatasetError(f"unknown behavior kind {self.kind!r}")
        if self.kind == "checkpoint" and not self.checkpoint:
            raise DatasetError("checkpoint behavior needs a checkpoint path")

    @property
    def id(self) -> str:
        if self.kind == "scripted":
            return f"scripted:q={self.quality:g}"
        if self.kind == "random":
            return "random"
        return f"checkpoint:{Path(self.checkpoint).name}:eps={self.epsilon:g}"

    @classmethod
    def parse(cls, text: str) -> "Behavior":
        """``scripted:0.5``, ``random`` or ``checkpoint:PATH[:EPS]``."""
        kind, _, rest = text.partition(":")
        try:
            if kind == "scripted":
                return cls("scripted", quality=float(rest or 0.5))
            if kind == "random":
                return cls("random")
            if kind == "checkpoint":
                path, _, eps = rest.rpartition(":") if rest.count(":") else (rest, "", "")
                return cls("checkpoint", epsilon=float(eps or 0.1), checkpoint=path or rest)
        except ValueError:
            pass
        raise DatasetError(f"cannot parse behavior spec {text!r}")

    def actor(self, env) -> Callable[[State, np.random.Generator], Action]:
        if self.kind == "scripted":
            prior = ScriptedPrior(self.quality, env.oracle_action)
            return prior.draw
        if self.kind == "random":
            return UniformPrior().draw
        params, meta = load_checkpoint(self.checkpoint)
        feat = Featurizer(params.dim, params.hash_seed)
        from .learners.qlearning import greedy_action

        def act(state, rng):
            u = rng.random()
            j = int(rng.integers(len(state.admissible)))
            return state.admissible[j] if u < self.epsilon else greedy_action(params, state, feat)
        return act


@dataclass
class OfflineDataset:
    transitions: list
    provenance: dict
    episodes: list = field(default_factory=list)
    good: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def counts(self) -> dict:
        good = int(sum(self.good))
        return {"total": len(self.transitions), "good": good, "bad": len(self.transitions) - good,
                "good_episodes": len({e for e, g in zip(self.episodes, self.good) if g}),
                "bad_episodes": len({e for e, g in zip(self.episodes, self.good) if not g})}

    def records(self) -> list[dict]:
        return [to_record(t, e, g) for t, e, g in zip(self.transitions, self.episodes, self.good)]


def to_record(t: Transition, episode: int, good: bool) -> dict:
    names = lambda xs: None if xs is None else [a.text for a in xs]  # noqa: E731
    return {
        "s_obs": t.s.observation,
        "s_admissible": names(t.s.admissible),
        "a": t.a.text,
        "r": float(t.r),
        "s_next_obs": t.s_next.observation,
        "s_next_admissible": names(t.s_next.admissible),
        "done": bool(t.done),
        "candidates_s": names(t.candidates_s),
        "candidates_s_next": names(t.candidates_s_next),
        "episode": int(episode),
        "good": bool(good),
    }


def from_record(rec: dict, source: str = "dataset") -> Transition:
    missing = [k for k in RECORD_FIELDS if k not in rec]
    if missing:
        raise ValueError(f"missing fields {missing}")
    s = State(rec["s_obs"], tuple(Action(a) for a in rec["s_admissible"]))
    s_next = State(rec["s_next_obs"], tuple(Action(a) for a in rec["s_next_admissible"]),
                   done=bool(rec["done"]))
    cands = lambda xs, st: None if xs is None else CandidateSet(tuple(xs), source, state_key(st))  # noqa: E731
    return Transition(s, Action(rec["a"]), float(rec["r"]), s_next, bool(rec["done"]),
                      cands(rec["candidates_s"], s), cands(rec["candidates_s_next"], s_next))


def _rollout_episode(env, act, task_seed: int, prior: ActionPrior, k: int, act_rng, cand_rng) -> list:
    s = env.reset(task_seed)
    c = sample_candidates(prior, s, k, cand_rng)
    out = []
    while True:
        a = act(s, act_rng)
        s_next, r, done = env.step(a)
        c_next = None if done else sample_candidates(prior, s_next, k, cand_rng)
        out.append(Transition(s, a, r, s_next, done, c, c_next))
        if done:
            return out
        s, c = s_next, c_next


def generate_dataset(env, behavior: Behavior, n_transitions: int, good_bad_ratio: float,
                     prior: ActionPrior, k: int, rng: np.random.Generator,
                     out_path: "str | Path | None" = None, max_episodes: Optional[int] = None,
                     extra_provenance: Optional[dict] = None) -> OfflineDataset:
    """Roll out whole episodes and keep them until each good/bad bucket reaches its share.

    An episode is good if any step paid a strictly positive reward. Buckets are filled
    with complete episodes, so each may overshoot its target by less than one episode.
    """
    if n_transitions < 1:
        raise DatasetError("n_transitions must be >= 1")
    if not 0.0 <= good_bad_ratio <= 1.0:
        raise DatasetError("good_bad_ratio must be in [0, 1]")
    target_good = int(round(n_transitions * good_bad_ratio))
    targets = {True: target_good, False: n_transitions - target_good}
    have = {True: 0, False: 0}
    seen = {True: 0, False: 0}
    budget = max_episodes if max_episodes is not None else 50 + 20 * n_transitions
    act = behavior.actor(env)
    act_rng, cand_rng = rng.spawn(2)
    transitions, episodes, labels = [], [], []
    n_eps = {True: 0, False: 0}
    tried = 0
    while have[True] < targets[True] or have[False] < targets[False]:
        if tried >= budget:
            missing = "good" if have[True] < targets[True] else "bad"
            hint = ("use a stronger behavior policy (e.g. a higher scripted quality)" if missing == "good"
                    else "use a weaker behavior policy or a ratio of 1.0")
            raise DatasetError(f"behavior {behavior.id} produced {seen[True]} good and {seen[False]} bad "
                               f"episodes in {tried} tries, not enough {missing} data; {hint}")
        episode = _rollout_episode(env, act, tried, prior, k, act_rng, cand_rng)
        label = any(t.r > 0 for t in episode)
        seen[label] += 1
        if have[label] < targets[label]:
            transitions.extend(episode)
            episodes.extend([tried] * len(episode))
            labels.extend([label] * len(episode))
            have[label] += len(episode)
            n_eps[label] += 1
        tried += 1
    provenance = {
        "format": FORMAT_VERSION,
        "behavior": behavior.id,
        "env": getattr(env, "name", type(env).__name__),
        "prior": getattr(prior, "source", "unknown"),
        "k": int(k),
        "requested_transitions": int(n_transitions),
        "good_bad_ratio": float(good_bad_ratio),
        "total": len(transitions),
        "good": have[True],
        "bad": have[False],
        "good_episodes": n_eps[True],
        "bad_episodes": n_eps[False],
        "episodes_tried": tried,
        **(extra_provenance or {}),
    }
    ds = OfflineDataset(transitions, provenance, episodes, labels)
    if out_path is not None:
        save_dataset(ds, out_path)
    return ds


def save_dataset(ds: OfflineDataset, path: "str | Path") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(json.dumps({"provenance": ds.provenance}, sort_keys=True) + "\n")
        for rec in ds.records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def load_dataset(path: "str | Path") -> OfflineDataset:
    """Parse and validate a dataset file; errors name the line or record that failed."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset not found: {path}")
    transitions, episodes, labels = [], [], []
    provenance = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: malformed JSON on line {lineno}: {exc.msg}") from None
            if provenance is None:
                if not isinstance(obj, dict) or "provenance" not in obj:
                    raise DatasetError(f"{path}: line {lineno} must be the provenance header")
                provenance = obj["provenance"]
                continue
            index = len(transitions)
            try:
                t = from_record(obj, source=str(provenance.get("prior", "dataset")))
            except (ValueError, TypeError, KeyError) as exc:
                raise DatasetError(f"{path}: record {index} (line {lineno}) is invalid: {exc}") from None
            transitions.append(t)
            episodes.append(int(obj["episode"]))
            labels.append(bool(obj["good"]))
    if provenance is None:
        raise DatasetError(f"{path}: empty file")
    ds = OfflineDataset(transitions, provenance, episodes, labels)
    recount = ds.counts()
    for key in ("total", "good", "bad", "good_episodes", "bad_episodes"):
        if key in provenance and provenance[key] != recount[key]:
            raise DatasetError(f"{path}: provenance says {key}={provenance[key]} but records give "
                               f"{recount[key]}")
    return ds


def regenerate_candidates(ds: OfflineDataset, prior: ActionPrior, k: int,
                          rng: np.random.Generator) -> OfflineDataset:
    """Replace stored candidate sets with fresh draws from ``prior``."""
    if isinstance(prior, ScriptedPrior):
        raise DatasetError("scripted priors need live environment states; regenerate the dataset instead")
    out = []
    for t in ds.transitions:
        c = sample_candidates(prior, t.s, k, rng)
        c_next = None if t.done else sample_candidates(prior, t.s_next, k, rng)
        out.append(Transition(t.s, t.a, t.r, t.s_next, t.done, c, c_next))
    return OfflineDataset(out, {**ds.provenance, "prior": getattr(prior, "source", "unknown"), "k": k},
                          list(ds.episodes), list(ds.good))

