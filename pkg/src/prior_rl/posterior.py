"""Posterior action inference: Boltzmann reweighting of prior candidates by Q-values.

Drawing k candidates from the prior and then sampling one of them with probability
softmax(Q / alpha) approaches prior(a) * exp(Q(a) / alpha) / E_prior[exp(Q / alpha)]
as k grows; ``validate_prop1`` measures that convergence by Monte Carlo.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import Action, CandidateSet

log = logging.getLogger(__name__)

MIN_VALIDATION_SAMPLES = 10_000


@dataclass(frozen=True)
class BoltzmannChoice:
    chosen: Action
    probs: tuple[float, ...]
    alpha: float
    index: int


@dataclass(frozen=True)
class LimitPolicy:
    support: tuple
    probs: tuple[float, ...]

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.probs))


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")


def boltzmann_probs(q: np.ndarray, alpha: float, axis: int = -1) -> np.ndarray:
    """Softmax of q / alpha with max subtraction."""
    _check_alpha(alpha)
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("Q-values must be finite")
    z = q / alpha
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def boltzmann_select(c: CandidateSet, q: Sequence[float], alpha: float,
                     rng: np.random.Generator) -> BoltzmannChoice:
    """Sample one candidate slot; duplicated actions accumulate mass."""
    q = np.asarray(q, dtype=float)
    if q.shape != (len(c),):
        raise ValueError(f"expected {len(c)} Q-values, got shape {q.shape}")
    probs = boltzmann_probs(q, alpha)
    i = int(rng.choice(len(probs), p=probs))
    return BoltzmannChoice(c.actions[i], tuple(float(p) for p in probs), float(alpha), i)


def greedy_select(c: CandidateSet, q: Sequence[float]) -> Action:
    """Argmax over candidates; ties go to the lexicographically smallest text, then lowest index."""
    q = np.asarray(q, dtype=float)
    best = q.max()
    ties = [(c.actions[i].text, i) for i in range(len(q)) if q[i] == best]
    return c.actions[min(ties)[1]]


def limit_policy(prior: "Mapping | object", qfn: "Callable | Mapping", alpha: float) -> LimitPolicy:
    """Normalized prior(a) * exp(Q(a) / alpha) over the prior's support.

    ``prior`` is an ``EmpiricalPrior`` (``support``/``probs``) or a mapping action -> mass;
    ``qfn`` is a callable or a mapping from action to Q.
    """
    _check_alpha(alpha)
    if hasattr(prior, "support"):
        support, mass = tuple(prior.support), np.asarray(prior.probs, dtype=float)
    else:
        support, mass = tuple(prior.keys()), np.asarray(list(prior.values()), dtype=float)
    if len(support) == 0:
        raise ValueError("prior support is empty")
    if np.any(mass < 0) or mass.sum() <= 0:
        raise ValueError("prior has no positive mass")
    q_of = qfn if callable(qfn) else qfn.__getitem__
    q = np.array([float(q_of(a)) for a in support])
    with np.errstate(divide="ignore"):
        logits = np.log(mass) + q / alpha
    logits -= logits[np.isfinite(logits)].max()
    w = np.exp(logits)
    w /= w.sum()
    return LimitPolicy(support, tuple(float(x) for x in w))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def sampled_marginal(prior_probs: np.ndarray, q_values: np.ndarray, alpha: float, k: int,
                     n_samples: int, rng: np.random.Generator, chunk: int = 20_000) -> np.ndarray:
    """Empirical distribution of the action chosen by (draw k from prior, Boltzmann-select)."""
    prior_probs = np.asarray(prior_probs, dtype=float)
    q_values = np.asarray(q_values, dtype=float)
    n_actions = len(prior_probs)
    counts = np.zeros(n_actions)
    rows = max(1, chunk // max(k, 1))
    done = 0
    while done < n_samples:
        m = min(rows, n_samples - done)
        draws = rng.choice(n_actions, size=(m, k), p=prior_probs)
        w = boltzmann_probs(q_values[draws], alpha, axis=1)
        cum = np.cumsum(w, axis=1)
        u = rng.random(m) * cum[:, -1]
        slot = np.minimum((cum < u[:, None]).sum(axis=1), k - 1)
        chosen = draws[np.arange(m), slot]
        counts += np.bincount(chosen, minlength=n_actions)
        done += m
    return counts / n_samples


@dataclass(frozen=True)
class Prop1Row:
    k: int
    tv_distance: float
    n_samples: int
    alpha: float


def validate_prop1(prior_probs: Sequence[float], q_values: Sequence[float], alpha: float,
                   ks: Sequence[int], n_samples: int, rng: np.random.Generator
                   ) -> tuple[list[Prop1Row], list[str]]:
    """TV distance between the finite-k sampler and its closed-form limit, per k.

    Returns the rows and a list of warnings (e.g. too few samples).
    """
    prior_probs = np.asarray(prior_probs, dtype=float)
    q_values = np.asarray(q_values, dtype=float)
    if len(prior_probs) > 10 or len(prior_probs) != len(q_values):
        raise ValueError("toy problem needs matching prior/Q vectors with at most 10 actions")
    if list(ks) != sorted(ks) or min(ks) < 1:
        raise ValueError("ks must be positive and sorted ascending")
    warnings = []
    if n_samples < MIN_VALIDATION_SAMPLES:
        msg = f"n_samples={n_samples} is below {MIN_VALIDATION_SAMPLES}; TV estimates are noisy"
        log.warning(msg)
        warnings.append(msg)
    actions = list(range(len(prior_probs)))
    limit = np.array(limit_policy(dict(zip(actions, prior_probs)), dict(zip(actions, q_values)),
                                  alpha).probs)
    rows = []
    for k in ks:
        marginal = sampled_marginal(prior_probs, q_values, alpha, k, n_samples, rng)
        rows.append(Prop1Row(int(k), total_variation(marginal, limit), int(n_samples), float(alpha)))
    return rows, warnings


def write_prop1_csv(path: "str | Path", rows: Sequence[Prop1Row], warnings: Sequence[str] = (),
                    alpha: Optional[float] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "tv_distance", "n_samples", "alpha"])
        for r in rows:
            w.writerow([r.k, f"{r.tv_distance:.9g}", r.n_samples, f"{r.alpha:.9g}"])
        for msg in warnings:
            w.writerow(["warning", msg, rows[0].n_samples if rows else "",
                        "" if alpha is None else f"{alpha:.9g}"])
    return path
