"""Q-learning inside the prior's candidate space, and the full-action-space baselines.

``full_action=True`` switches every candidate-restricted operation (Bellman max,
conservative logsumexp, action choice) to the state's whole admissible set, which
gives plain DQN / CQL.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..core import Action, CandidateSet, Transition, as_action
from ..posterior import boltzmann_select, greedy_select
from ..prior import ActionPrior, sample_candidates
from ..value import Featurizer, QParams, TargetParams, backward, forward, q_forward_batch
from .config import LearnerConfig


def _segments(sizes: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    sizes = np.asarray(sizes, dtype=int)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return sizes, offsets


def segment_logsumexp(values: np.ndarray, sizes: np.ndarray, offsets: np.ndarray,
                      scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment log(sum(exp(values / scale))) and the per-row softmax weights."""
    z = values / scale
    seg_max = np.maximum.reduceat(z, offsets)
    e = np.exp(z - np.repeat(seg_max, sizes))
    seg_sum = np.add.reduceat(e, offsets)
    weights = e / np.repeat(seg_sum, sizes)
    return seg_max + np.log(seg_sum), weights


def next_actions(t: Transition, full_action: bool, distinct: bool = True) -> tuple[Action, ...]:
    if full_action:
        return t.s_next.admissible
    if t.candidates_s_next is None:
        raise ValueError("no candidate set for non-terminal next state")
    return t.candidates_s_next.distinct() if distinct else t.candidates_s_next.actions


def td_targets(batch: Sequence[Transition], target: "TargetParams | QParams", gamma: float,
               mode: str, alpha: float, feat: Featurizer, full_action: bool = False) -> np.ndarray:
    """Bellman targets restricted to each transition's next-state candidates.

    hard_max: r + gamma * max over distinct candidates of target-Q.
    soft_logsumexp: r + gamma * alpha * log mean exp(target-Q / alpha) over the candidate multiset.
    Terminal transitions get y = r.
    """
    rewards = np.array([t.r for t in batch], dtype=float)
    y = rewards.copy()
    live = [i for i, t in enumerate(batch) if not t.done]
    if not live:
        return y
    soft = mode == "soft_logsumexp"
    groups = [next_actions(batch[i], full_action, distinct=not soft) for i in live]
    sizes, offsets = _segments([len(g) for g in groups])
    X = feat.matrix((batch[i].s_next, a) for i, g in zip(live, groups) for a in g)
    q_next = q_forward_batch(target, X)
    if soft:
        lse, _ = segment_logsumexp(q_next, sizes, offsets, scale=alpha)
        boot = alpha * (lse - np.log(sizes))
    elif mode == "hard_max":
        boot = np.maximum.reduceat(q_next, offsets)
    else:
        raise ValueError(f"unknown backup mode {mode!r}")
    y[live] += gamma * boot
    return y


def td_target(t: Transition, target: "TargetParams | QParams", gamma: float, mode: str = "hard_max",
              alpha: float = 1.0, feat: Optional[Featurizer] = None, full_action: bool = False) -> float:
    feat = feat or Featurizer(target.weights["W1"].shape[0])
    return float(td_targets([t], target, gamma, mode, alpha, feat, full_action)[0])


def dqn_loss(batch: Sequence[Transition], qparams: QParams, target: "TargetParams | QParams",
             cfg: LearnerConfig, feat: Featurizer, full_action: bool = False,
             y: Optional[np.ndarray] = None) -> tuple[float, dict]:
    """Mean squared TD error and its gradient with respect to ``qparams`` only."""
    if not batch:
        raise ValueError("empty batch")
    if y is None:
        y = td_targets(batch, target, cfg.gamma, cfg.backup_mode, cfg.alpha, feat, full_action)
    X = feat.matrix((t.s, t.a) for t in batch)
    q, cache = forward(qparams.weights, X)
    err = q - y
    loss = float(np.mean(err ** 2))
    return loss, backward(qparams.weights, cache, 2.0 * err / len(batch))


def cql_prior_loss(batch: Sequence[Transition], qparams: QParams, target: "TargetParams | QParams",
                   cfg: LearnerConfig, feat: Featurizer, full_action: bool = False,
                   y: Optional[np.ndarray] = None) -> tuple[float, dict, dict]:
    """beta * E[logsumexp_{C(s) + {a}} Q(s, .) - Q(s, a)] + 1/2 * E[(Q(s, a) - y)^2].

    The dataset action is always added to the candidate set so the conservative term
    stays non-negative. Returns (loss, gradient, diagnostics).
    """
    if not batch:
        raise ValueError("empty batch")
    if y is None:
        y = td_targets(batch, target, cfg.gamma, cfg.backup_mode, cfg.alpha, feat, full_action)
    groups, data_pos = [], []
    for t in batch:
        if full_action:
            acts = t.s.admissible
        else:
            if t.candidates_s is None:
                raise ValueError("no candidate set for dataset state")
            acts = t.candidates_s.distinct()
            if t.a not in acts:
                acts = acts + (t.a,)
        groups.append(acts)
        data_pos.append(acts.index(t.a))
    sizes, offsets = _segments([len(g) for g in groups])
    X = feat.matrix((t.s, a) for t, g in zip(batch, groups) for a in g)
    q_all, cache = forward(qparams.weights, X)
    rows = offsets + np.asarray(data_pos)
    q_sa = q_all[rows]
    lse, soft_w = segment_logsumexp(q_all, sizes, offsets)
    n = len(batch)
    conservative = lse - q_sa
    err = q_sa - y
    loss = float(cfg.beta * np.mean(conservative) + 0.5 * np.mean(err ** 2))
    dout = cfg.beta * soft_w / n
    dout[rows] += -cfg.beta / n + err / n
    grads = backward(qparams.weights, cache, dout)
    return loss, grads, {"conservative": conservative, "td": float(np.mean(err ** 2))}


# -- acting ---------------------------------------------------------------------------------

def q_values(qparams: "QParams | TargetParams", state, actions: Sequence[Action], feat: Featurizer) -> np.ndarray:
    return q_forward_batch(qparams, feat.matrix((state, a) for a in actions))


def greedy_action(qparams, state, feat: Featurizer, candidates: Optional[CandidateSet] = None) -> Action:
    c = candidates if candidates is not None else CandidateSet(state.admissible, "full")
    return greedy_select(c, q_values(qparams, state, c.actions, feat))


def dqn_prior_explore_step(env, prior: ActionPrior, qparams: QParams, alpha: float, k: int,
                           rng: np.random.Generator, feat: Featurizer,
                           candidates: Optional[CandidateSet] = None) -> Transition:
    """Draw C^k(s), Boltzmann-select among the candidates, step, and draw C^k(s')."""
    s = env.state
    c = candidates if candidates is not None else sample_candidates(prior, s, k, rng)
    choice = boltzmann_select(c, q_values(qparams, s, c.actions, feat), alpha, rng)
    s_next, r, done = env.step(choice.chosen)
    c_next = None if done else sample_candidates(prior, s_next, k, rng)
    return Transition(s, choice.chosen, r, s_next, done, c, c_next)


def epsilon_greedy_step(env, qparams: QParams, epsilon: float, rng: np.random.Generator,
                        feat: Featurizer) -> Transition:
    """One exploration step of plain DQN over the full admissible set."""
    s = env.state
    u = rng.random()
    j = int(rng.integers(len(s.admissible)))
    a = s.admissible[j] if u < epsilon else greedy_action(qparams, s, feat)
    s_next, r, done = env.step(a)
    return Transition(s, as_action(a), r, s_next, done)


def epsilon_at(step: int, cfg: LearnerConfig) -> float:
    if cfg.epsilon_decay_steps == 0:
        return cfg.epsilon_end
    frac = min(1.0, step / cfg.epsilon_decay_steps)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)
