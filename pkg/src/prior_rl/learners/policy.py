"""Softmax policy over admissible actions: behavior cloning and KL-regularized PPO.

Logits come from the adapter network applied to featurize(s, a) for each admissible
action, so a minibatch is a ragged stack of per-state action rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import Action, State
from ..prior import EmpiricalPrior
from ..value import Featurizer, QParams, backward, forward, mse_gradient, optimizer_step
from .config import LearnerConfig

PRIOR_FLOOR = 1e-6


@dataclass
class PolicyBatch:
    """Ragged action rows for a set of states."""

    X: np.ndarray
    sizes: np.ndarray
    offsets: np.ndarray
    action_pos: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return self.offsets + self.action_pos

    def __len__(self) -> int:
        return len(self.sizes)


def build_policy_batch(states: Sequence[State], actions: Sequence[Action], feat: Featurizer) -> PolicyBatch:
    pos = []
    for s, a in zip(states, actions):
        try:
            pos.append(s.admissible.index(a))
        except ValueError:
            raise ValueError(f"action {a.text!r} is not admissible in state {s.observation!r}") from None
    sizes = np.array([len(s.admissible) for s in states], dtype=int)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(int)
    X = feat.matrix((s, a) for s in states for a in s.admissible)
    return PolicyBatch(X, sizes, offsets, np.array(pos, dtype=int))


def segment_log_softmax(z: np.ndarray, sizes: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    seg_max = np.maximum.reduceat(z, offsets)
    shifted = z - np.repeat(seg_max, sizes)
    log_norm = np.log(np.add.reduceat(np.exp(shifted), offsets))
    return shifted - np.repeat(log_norm, sizes)


def policy_log_probs(policy: QParams, batch: PolicyBatch) -> tuple[np.ndarray, tuple]:
    z, cache = forward(policy.weights, batch.X)
    return segment_log_softmax(z, batch.sizes, batch.offsets), cache


def action_distribution(policy: QParams, state: State, feat: Featurizer) -> np.ndarray:
    z, _ = forward(policy.weights, feat.matrix((state, a) for a in state.admissible))
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def greedy_policy_action(policy: QParams, state: State, feat: Featurizer) -> Action:
    p = action_distribution(policy, state, feat)
    best = p.max()
    return min((a for a, pi in zip(state.admissible, p) if pi == best), key=lambda a: a.text)


def sample_policy_action(policy: QParams, state: State, feat: Featurizer,
                         rng: np.random.Generator) -> tuple[Action, float]:
    p = action_distribution(policy, state, feat)
    i = int(rng.choice(len(p), p=p))
    return state.admissible[i], float(np.log(p[i]))


# -- behavior cloning -------------------------------------------------------------------------

def bc_loss(batch: PolicyBatch, policy: QParams) -> tuple[float, dict]:
    """Mean negative log-likelihood of the dataset actions."""
    logp, cache = policy_log_probs(policy, batch)
    n = len(batch)
    loss = float(-np.mean(logp[batch.rows]))
    dz = np.exp(logp) / n
    dz[batch.rows] -= 1.0 / n
    return loss, backward(policy.weights, cache, dz)


# -- PPO terms (each returns per-sample values and d(value)/d(logit) per row) ---------------------

def _seg_sum(x: np.ndarray, batch: PolicyBatch) -> np.ndarray:
    return np.add.reduceat(x, batch.offsets)


def surrogate_term(logp: np.ndarray, batch: PolicyBatch, old_logp: np.ndarray, adv: np.ndarray,
                   clip_eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """min(ratio * A, clip(ratio) * A) per sample; also returns a validity mask."""
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(logp[batch.rows] - old_logp)
    valid = np.isfinite(ratio)
    ratio = np.where(valid, ratio, 1.0)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    value = np.minimum(ratio * adv, clipped * adv)
    active = (ratio * adv <= clipped * adv) & valid
    coef = np.where(active, ratio * adv, 0.0)
    pi = np.exp(logp)
    d = -pi * np.repeat(coef, batch.sizes)
    d[batch.rows] += coef
    return np.where(valid, value, 0.0), d, valid


def entropy_term(logp: np.ndarray, batch: PolicyBatch) -> tuple[np.ndarray, np.ndarray]:
    pi = np.exp(logp)
    h = -_seg_sum(pi * logp, batch)
    d = -pi * (logp + np.repeat(h, batch.sizes))
    return h, d


def kl_term(logp: np.ndarray, batch: PolicyBatch, prior_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """KL(pi || p_hat) over admissible actions, with p_hat floored at 1e-6."""
    pi = np.exp(logp)
    g = logp - np.log(np.maximum(prior_rows, PRIOR_FLOOR))
    kl = _seg_sum(pi * g, batch)
    d = pi * (g - np.repeat(kl, batch.sizes))
    return kl, d


def _finish(policy: QParams, cache: tuple, objective_rows: np.ndarray, n: int) -> dict:
    return backward(policy.weights, cache, -objective_rows / max(n, 1))


def clipped_ppo_loss(batch: PolicyBatch, policy: QParams, old_logp: np.ndarray, adv: np.ndarray,
                     clip_eps: float, entropy_coef: float) -> tuple[float, dict, dict]:
    """Plain clipped PPO with an entropy bonus (no prior term)."""
    logp, cache = policy_log_probs(policy, batch)
    surr, d_surr, valid = surrogate_term(logp, batch, old_logp, adv, clip_eps)
    ent, d_ent = entropy_term(logp, batch)
    mask_rows = np.repeat(valid, batch.sizes)
    obj_rows = np.where(mask_rows, d_surr + entropy_coef * d_ent, 0.0)
    n = int(valid.sum())
    loss = -float(np.sum(np.where(valid, surr + entropy_coef * ent, 0.0)) / max(n, 1))
    return loss, _finish(policy, cache, obj_rows, n), {"skipped": int((~valid).sum()),
                                                       "entropy": float(ent.mean())}


def ppo_kl_loss(batch: PolicyBatch, policy: QParams, old_logp: np.ndarray, adv: np.ndarray,
                prior_rows: np.ndarray, clip_eps: float, entropy_coef: float,
                alpha: float) -> tuple[float, dict, dict]:
    """Clipped PPO + entropy bonus - alpha * KL(pi || empirical prior), negated as a loss."""
    logp, cache = policy_log_probs(policy, batch)
    surr, d_surr, valid = surrogate_term(logp, batch, old_logp, adv, clip_eps)
    ent, d_ent = entropy_term(logp, batch)
    kl, d_kl = kl_term(logp, batch, prior_rows)
    mask_rows = np.repeat(valid, batch.sizes)
    obj_rows = np.where(mask_rows, d_surr + entropy_coef * d_ent - alpha * d_kl, 0.0)
    n = int(valid.sum())
    loss = -float(np.sum(np.where(valid, surr + entropy_coef * ent - alpha * kl, 0.0)) / max(n, 1))
    info = {"skipped": int((~valid).sum()), "entropy": float(ent.mean()), "kl": float(kl.mean())}
    return loss, _finish(policy, cache, obj_rows, n), info


def prior_rows_for(states: Sequence[State], priors: Sequence[EmpiricalPrior]) -> np.ndarray:
    return np.array([p.prob(a) for s, p in zip(states, priors) for a in s.admissible])


# -- rollouts and updates ---------------------------------------------------------------------------

def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, last_value: float,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and the matching value targets."""
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        next_v = last_value if t == n - 1 else values[t + 1]
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_v * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + values


@dataclass
class PolicyRollout:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    old_logp: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    priors: list = field(default_factory=list)
    last_state: Optional[State] = None

    def __len__(self) -> int:
        return len(self.states)


def state_values(value_params: QParams, states: Sequence[State], feat: Featurizer) -> np.ndarray:
    return forward(value_params.weights, feat.matrix((s, None) for s in states))[0]


def ppo_kl_update(rollout: PolicyRollout, policy: QParams, value_params: QParams, cfg: LearnerConfig,
                  feat: Featurizer, rng: np.random.Generator) -> tuple[QParams, QParams, dict]:
    """Several epochs of minibatch updates on one rollout; alpha = 0 gives plain PPO."""
    values = state_values(value_params, rollout.states, feat)
    last = rollout.last_state
    last_v = 0.0 if last is None or last.done else float(state_values(value_params, [last], feat)[0])
    adv, returns = gae(np.array(rollout.rewards), values, np.array(rollout.dones), last_v,
                       cfg.gamma, cfg.gae_lambda)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    old_logp = np.array(rollout.old_logp)
    n = len(rollout)
    stats = {"loss": [], "kl": [], "entropy": [], "skipped": 0, "value_loss": []}
    for _ in range(cfg.ppo_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            states = [rollout.states[i] for i in idx]
            batch = build_policy_batch(states, [rollout.actions[i] for i in idx], feat)
            if cfg.kind == "ppo_kl":
                prior_rows = prior_rows_for(states, [rollout.priors[i] for i in idx])
                loss, grads, info = ppo_kl_loss(batch, policy, old_logp[idx], adv[idx], prior_rows,
                                                cfg.clip_eps, cfg.entropy_coef, cfg.alpha)
                stats["kl"].append(info["kl"])
            else:
                loss, grads, info = clipped_ppo_loss(batch, policy, old_logp[idx], adv[idx],
                                                     cfg.clip_eps, cfg.entropy_coef)
            stats["skipped"] += info["skipped"]
            stats["entropy"].append(info["entropy"])
            stats["loss"].append(loss)
            policy = optimizer_step(policy, grads, cfg.step_size)
            v_loss, v_grads = mse_gradient(value_params.weights, feat.matrix((s, None) for s in states),
                                           returns[idx])
            stats["value_loss"].append(v_loss)
            value_params = optimizer_step(value_params, v_grads, cfg.step_size)
    summary = {k: (float(np.mean(v)) if isinstance(v, list) and v else v) for k, v in stats.items()}
    return policy, value_params, summary
