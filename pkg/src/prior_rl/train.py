"""Training loops for every learner kind, plus periodic greedy evaluation.

``Trainer.run()`` yields one metric row per evaluation point. Online value learners
alternate exploration and gradient updates, offline learners sweep a fixed dataset by
epoch, and the policy learners collect on-policy rollouts for PPO.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .config import ExperimentConfig
from .core import Action, CandidateSet, State
from .dataset import OfflineDataset, regenerate_candidates
from .envs import make_env
from .learners.config import LearnerConfig
from .learners.policy import (PolicyRollout, bc_loss, build_policy_batch, greedy_policy_action,
                              ppo_kl_update, sample_policy_action)
from .learners.qlearning import (cql_prior_loss, dqn_loss, dqn_prior_explore_step, epsilon_at,
                                 epsilon_greedy_step, greedy_action, q_values)
from .learners.replay import ReplayBuffer
from .posterior import boltzmann_select
from .prior import ActionPrior, LLMPrior, empirical_prior, make_prior, sample_candidates
from .value import Featurizer, QParams, optimizer_step, target_sync

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("run_id", "seed", "env_steps", "episode", "loss", "eval_return_mean",
                  "eval_return_stderr", "projection_failures", "wall_time_s")


@dataclass(frozen=True)
class MetricRow:
    run_id: str
    seed: int
    env_steps: int
    episode: int
    loss: float
    eval_return_mean: float
    eval_return_stderr: float
    projection_failures: int
    wall_time_s: float

    def as_csv(self) -> list[str]:
        f = lambda x: f"{x:.9g}"  # noqa: E731
        return [self.run_id, str(self.seed), str(self.env_steps), str(self.episode), f(self.loss),
                f(self.eval_return_mean), f(self.eval_return_stderr), str(self.projection_failures),
                f(self.wall_time_s)]


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()) if len(v) else float("nan"), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def _prior_for(cfg: ExperimentConfig, env, shared: Optional[ActionPrior] = None, transport=None):
    """Scripted oracles are bound to one env instance; LLM clients are shared."""
    if isinstance(shared, LLMPrior):
        return LLMPrior(shared.client, lambda: env.task_description)
    return make_prior(cfg.prior, env, transport)


class Trainer:
    def __init__(self, cfg: ExperimentConfig, seed: int, dataset: Optional[OfflineDataset] = None,
                 transport=None):
        self.cfg = cfg
        self.lc: LearnerConfig = cfg.learner
        self.seed = int(seed)
        ss = np.random.SeedSequence(self.seed)
        init_ss, act_ss, prior_ss, learn_ss, self._eval_ss = ss.spawn(5)
        self.act_rng = np.random.default_rng(act_ss)
        self.prior_rng = np.random.default_rng(prior_ss)
        self.learn_rng = np.random.default_rng(learn_ss)
        self.env = make_env(cfg.env)
        self.eval_env = make_env(cfg.env)
        self.prior = _prior_for(cfg, self.env, transport=transport)
        self.eval_prior = _prior_for(cfg, self.eval_env, shared=self.prior, transport=transport)
        self.feat = Featurizer(self.lc.dim, self.lc.hash_seed)
        init_rng = np.random.default_rng(init_ss)
        self.params = QParams.create(self.lc.dim, self.lc.hidden, init_rng, hash_seed=self.lc.hash_seed)
        self.value_params = QParams.create(self.lc.dim, self.lc.hidden, init_rng, hash_seed=self.lc.hash_seed)
        self.target = target_sync(self.params)
        self.dataset = dataset
        if dataset is not None and cfg.regenerate_candidates:
            self.dataset = regenerate_candidates(dataset, self.prior, self.lc.k, self.prior_rng)
        self.env_steps = 0
        self.updates = 0
        self.episode = 0
        self._losses: list[float] = []
        self.sync_log: list[int] = []
        self._n_evals = 0
        self._t0 = time.perf_counter()
        self.wall_time = 0.0
        self.diagnostic: Optional[dict] = None

    # -- evaluation -------------------------------------------------------------------------
    def act_eval(self, state: State, rng: np.random.Generator) -> Action:
        kind = self.lc.kind
        if kind in ("bc", "ppo", "ppo_kl"):
            return greedy_policy_action(self.params, state, self.feat)
        if kind in ("dqn_prior", "cql_prior"):
            c = sample_candidates(self.eval_prior, state, self.lc.k, rng)
            if self.lc.alpha_eval is not None:
                q = q_values(self.params, state, c.actions, self.feat)
                return boltzmann_select(c, q, self.lc.alpha_eval, rng).chosen
            return greedy_action(self.params, state, self.feat, c)
        if self.lc.alpha_eval is not None:
            c = CandidateSet(state.admissible, "full")
            q = q_values(self.params, state, c.actions, self.feat)
            return boltzmann_select(c, q, self.lc.alpha_eval, rng).chosen
        return greedy_action(self.params, state, self.feat)

    def evaluate(self, episodes: Optional[int] = None) -> tuple[float, float, list[float]]:
        """Undiscounted return of ``episodes`` evaluation episodes (task seeds 0..n-1)."""
        n = episodes or self.cfg.eval_episodes
        rng = np.random.default_rng(self._eval_ss.spawn(1)[0])
        returns = []
        for i in range(n):
            s = self.eval_env.reset(i)
            total = 0.0
            while not s.done:
                s, r, _ = self.eval_env.step(self.act_eval(s, rng))
                total += r
            returns.append(total)
        m, se = mean_stderr(returns)
        return m, se, returns

    def _row(self, progress: int, episode: int) -> MetricRow:
        m, se, _ = self.evaluate()
        self._n_evals += 1
        loss = float(np.mean(self._losses)) if self._losses else float("nan")
        self._losses = []
        self.wall_time = time.perf_counter() - self._t0
        wall = self.wall_time if self.cfg.record_wall_time else 0.0
        return MetricRow(self.cfg.run_id, self.seed, progress, episode, loss, m, se,
                         int(self.prior.projection_failures + self.eval_prior.projection_failures), wall)

    # -- dispatch ---------------------------------------------------------------------------
    def run(self) -> Iterator[MetricRow]:
        kind = self.lc.kind
        try:
            if self.cfg.offline:
                yield from self._run_offline()
            elif kind in ("dqn_prior", "dqn"):
                yield from self._run_online_q()
            elif kind in ("ppo", "ppo_kl"):
                yield from self._run_ppo()
            else:
                raise ValueError(f"learner {kind!r} needs a dataset")
        except Exception as exc:
            self.diagnostic = {"seed": self.seed, "env_steps": self.env_steps, "updates": self.updates,
                               "episode": self.episode, "error": type(exc).__name__, "message": str(exc)}
            log.error("run aborted: %s", self.diagnostic)
            raise

    def _gradient_step(self, batch, full_action: bool) -> None:
        lc = self.lc
        if lc.kind in ("cql_prior", "cql"):
            loss, grads, _ = cql_prior_loss(batch, self.params, self.target, lc, self.feat, full_action)
        else:
            loss, grads = dqn_loss(batch, self.params, self.target, lc, self.feat, full_action)
        self.params = optimizer_step(self.params, grads, lc.step_size)
        self.updates += 1
        self._losses.append(loss)
        if self.updates % lc.target_sync_interval == 0:
            self.target = target_sync(self.params, self.updates)
            self.sync_log.append(self.updates)

    # -- online Q-learning ----------------------------------------------------------------------
    def _run_online_q(self) -> Iterator[MetricRow]:
        lc = self.lc
        with_prior = lc.kind == "dqn_prior"
        buffer = ReplayBuffer(lc.replay_capacity)
        yield self._row(0, 0)
        s = self.env.reset(self.episode)
        c = sample_candidates(self.prior, s, lc.k, self.prior_rng) if with_prior else None
        while self.env_steps < lc.total_env_steps:
            if with_prior:
                t = dqn_prior_explore_step(self.env, self.prior, self.params, lc.alpha, lc.k,
                                           self.prior_rng, self.feat, candidates=c)
                c = t.candidates_s_next
            else:
                t = epsilon_greedy_step(self.env, self.params, epsilon_at(self.env_steps, lc),
                                        self.act_rng, self.feat)
            buffer.add(t)
            self.env_steps += 1
            if t.done:
                self.episode += 1
                s = self.env.reset(self.episode)
                c = sample_candidates(self.prior, s, lc.k, self.prior_rng) if with_prior else None
            if self.env_steps > lc.warmup_steps and self.env_steps % lc.update_frequency == 0:
                self._gradient_step(buffer.sample(lc.minibatch, self.learn_rng), full_action=not with_prior)
            if self.env_steps % self.cfg.eval_every == 0:
                yield self._row(self.env_steps, self.episode)

    # -- offline --------------------------------------------------------------------------------
    def _run_offline(self) -> Iterator[MetricRow]:
        lc = self.lc
        data = self.dataset.transitions
        n = len(data)
        if n == 0:
            raise ValueError("empty dataset")
        per_epoch = lc.updates_per_epoch or max(1, math.ceil(n / lc.minibatch))
        full_action = lc.kind in ("cql", "dqn")
        yield self._row(0, 0)
        for epoch in range(1, lc.epochs + 1):
            order = self.learn_rng.permutation(n)
            pos = 0
            for _ in range(per_epoch):
                if pos + lc.minibatch > n:
                    order = self.learn_rng.permutation(n)
                    pos = 0
                idx = order[pos:pos + lc.minibatch]
                pos += lc.minibatch
                batch = [data[i] for i in idx]
                if lc.kind == "bc":
                    pb = build_policy_batch([t.s for t in batch], [t.a for t in batch], self.feat)
                    loss, grads = bc_loss(pb, self.params)
                    self.params = optimizer_step(self.params, grads, lc.step_size)
                    self.updates += 1
                    self._losses.append(loss)
                else:
                    self._gradient_step(batch, full_action)
            self.episode = epoch
            yield self._row(self.updates, epoch)

    # -- PPO ------------------------------------------------------------------------------------
    def _run_ppo(self) -> Iterator[MetricRow]:
        lc = self.lc
        yield self._row(0, 0)
        s = self.env.reset(self.episode)
        next_eval = self.cfg.eval_every
        self.ppo_skipped = 0
        while self.env_steps < lc.total_env_steps:
            ro = PolicyRollout()
            for _ in range(min(lc.rollout_steps, lc.total_env_steps - self.env_steps)):
                a, logp = sample_policy_action(self.params, s, self.feat, self.act_rng)
                if lc.kind == "ppo_kl":
                    ro.priors.append(empirical_prior(sample_candidates(self.prior, s, lc.k, self.prior_rng)))
                s_next, r, done = self.env.step(a)
                ro.states.append(s)
                ro.actions.append(a)
                ro.old_logp.append(logp)
                ro.rewards.append(r)
                ro.dones.append(done)
                self.env_steps += 1
                if done:
                    self.episode += 1
                    s = self.env.reset(self.episode)
                else:
                    s = s_next
            ro.last_state = s if not ro.dones[-1] else None
            self.params, self.value_params, info = ppo_kl_update(ro, self.params, self.value_params, lc,
                                                                 self.feat, self.learn_rng)
            self.updates += 1
            self.ppo_skipped += info["skipped"]
            self._losses.append(info["loss"])
            if self.env_steps >= next_eval:
                yield self._row(self.env_steps, self.episode)
                while next_eval <= self.env_steps:
                    next_eval += self.cfg.eval_every


def train(cfg: ExperimentConfig, seed: int, dataset: Optional[OfflineDataset] = None,
          transport=None) -> Iterator[MetricRow]:
    """Stream metric rows for one seed."""
    return Trainer(cfg, seed, dataset, transport).run()
