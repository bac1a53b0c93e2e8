from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

from ..core import ConfigError

LEARNER_KINDS = ("dqn_prior", "dqn", "cql_prior", "cql", "bc", "ppo_kl", "ppo")
PRIOR_LEARNERS = ("dqn_prior", "cql_prior", "ppo_kl")
OFFLINE_ONLY = ("cql_prior", "cql", "bc")
BACKUP_MODES = ("hard_max", "soft_logsumexp")
POLICY_LEARNERS = ("bc", "ppo_kl", "ppo")
VALUE_LR, POLICY_LR = 5e-4, 1e-4
VALUE_BATCH, POLICY_BATCH = 128, 64


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "dqn_prior"
    gamma: float = 0.95
    alpha: float = 0.1
    beta: float = 5.0
    k: int = 5
    # None picks the per-family default (value learners vs. policy learners)
    lr: Optional[float] = None
    batch_size: Optional[int] = None
    update_frequency: int = 5
    target_sync_interval: int = 5
    total_env_steps: int = 20_000
    backup_mode: str = "hard_max"
    replay_capacity: int = 50_000
    warmup_steps: int = 500
    # plain-DQN exploration over the full action space
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5_000
    # greedy evaluation when None
    alpha_eval: Optional[float] = None
    # offline training
    epochs: int = 50
    updates_per_epoch: Optional[int] = None
    # policy learners
    entropy_coef: float = 0.01
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    ppo_epochs: int = 4
    rollout_steps: int = 256
    # adapter network
    dim: int = 256
    hidden: int = 64
    hash_seed: int = 0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ConfigError("learner.kind", f"expected one of {LEARNER_KINDS}, got {self.kind!r}")
        if self.backup_mode not in BACKUP_MODES:
            raise ConfigError("learner.backup_mode", f"expected one of {BACKUP_MODES}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("learner.gamma", "must be in [0, 1]")
        if self.kind in ("ppo", "ppo_kl"):
            # here alpha is the KL coefficient, so zero is allowed
            if self.alpha < 0:
                raise ConfigError("learner.alpha", "must be >= 0")
        elif not self.alpha > 0:
            raise ConfigError("learner.alpha", "temperature must be > 0")
        if self.beta < 0:
            raise ConfigError("learner.beta", "must be >= 0")
        if self.alpha_eval is not None and not self.alpha_eval > 0:
            raise ConfigError("learner.alpha_eval", "must be > 0 or null")
        if self.lr is not None and not self.lr > 0:
            raise ConfigError("learner.lr", "must be > 0 or null")
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise ConfigError("learner.batch_size", "must be a positive integer or null")
        for name in ("k", "update_frequency", "target_sync_interval", "total_env_steps",
                     "replay_capacity", "epochs", "ppo_epochs", "rollout_steps", "dim", "hidden"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"learner.{name}", "must be a positive integer")
        if self.warmup_steps < 0 or self.epsilon_decay_steps < 0:
            raise ConfigError("learner.warmup_steps", "must be non-negative")
        if self.updates_per_epoch is not None and self.updates_per_epoch < 1:
            raise ConfigError("learner.updates_per_epoch", "must be positive or null")
        if not 0 < self.clip_eps < 1:
            raise ConfigError("learner.clip_eps", "must be in (0, 1)")

    @property
    def is_policy(self) -> bool:
        return self.kind in POLICY_LEARNERS

    @property
    def step_size(self) -> float:
        if self.lr is not None:
            return float(self.lr)
        return POLICY_LR if self.is_policy else VALUE_LR

    @property
    def minibatch(self) -> int:
        if self.batch_size is not None:
            return int(self.batch_size)
        return POLICY_BATCH if self.is_policy else VALUE_BATCH

    @property
    def uses_prior(self) -> bool:
        return self.kind in PRIOR_LEARNERS

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}
