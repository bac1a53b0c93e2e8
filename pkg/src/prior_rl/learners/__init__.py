"""Value learners (candidate-restricted DQN/CQL and full-action baselines), BC and PPO."""
from .config import BACKUP_MODES, LEARNER_KINDS, OFFLINE_ONLY, PRIOR_LEARNERS, LearnerConfig
from .policy import (PolicyBatch, PolicyRollout, action_distribution, bc_loss, build_policy_batch,
                     clipped_ppo_loss, entropy_term, gae, greedy_policy_action, kl_term,
                     policy_log_probs, ppo_kl_loss, ppo_kl_update, prior_rows_for,
                     sample_policy_action, surrogate_term)
from .qlearning import (cql_prior_loss, dqn_loss, dqn_prior_explore_step, epsilon_at,
                        epsilon_greedy_step, greedy_action, q_values, segment_logsumexp, td_target,
                        td_targets)
from .replay import ReplayBuffer

__all__ = [
    "BACKUP_MODES", "LEARNER_KINDS", "OFFLINE_ONLY", "PRIOR_LEARNERS", "LearnerConfig",
    "PolicyBatch", "PolicyRollout", "action_distribution", "bc_loss", "build_policy_batch",
    "clipped_ppo_loss", "entropy_term", "gae", "greedy_policy_action", "kl_term", "policy_log_probs", "ppo_kl_loss", "prior_rows_for",
    "ppo_kl_update", "sample_policy_action", "surrogate_term", "cql_prior_loss", "dqn_loss",
    "dqn_prior_explore_step", "epsilon_at", "epsilon_greedy_step", "greedy_action", "q_values",
    "segment_logsumexp", "td_target", "td_targets", "ReplayBuffer",
]
