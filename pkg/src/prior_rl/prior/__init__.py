"""Action priors p(a|s): uniform, scripted, and remote language-model samplers."""
from ..core import CandidateSet
from .candidates import (ActionPrior, EmpiricalPrior, LLMPrior, PriorConfig, ScriptedPrior,
                         UniformPrior, empirical_prior, make_prior, sample_candidates, state_key)
from .llm import (API_KEY_ENV, CompletionCache, LLMClient, TransportError, build_prompt, cache_key,
                  llm_request)
from .projection import project_output

__all__ = [
    "ActionPrior", "CandidateSet", "EmpiricalPrior", "LLMPrior", "PriorConfig", "ScriptedPrior",
    "UniformPrior", "empirical_prior", "make_prior", "sample_candidates", "state_key", "API_KEY_ENV",
    "CompletionCache", "LLMClient", "TransportError", "build_prompt", "cache_key", "llm_request",
    "project_output",
]
