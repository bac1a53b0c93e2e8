"""Reinforcement learning with language-model action priors."""

__version__ = "0.1.0"
