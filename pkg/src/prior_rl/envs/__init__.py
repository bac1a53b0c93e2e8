"""Deterministic text environments."""
from __future__ import annotations

from ..core import ConfigError
from .base import TextEnv
from .chain import ChainEnv
from .frozenlake import DEFAULT_MAP, FrozenLakeEnv
from .minicooked import MiniCookedEnv
from .texthouse import TextHouseEnv

ENVS = {
    "frozenlake": FrozenLakeEnv,
    "minicooked": MiniCookedEnv,
    "texthouse": TextHouseEnv,
    "chain": ChainEnv,
}


def make_env(spec: dict) -> TextEnv:
    """Build an env from a config mapping such as ``{"name": "minicooked", "task": "salad"}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in ENVS:
        raise ConfigError("env.name", f"unknown env {name!r}; expected one of {sorted(ENVS)}")
    spec.pop("task_seed", None)
    if name == "frozenlake" and "map" in spec:
        spec["grid"] = spec.pop("map")
    try:
        return ENVS[name](**spec)
    except TypeError as exc:
        raise ConfigError("env", str(exc)) from None


__all__ = ["TextEnv", "ChainEnv", "FrozenLakeEnv", "MiniCookedEnv", "TextHouseEnv", "DEFAULT_MAP",
           "ENVS", "make_env"]
