"""Experiment configuration: one JSON document mirroring ExperimentConfig field names."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .core import ConfigError
from .envs import ENVS
from .learners.config import LearnerConfig
from .prior import PriorConfig

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def _build(cls, data: Any, prefix: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(prefix, "expected an object")
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix, str(exc)) from None


@dataclass(frozen=True)
class ExperimentConfig:
    env: dict = field(default_factory=lambda: {"name": "frozenlake"})
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    seeds: tuple = DEFAULT_SEEDS
    output_dir: str = "runs"
    # env steps between evaluations online; offline runs evaluate every epoch
    eval_every: int = 1000
    eval_episodes: int = 20
    dataset: Optional[str] = None
    regenerate_candidates: bool = False
    run_id: str = "run"
    record_wall_time: bool = False

    def __post_init__(self):
        if not isinstance(self.env, dict) or self.env.get("name") not in ENVS:
            raise ConfigError("env.name", f"expected one of {sorted(ENVS)}")
        seeds = tuple(self.seeds)
        if not seeds:
            raise ConfigError("seeds", "must be non-empty")
        if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            raise ConfigError("seeds", "must be integers")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds", "must be distinct")
        object.__setattr__(self, "seeds", seeds)
        if self.eval_every < 1:
            raise ConfigError("eval_every", "must be a positive integer")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes", "must be a positive integer")
        if self.dataset is not None and not Path(self.dataset).is_file():
            raise ConfigError("dataset", f"file not found: {self.dataset}")
        if self.learner.kind in ("cql_prior", "cql", "bc") and self.dataset is None:
            raise ConfigError("dataset", f"learner {self.learner.kind!r} is offline and needs a dataset")
        if self.learner.uses_prior and self.prior.kind == "llm" and self.prior.k != self.learner.k:
            # the LLM is asked for exactly prior.k completions per state
            raise ConfigError("prior.k", "must equal learner.k for llm priors")

    @property
    def offline(self) -> bool:
        return self.dataset is not None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        kwargs = dict(data)
        if "learner" in kwargs:
            kwargs["learner"] = _build(LearnerConfig, kwargs["learner"], "learner")
        if "prior" in kwargs:
            kwargs["prior"] = _build(PriorConfig, kwargs["prior"], "prior")
        if "seeds" in kwargs and not isinstance(kwargs["seeds"], (list, tuple)):
            raise ConfigError("seeds", "must be a list")
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError("config", str(exc)) from None

    @classmethod
    def load(cls, path: "str | Path") -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def content_hash(self) -> str:
        """Git-style blob sha1 of the canonical JSON form."""
        body = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Apply dotted-path overrides such as {"learner.alpha": 0.1}."""
        data = self.to_dict()
        for path, value in overrides.items():
            parts = path.split(".")
            node = data
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(path, "unknown field")
                node = node[p]
            if parts[-1] not in node and not (len(parts) == 2 and parts[0] == "env"):
                raise ConfigError(path, "unknown field")
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(data)

    def replace(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)
