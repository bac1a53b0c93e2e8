"""Frozen hashing featurizer plus a trainable two-layer adapter producing one scalar.

The same adapter shape serves as Q-network (scalar value per state-action pair),
policy network (one logit per admissible action) and state-value baseline.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Action, PriorRLError, State

DIM = 256
HIDDEN = 64
SEP = "[sep]"
_TOKEN = re.compile(r"\[sep\]|[a-z0-9]+")
CHECKPOINT_FORMAT = 1


class NumericalError(PriorRLError, FloatingPointError):
    pass


# -- featurization ------------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@lru_cache(maxsize=1 << 16)
def _bucket(token: str, dim: int, hash_seed: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                             salt=hash_seed.to_bytes(8, "little", signed=False)).digest()
    h = int.from_bytes(digest, "little")
    return h % dim, (1.0 if (h >> 63) & 1 else -1.0)


def hashed_ngrams(tokens: Sequence[str]) -> list[str]:
    return list(tokens) + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


def featurize_text(text: str, dim: int = DIM, hash_seed: int = 0) -> np.ndarray:
    """Signed hashing of unigrams and bigrams, L2-normalized."""
    vec = np.zeros(dim)
    for gram in hashed_ngrams(tokenize(text)):
        idx, sign = _bucket(gram, dim, hash_seed)
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def pair_text(s: State, a: Optional[Action]) -> str:
    return s.observation if a is None else f"{s.observation} {SEP} {a.text}"


def featurize(s: State, a: Action, dim: int = DIM, hash_seed: int = 0) -> np.ndarray:
    return featurize_text(pair_text(s, a), dim, hash_seed)


class Featurizer:
    """Memoizing featurizer keyed by (observation, action text)."""

    def __init__(self, dim: int = DIM, hash_seed: int = 0, max_entries: int = 200_000):
        self.dim = dim
        self.hash_seed = hash_seed
        self.max_entries = max_entries
        self._cache: dict[tuple[str, Optional[str]], np.ndarray] = {}

    def __call__(self, s: State, a: Optional[Action]) -> np.ndarray:
        key = (s.observation, None if a is None else a.text)
        vec = self._cache.get(key)
        if vec is None:
            vec = featurize_text(pair_text(s, a), self.dim, self.hash_seed)
            vec.setflags(write=False)
            if len(self._cache) >= self.max_entries:
                self._cache.clear()
            self._cache[key] = vec
        return vec

    def matrix(self, pairs: Iterable[tuple[State, Optional[Action]]]) -> np.ndarray:
        rows = [self(s, a) for s, a in pairs]
        if not rows:
            return np.zeros((0, self.dim))
        return np.stack(rows)


# -- adapter network ----------------------------------------------------------------

PARAM_NAMES = ("W1", "b1", "w2", "b2")


def init_weights(dim: int = DIM, hidden: int = HIDDEN, rng: Optional[np.random.Generator] = None,
                 zero: bool = False) -> dict[str, np.ndarray]:
    if zero:
        return {"W1": np.zeros((dim, hidden)), "b1": np.zeros(hidden), "w2": np.zeros(hidden),
                "b2": np.zeros(())}
    rng = rng if rng is not None else np.random.default_rng(0)
    # inputs are unit-norm, so scale by sqrt(2) rather than sqrt(2 / dim)
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0), size=(dim, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden) * 0.1,
        "b2": np.zeros(()),
    }


@dataclass(frozen=True)
class QParams:
    """Adapter weights, Adam moments and a version counter. Treated as immutable."""

    weights: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    version: int = 0
    hash_seed: int = 0

    @classmethod
    def create(cls, dim: int = DIM, hidden: int = HIDDEN, rng: Optional[np.random.Generator] = None,
               zero: bool = False, hash_seed: int = 0) -> "QParams":
        w = init_weights(dim, hidden, rng, zero)
        return cls(w, {k: np.zeros_like(x) for k, x in w.items()},
                   {k: np.zeros_like(x) for k, x in w.items()}, 0, 0, hash_seed)

    @property
    def dim(self) -> int:
        return self.weights["W1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.weights["W1"].shape[1]

    def copy(self) -> "QParams":
        cp = lambda d: {k: np.array(x, copy=True) for k, x in d.items()}  # noqa: E731
        return replace(self, weights=cp(self.weights), m=cp(self.m), v=cp(self.v))


# the policy network has the same shape; logits come out where Q-values would
PolicyParams = QParams


@dataclass(frozen=True)
class TargetParams:
    weights: dict
    version: int
    sync_step: int


def _check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values in layer {name}")


def forward(weights: dict, X: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Batched forward pass; returns outputs (N,) and a cache for ``backward``."""
    pre = X @ weights["W1"] + weights["b1"]
    h = np.maximum(pre, 0.0)
    out = h @ weights["w2"] + weights["b2"]
    return out, (X, pre, h)


def backward(weights: dict, cache: tuple, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(dout * out) with respect to every weight."""
    X, pre, h = cache
    _check_finite("output", dout)
    g_w2 = h.T @ dout
    g_b2 = np.asarray(dout.sum())
    dh = np.outer(dout, weights["w2"]) * (pre > 0)
    _check_finite("hidden", dh)
    g_W1 = X.T @ dh
    g_b1 = dh.sum(axis=0)
    _check_finite("input", g_W1)
    return {"W1": g_W1, "b1": g_b1, "w2": g_w2, "b2": g_b2}


def q_forward(p: "QParams | TargetParams", f: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    w = p.weights
    if f.shape != (w["W1"].shape[0],):
        raise ValueError(f"feature dimension {f.shape} does not match network input {w['W1'].shape[0]}")
    out, _ = forward(w, f[None, :])
    return float(out[0])


def q_forward_batch(p: "QParams | TargetParams", X: np.ndarray) -> np.ndarray:
    w = p.weights
    if X.ndim != 2 or X.shape[1] != w["W1"].shape[0]:
        raise ValueError(f"feature matrix shape {X.shape} does not match network input {w['W1'].shape[0]}")
    return forward(w, X)[0]


def q_gradient(p: QParams, batch: Sequence[tuple[np.ndarray, float]]) -> tuple[float, dict]:
    """Mean squared error over (features, target) pairs and its exact gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    X = np.stack([np.asarray(f, dtype=float) for f, _ in batch])
    y = np.array([float(t) for _, t in batch])
    return mse_gradient(p.weights, X, y)


def mse_gradient(weights: dict, X: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
    out, cache = forward(weights, X)
    _check_finite("output", out)
    err = out - y
    loss = float(np.mean(err ** 2))
    return loss, backward(weights, cache, 2.0 * err / len(y))


def optimizer_step(p: QParams, g: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> QParams:
    """One Adam step; returns new params with version + 1."""
    t = p.t + 1
    weights, m, v = {}, {}, {}
    for name in PARAM_NAMES:
        grad = np.asarray(g[name], dtype=float)
        if grad.shape != p.weights[name].shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter {name} shape {p.weights[name].shape}")
        m[name] = beta1 * p.m[name] + (1 - beta1) * grad
        v[name] = beta2 * p.v[name] + (1 - beta2) * grad * grad
        m_hat = m[name] / (1 - beta1 ** t)
        v_hat = v[name] / (1 - beta2 ** t)
        weights[name] = p.weights[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
        _check_finite(name, weights[name])
    return replace(p, weights=weights, m=m, v=v, t=t, version=p.version + 1)


def target_sync(p: QParams, step: int = 0) -> TargetParams:
    """Deep copy of the online weights; later updates never touch the snapshot."""
    return TargetParams({k: np.array(x, copy=True) for k, x in p.weights.items()}, p.version, step)


# -- checkpoints --------------------------------------------------------------------

def save_checkpoint(path: "str | Path", params: QParams, **extra) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_name(path.name + ".npz")
    meta = {"format": CHECKPOINT_FORMAT, "dim": params.dim, "hidden": params.hidden,
            "hash_seed": params.hash_seed, "version": params.version, "t": params.t, **extra}
    arrays = {f"weights/{k}": x for k, x in params.weights.items()}
    arrays.update({f"m/{k}": x for k, x in params.m.items()})
    arrays.update({f"v/{k}": x for k, x in params.v.items()})
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: "str | Path", dim: Optional[int] = None,
                    hidden: Optional[int] = None) -> tuple[QParams, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise PriorRLError(f"unsupported checkpoint format {meta.get('format')}")
        if dim is not None and meta["dim"] != dim:
            raise PriorRLError(f"checkpoint feature dimension {meta['dim']} != expected {dim}")
        if hidden is not None and meta["hidden"] != hidden:
            raise PriorRLError(f"checkpoint hidden width {meta['hidden']} != expected {hidden}")
        group = lambda g: {k: np.array(data[f"{g}/{k}"]) for k in PARAM_NAMES}  # noqa: E731
        params = QParams(group("weights"), group("m"), group("v"), meta["t"], meta["version"],
                         meta["hash_seed"])
    return params, meta
