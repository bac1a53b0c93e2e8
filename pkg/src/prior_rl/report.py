"""Aggregate per-seed metric CSVs into mean / standard-error learning curves."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import PriorRLError


class ReportError(PriorRLError, ValueError):
    pass


@dataclass
class Curve:
    run_id: str
    env_steps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_seeds: int
    final_third_mean: float
    final_third_stderr: float
    per_seed_final_third: dict = field(default_factory=dict)


@dataclass
class Report:
    curves: dict
    warnings: list = field(default_factory=list)


def seed_stderr(values) -> float:
    """Standard error of the mean across seeds (ddof=1); zero for a single seed."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(len(v)))


def final_third(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[-max(1, len(v) // 3):]


def read_metrics(path: "str | Path") -> list[dict]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ReportError(f"{path}: no metric rows")
    for col in ("run_id", "seed", "env_steps", "eval_return_mean"):
        if col not in rows[0]:
            raise ReportError(f"{path}: missing column {col!r}")
    return rows


def aggregate_report(paths: Sequence["str | Path"]) -> Report:
    """Group files by run_id, align curves on env_steps and average across seeds.

    If seeds were evaluated on different grids, every curve is linearly resampled onto
    the grid with the fewest points and a warning is recorded.
    """
    if not paths:
        raise ReportError("no metrics files given")
    groups: dict[str, list[tuple[np.ndarray, np.ndarray]]] = defaultdict(list)
    for p in paths:
        rows = read_metrics(p)
        run_id = rows[0]["run_id"]
        x = np.array([float(r["env_steps"]) for r in rows])
        y = np.array([float(r["eval_return_mean"]) for r in rows])
        groups[run_id].append((x, y))
    curves, warnings = {}, []
    for run_id, seeds in sorted(groups.items()):
        grids = [x for x, _ in seeds]
        if all(len(g) == len(grids[0]) and np.array_equal(g, grids[0]) for g in grids):
            grid = grids[0]
            ys = np.stack([y for _, y in seeds])
        else:
            grid = min(grids, key=len)
            ys = np.stack([np.interp(grid, x, y) for x, y in seeds])
            warnings.append(f"{run_id}: eval grids differ across seeds; resampled to {len(grid)} points")
        mean = ys.mean(axis=0)
        se = np.array([seed_stderr(ys[:, j]) for j in range(ys.shape[1])])
        per_seed = [float(final_third(y).mean()) for y in ys]
        curves[run_id] = Curve(run_id, grid, mean, se, len(seeds), float(np.mean(per_seed)),
                               seed_stderr(per_seed), dict(enumerate(per_seed)))
    return Report(curves, warnings)


def write_report(report: Report, out_dir: "str | Path") -> tuple[Path, Path]:
    """Write ``curves.csv`` (plot-ready) and ``summary.csv`` (final-third scalars)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    f = lambda x: f"{x:.9g}"  # noqa: E731
    curves_path = out_dir / "curves.csv"
    with curves_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "env_steps", "eval_return_mean", "eval_return_stderr", "n_seeds"])
        for c in report.curves.values():
            for x, m, s in zip(c.env_steps, c.mean, c.stderr):
                w.writerow([c.run_id, f(x), f(m), f(s), c.n_seeds])
        for msg in report.warnings:
            w.writerow(["warning", msg, "", "", ""])
    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "final_third_mean", "final_third_stderr", "n_seeds"])
        for c in report.curves.values():
            w.writerow([c.run_id, f(c.final_third_mean), f(c.final_third_stderr), c.n_seeds])
    return curves_path, summary_path
