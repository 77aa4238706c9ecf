"""Aggregate score statistics: IQM, optimality gap, trimmed mean, bootstrap CIs.

Trim counts use ``floor`` on both ends, so ``iqm`` drops ``n // 4`` values
from each side and ``trimmed_mean(x, 0.1)`` drops ``floor(0.1 * n)``.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats as sps


@dataclass
class ScoreMatrix:
    scores: np.ndarray  # [runs, tasks], raw
    expert: np.ndarray  # [tasks]
    tasks: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        self.expert = np.asarray(self.expert, dtype=np.float64)
        if self.expert.shape != (self.scores.shape[1],):
            raise ValueError("expert needs one entry per task column")
        if np.any(self.expert <= 0):
            raise ValueError("expert scores must be positive")

    @property
    def normalized(self) -> np.ndarray:
        return self.scores / self.expert


def _values(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("no values")
    return v


def trimmed_mean(values, fraction: float = 0.1) -> float:
    if not 0.0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    return float(sps.trim_mean(_values(values), fraction))


def iqm(values) -> float:
    v = _values(values)
    if v.size < 4:
        raise ValueError("interquartile mean needs at least 4 values")
    return trimmed_mean(v, 0.25)


def optimality_gap(normalized, threshold: float = 1.0) -> float:
    v = _values(normalized)
    return float(np.mean(np.maximum(0.0, threshold - v)))


def mean_and_stderr(values) -> tuple[float, float]:
    v = _values(values)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def stratified_bootstrap_ci(matrix: ScoreMatrix | np.ndarray, statistic: Callable[[np.ndarray], float],
                            resamples: int = 2000, seed: int = 0,
                            confidence: float = 0.95) -> tuple[float, float]:
    """Percentile interval; runs are resampled with replacement within each task."""
    scores = matrix.normalized if isinstance(matrix, ScoreMatrix) else np.atleast_2d(np.asarray(matrix, float))
    runs, tasks = scores.shape
    rng = np.random.default_rng(seed)
    draws = np.empty(resamples)
    cols = np.arange(tasks)[None, :]
    for b in range(resamples):
        rows = rng.integers(0, runs, size=(runs, tasks))
        draws[b] = statistic(scores[rows, cols])
    alpha = (1.0 - confidence) / 2.0
    low, high = np.quantile(draws, [alpha, 1.0 - alpha])
    return float(low), float(high)


def performance_profile(normalized, thresholds: Sequence[float]) -> list[tuple[float, float]]:
    """Fraction of runs whose normalized score exceeds each threshold."""
    v = _values(normalized)
    return [(float(t), float(np.mean(v > t))) for t in thresholds]


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

RESULT_FIELDS = ("method", "task", "seed", "score")


def read_results(paths: Iterable[str | Path]) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append({"method": row["method"], "task": row["task"],
                             "seed": int(row["seed"]), "score": float(row["score"])})
    return rows


def read_expert(path: str | Path) -> dict[str, float]:
    with open(path, newline="") as fh:
        return {row["task"]: float(row["score"]) for row in csv.DictReader(fh)}


def score_matrices(rows: list[dict], expert: dict[str, float]) -> dict[str, ScoreMatrix]:
    """One ``ScoreMatrix`` per method, seeds as runs and tasks as columns."""
    by_method: dict[str, dict[str, dict[int, float]]] = defaultdict(lambda: defaultdict(dict))
    for row in rows:
        by_method[row["method"]][row["task"]][row["seed"]] = row["score"]
    out = {}
    for method, per_task in by_method.items():
        tasks = tuple(sorted(per_task))
        seeds = sorted(set.intersection(*(set(per_task[t]) for t in tasks)))
        if not seeds:
            continue
        scores = np.array([[per_task[t][s] for t in tasks] for s in seeds])
        out[method] = ScoreMatrix(scores, np.array([expert[t] for t in tasks]), tasks)
    return out


REPORT_FIELDS = ("method", "runs", "tasks", "iqm", "iqm_low", "iqm_high", "optimality_gap",
                 "og_low", "og_high", "mean", "stderr", "trimmed_mean_10")


def summarize(matrices: dict[str, ScoreMatrix], resamples: int = 2000, seed: int = 0) -> list[dict]:
    report = []
    for method in sorted(matrices):
        m = matrices[method]
        norm = m.normalized
        mean, se = mean_and_stderr(norm)
        iqm_ci = stratified_bootstrap_ci(m, iqm, resamples, seed) if norm.size >= 4 else (math.nan, math.nan)
        og_ci = stratified_bootstrap_ci(m, optimality_gap, resamples, seed)
        report.append({
            "method": method, "runs": norm.shape[0], "tasks": norm.shape[1],
            "iqm": iqm(norm) if norm.size >= 4 else math.nan,
            "iqm_low": iqm_ci[0], "iqm_high": iqm_ci[1],
            "optimality_gap": optimality_gap(norm), "og_low": og_ci[0], "og_high": og_ci[1],
            "mean": mean, "stderr": se, "trimmed_mean_10": trimmed_mean(norm, 0.1),
        })
    return report


def format_table(report: list[dict]) -> str:
    header = (f"{'method':<16}{'runs':>5}{'IQM':>8}{'95% CI':>18}{'OG':>8}{'95% CI':>18}"
              f"{'mean':>8}{'+-se':>8}{'trim10':>8}")
    lines = [header, "-" * len(header)]
    for r in report:
        iqm_ci = f"[{r['iqm_low']:.3f}, {r['iqm_high']:.3f}]"
        og_ci = f"[{r['og_low']:.3f}, {r['og_high']:.3f}]"
        lines.append(
            f"{r['method']:<16}{r['runs']:>5}{r['iqm']:>8.3f}{iqm_ci:>18}{r['optimality_gap']:>8.3f}"
            f"{og_ci:>18}{r['mean']:>8.3f}{r['stderr']:>8.3f}{r['trimmed_mean_10']:>8.3f}"
        )
    lines.append("IQM / OG on expert-normalized scores; mean +- standard error over runs.")
    return "\n".join(lines)
