"""Particle-based entropy estimates and the mode-signed intrinsic reward."""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log, pi

import numpy as np

from moss import kernels
from moss.errors import InvalidBatchError, TrainingError

DEFAULT_K = 12
RADIUS_FLOOR = 1e-12


@dataclass
class EntropyBatch:
    embeddings: np.ndarray
    k: int
    radii: np.ndarray
    rewards: np.ndarray


def _check_batch(embeddings: np.ndarray, k: int) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InvalidBatchError(f"embeddings must be 2-D, got shape {x.shape}")
    if k < 1:
        raise InvalidBatchError(f"k must be >= 1, got {k}")
    if x.shape[0] <= k:
        raise InvalidBatchError(f"need more than k={k} samples, got {x.shape[0]}")
    return x


def knn_radii(embeddings: np.ndarray, k: int = DEFAULT_K) -> np.ndarray:
    """Average distance from each row to its k nearest other rows.

    Euclidean metric, a point is never its own neighbour, and the search
    runs within the given batch only. Neighbours with equal distance are
    ranked by row index.
    """
    x = _check_batch(embeddings, k)
    return kernels.knn_mean_radii(x, k)


def intrinsic_reward(radii: np.ndarray, mode, c: float = 1.0) -> np.ndarray:
    """``log(c + R)`` for maximisation samples, ``-log(c + R)`` for minimisation.

    ``mode`` is either a scalar in {0, 1} or one mode per sample.
    """
    radii = np.asarray(radii, dtype=np.float64)
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    if np.any(radii < 0):
        raise TrainingError("negative k-NN radius")
    mode = np.asarray(mode)
    if not np.all((mode == 0) | (mode == 1)):
        raise ValueError("mode must be 0 or 1")
    base = np.log(c + radii)
    return np.where(mode == 1, -base, base)


def entropy_batch(embeddings: np.ndarray, mode, k: int = DEFAULT_K, c: float = 1.0) -> EntropyBatch:
    radii = knn_radii(embeddings, k)
    return EntropyBatch(np.asarray(embeddings), k, radii, intrinsic_reward(radii, mode, c))


def entropy_proxy(embeddings: np.ndarray, k: int = DEFAULT_K, c: float = 1.0) -> float:
    """Mean of ``log(c + R)`` over the batch (unsigned)."""
    return float(np.mean(np.log(c + knn_radii(embeddings, k))))


def log_unit_ball_volume(d: int) -> float:
    return 0.5 * d * log(pi) - lgamma(0.5 * d + 1.0)


def kl_entropy_estimate(embeddings: np.ndarray, k: int = DEFAULT_K, floor: float = RADIUS_FLOOR) -> float:
    """Kozachenko-Leonenko style estimate without the bias constant.

    Uses the exact k-th neighbour distance (no averaging). Zero radii are
    clamped to ``floor`` before taking logs.
    """
    x = _check_batch(embeddings, k)
    n, d = x.shape
    r_k = np.maximum(kernels.knn_kth_distance(x, k), floor)
    log_volume = log_unit_ball_volume(d) + d * np.log(r_k)
    # -(1/N) sum log(k / (N V))
    return float(np.mean(log(n) - log(k) + log_volume))
