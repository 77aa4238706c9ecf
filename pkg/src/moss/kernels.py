"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``MOSS_DISABLE_NUMBA``
is unset (or ``0``). Both paths follow the same arithmetic order so they
return bitwise identical results:

* squared distances accumulate sequentially over embedding dimensions,
* neighbours are ranked by ``(distance, index)``,
* the k selected distances are summed in ascending order.
"""

from __future__ import annotations

import os

import numpy as np

# the bundled TBB is too old for numba; avoid the probe warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:  # pragma: no cover - exercised implicitly by the backend selection
    from numba import njit, prange

    _NUMBA_IMPORTED = True
except ImportError:  # pragma: no cover
    _NUMBA_IMPORTED = False


def _numba_requested() -> bool:
    return os.environ.get("MOSS_DISABLE_NUMBA", "0").strip().lower() in ("", "0", "false", "no")


NUMBA_AVAILABLE = _NUMBA_IMPORTED
USE_NUMBA = NUMBA_AVAILABLE and _numba_requested()


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def _pairwise_dist_numpy(x: np.ndarray) -> np.ndarray:
    n, d = x.shape
    xt = np.ascontiguousarray(x.T)
    acc = np.zeros((n, n), dtype=np.float64)
    for dd in range(d):
        col = xt[dd]
        diff = col[None, :] - col[:, None]
        acc += diff * diff
    return np.sqrt(acc)


def _sorted_neighbour_dists_numpy(x: np.ndarray, k: int) -> np.ndarray:
    dist = _pairwise_dist_numpy(x)
    np.fill_diagonal(dist, np.inf)
    # stable sort keeps the lower index first among equal distances
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(dist, order, axis=1)


def knn_mean_radii_numpy(x: np.ndarray, k: int) -> np.ndarray:
    nearest = _sorted_neighbour_dists_numpy(x, k)
    total = np.zeros(x.shape[0], dtype=np.float64)
    for j in range(k):
        total += nearest[:, j]
    return total / k


def knn_kth_distance_numpy(x: np.ndarray, k: int) -> np.ndarray:
    return _sorted_neighbour_dists_numpy(x, k)[:, k - 1].copy()


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if _NUMBA_IMPORTED:

    @njit(cache=True, nogil=True)
    def _row_k_smallest(xt, i, k, best_d, best_i, acc):
        d, n = xt.shape
        for j in range(n):
            acc[j] = 0.0
        for dd in range(d):
            xi = xt[dd, i]
            for j in range(n):
                diff = xt[dd, j] - xi
                acc[j] += diff * diff
        filled = 0
        for j in range(n):
            if j == i:
                continue
            dj = np.sqrt(acc[j])
            if filled < k:
                pos = filled
                filled += 1
            elif dj < best_d[k - 1]:
                pos = k - 1
            else:
                continue
            # insertion with strict comparison: equal distances keep index order
            while pos > 0 and best_d[pos - 1] > dj:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = dj
            best_i[pos] = j

    @njit(cache=True, parallel=True)
    def _knn_mean_radii_nb(xt, k):
        n = xt.shape[1]
        out = np.empty(n, dtype=np.float64)
        for i in prange(n):
            best_d = np.empty(k, dtype=np.float64)
            best_i = np.empty(k, dtype=np.int64)
            acc = np.empty(n, dtype=np.float64)
            _row_k_smallest(xt, i, k, best_d, best_i, acc)
            total = 0.0
            for j in range(k):
                total += best_d[j]
            out[i] = total / k
        return out

    @njit(cache=True, parallel=True)
    def _knn_kth_distance_nb(xt, k):
        n = xt.shape[1]
        out = np.empty(n, dtype=np.float64)
        for i in prange(n):
            best_d = np.empty(k, dtype=np.float64)
            best_i = np.empty(k, dtype=np.int64)
            acc = np.empty(n, dtype=np.float64)
            _row_k_smallest(xt, i, k, best_d, best_i, acc)
            out[i] = best_d[k - 1]
        return out

    def knn_mean_radii_numba(x: np.ndarray, k: int) -> np.ndarray:
        return _knn_mean_radii_nb(np.ascontiguousarray(x.T), k)

    def knn_kth_distance_numba(x: np.ndarray, k: int) -> np.ndarray:
        return _knn_kth_distance_nb(np.ascontiguousarray(x.T), k)

else:  # pragma: no cover
    knn_mean_radii_numba = None
    knn_kth_distance_numba = None


def knn_mean_radii(x: np.ndarray, k: int) -> np.ndarray:
    """Mean of the k smallest distances from each row to the other rows."""
    x = np.asarray(x, dtype=np.float64)
    if USE_NUMBA:
        return knn_mean_radii_numba(x, k)
    return knn_mean_radii_numpy(x, k)


def knn_kth_distance(x: np.ndarray, k: int) -> np.ndarray:
    """Distance from each row to its k-th nearest other row."""
    x = np.asarray(x, dtype=np.float64)
    if USE_NUMBA:
        return knn_kth_distance_numba(x, k)
    return knn_kth_distance_numpy(x, k)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
