"""Independent reference implementations used by the tests.

These are deliberately slow and written without reusing package code.
"""

from __future__ import annotations

import math

import numpy as np


def knn_sorted_neighbours(x: np.ndarray, k: int) -> list[list[tuple[float, int]]]:
    """Exhaustive O(N^2) search ranked by (distance, index).

    Squared distances accumulate left to right over dimensions, which
    fixes the floating-point result independently of BLAS.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    out = []
    for i in range(n):
        diff = x - x[i]
        sq = np.add.accumulate(diff * diff, axis=1)[:, -1]
        dist = np.sqrt(sq)
        order = np.lexsort((np.arange(n), dist))
        row = [(float(dist[j]), int(j)) for j in order if j != i][:k]
        out.append(row)
    return out


def knn_mean_radii(x: np.ndarray, k: int) -> np.ndarray:
    rows = knn_sorted_neighbours(x, k)
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        total = 0.0
        for d, _ in row:
            total += d
        out[i] = total / k
    return out


def knn_kth(x: np.ndarray, k: int) -> np.ndarray:
    return np.array([row[k - 1][0] for row in knn_sorted_neighbours(x, k)])


def nce_loss(u: np.ndarray, v: np.ndarray, omega: float) -> float:
    """Per-element loop over the contrastive objective."""
    n = len(u)

    def unit(a):
        nrm = math.sqrt(sum(float(t) * float(t) for t in a))
        return [float(t) / nrm for t in a] if nrm > 1e-8 else [0.0] * len(a)

    uu = [unit(r) for r in u]
    vv = [unit(r) for r in v]
    total = 0.0
    for i in range(n):
        logits = [sum(a * b for a, b in zip(uu[i], vv[j])) / omega for j in range(n)]
        m = max(logits)
        lse = m + math.log(sum(math.exp(t - m) for t in logits))
        total += lse - logits[i]
    return total / n


def mlp_forward(weights, biases, activations, x):
    h = np.asarray(x, dtype=np.float64)
    for w, b, act in zip(weights, biases, activations):
        h = h @ np.asarray(w, np.float64) + np.asarray(b, np.float64)
        if act == "relu":
            h = np.maximum(h, 0.0)
        elif act == "tanh":
            h = np.tanh(h)
    return h


def adam_reference(p, grads_seq, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam on a flat float64 vector."""
    p = np.array(p, dtype=np.float64)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


def central_diff(f, arrays, eps=1e-6):
    """Central finite differences of scalar ``f()`` w.r.t. each array in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = a[idx]
            a[idx] = old + eps
            fp = f()
            a[idx] = old - eps
            fm = f()
            a[idx] = old
            g[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def rel_error(a, b) -> float:
    a = np.asarray(a, np.float64).ravel()
    b = np.asarray(b, np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def iqm_by_hand(values) -> float:
    v = sorted(float(t) for t in values)
    cut = len(v) // 4
    kept = v[cut:len(v) - cut]
    return sum(kept) / len(kept)


def trimmed_by_hand(values, fraction) -> float:
    v = sorted(float(t) for t in values)
    cut = int(math.floor(fraction * len(v)))
    kept = v[cut:len(v) - cut]
    return sum(kept) / len(kept)
