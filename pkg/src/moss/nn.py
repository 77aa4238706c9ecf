"""Fixed-topology MLPs with hand-written backprop, plus Adam.

Weights are stored as ``(in_dim, out_dim)`` so a layer computes
``x @ W + b`` on row-major batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from moss.errors import ConfigError, TrainingError

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...]

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ConfigError("weights, biases and activations must have equal length")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ConfigError(f"layer {i}: input dim {w.shape[0]} does not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def named_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        named = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"{prefix}.w{i}"] = w
            named[f"{prefix}.b{i}"] = b
        return named

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        arrays = list(arrays)
        return MlpParams(arrays[0::2], arrays[1::2], self.activations)

    def copy(self) -> "MlpParams":
        return self.with_arrays([a.copy() for a in self.arrays()])


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
    scheme: str = "fan_in",
    dtype=np.float32,
) -> MlpParams:
    """Random MLP with layer widths ``sizes`` (input first, output last).

    ``scheme`` is ``"orthogonal"`` (zero biases) or ``"fan_in"``
    (uniform in +-1/sqrt(fan_in) for weights and biases).
    """
    if len(sizes) < 2:
        raise ConfigError("an MLP needs at least an input and an output size")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if scheme == "orthogonal":
            a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            w = q if fan_in >= fan_out else q.T
            b = np.zeros(fan_out)
        elif scheme == "fan_in":
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=fan_out)
        else:
            raise ConfigError(f"unknown init scheme {scheme!r}")
        weights.append(w.astype(dtype))
        biases.append(b.astype(dtype))
    acts = (hidden_activation,) * (len(sizes) - 2) + (output_activation,)
    return MlpParams(weights, biases, acts)


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0)
    if act == "tanh":
        return np.tanh(z)
    return z


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)


def _check_input(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ConfigError(f"input shape {x.shape} does not match in_dim {params.in_dim}")
    return x


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    h = _check_input(params, x)
    for w, b, act in zip(params.weights, params.biases, params.activations):
        h = _activate(h @ w + b, act)
    return h


def forward_cached(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    h = _check_input(params, x)
    cache = ForwardCache()
    for w, b, act in zip(params.weights, params.biases, params.activations):
        cache.inputs.append(h)
        h = _activate(h @ w + b, act)
        cache.outputs.append(h)
    return h, cache


def backward(
    params: MlpParams, cache: ForwardCache, upstream: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Gradients of ``sum(upstream * forward(x))`` w.r.t. parameters and input."""
    g = np.asarray(upstream)
    if g.shape != cache.outputs[-1].shape:
        raise ConfigError(f"upstream shape {g.shape} != output shape {cache.outputs[-1].shape}")
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in reversed(range(n_layers)):
        act = params.activations[i]
        y = cache.outputs[i]
        if act == "relu":
            g = g * (y > 0)
        elif act == "tanh":
            g = g * (1 - y * y)
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return MlpParams(gw, gb, params.activations), g


def input_grad(params: MlpParams, cache: ForwardCache, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input only (skips weight-gradient products)."""
    g = np.asarray(upstream)
    for i in reversed(range(len(params.weights))):
        act = params.activations[i]
        y = cache.outputs[i]
        if act == "relu":
            g = g * (y > 0)
        elif act == "tanh":
            g = g * (1 - y * y)
        g = g @ params.weights[i].T
    return g


def global_norm(grads: MlpParams) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(a, dtype=np.float64))) for a in grads.arrays())))


def clip_grad_norm(grads: MlpParams, max_norm: float | None) -> MlpParams:
    if max_norm is None:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return grads.with_arrays([a * a.dtype.type(scale) for a in grads.arrays()])


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def copy(self) -> "AdamState":
        return AdamState(
            [a.copy() for a in self.m], [a.copy() for a in self.v],
            self.step, self.lr, self.beta1, self.beta2, self.eps,
        )


def adam_init(params: MlpParams, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return AdamState(zeros, [z.copy() for z in zeros], 0, lr, beta1, beta2, eps)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise ConfigError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise TrainingError("non-finite gradient")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    step_size = state.lr / (1.0 - b1**t)
    bc2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        dt = p.dtype.type
        m = dt(b1) * m + dt(1.0 - b1) * g
        v = dt(b2) * v + dt(1.0 - b2) * (g * g)
        denom = np.sqrt(v / dt(bc2)) + dt(state.eps)
        new_p.append(p - dt(step_size) * m / denom)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
    return params.with_arrays(new_p), new_state
