"""Contrastive skill/transition representation learning.

Three MLPs: a state net ``f`` (obs -> d), a skill net ``g_z`` (d -> d) and a
prediction net ``g_s`` that maps the pair ``(f(s), f(s'))`` to d. Row i of
the similarity matrix compares skill i with transition j; the diagonal
holds the positive pairs and every other in-batch pair is a negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from moss import nn
from moss.errors import InvalidBatchError, TrainingError

ZERO_NORM = 1e-8


@dataclass
class CpcNets:
    f_psi: nn.MlpParams
    g_phi_z: nn.MlpParams
    g_phi_s: nn.MlpParams
    temperature: float = 0.5

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        d = self.g_phi_z.out_dim
        if self.f_psi.out_dim != d or self.g_phi_s.out_dim != d:
            raise ValueError("all projection nets must share the output dimension")
        if self.g_phi_s.in_dim != 2 * d or self.g_phi_z.in_dim != d:
            raise ValueError("g_phi_s takes (h, h') and g_phi_z takes a skill of size d")

    @property
    def dim(self) -> int:
        return self.g_phi_z.out_dim

    def nets(self) -> tuple[nn.MlpParams, nn.MlpParams, nn.MlpParams]:
        return self.f_psi, self.g_phi_z, self.g_phi_s

    def replace(self, f_psi, g_phi_z, g_phi_s) -> "CpcNets":
        return CpcNets(f_psi, g_phi_z, g_phi_s, self.temperature)


@dataclass
class CpcOptState:
    f_psi: nn.AdamState
    g_phi_z: nn.AdamState
    g_phi_s: nn.AdamState

    def states(self) -> tuple[nn.AdamState, nn.AdamState, nn.AdamState]:
        return self.f_psi, self.g_phi_z, self.g_phi_s


def init_cpc_nets(obs_dim: int, skill_dim: int, hidden: int, rng: np.random.Generator,
                  temperature: float = 0.5, dtype=np.float32, scheme: str = "fan_in") -> CpcNets:
    def mlp(i):
        return nn.init_mlp([i, hidden, hidden, skill_dim], rng, "relu", "identity", scheme, dtype)

    return CpcNets(mlp(obs_dim), mlp(skill_dim), mlp(2 * skill_dim), temperature)


def init_cpc_opt(nets: CpcNets, lr: float) -> CpcOptState:
    return CpcOptState(*(nn.adam_init(p, lr) for p in nets.nets()))


def state_embedding(nets: CpcNets, s: np.ndarray) -> np.ndarray:
    return nn.forward(nets.f_psi, s)


def transition_embedding(nets: CpcNets, s: np.ndarray, s_next: np.ndarray) -> np.ndarray:
    h = nn.forward(nets.f_psi, s)
    h_next = nn.forward(nets.f_psi, s_next)
    return nn.forward(nets.g_phi_s, np.concatenate([h, h_next], axis=1))


def normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalised rows; rows with (near) zero norm map to zero."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > ZERO_NORM, norms, 1)
    unit = np.where(norms > ZERO_NORM, x / safe, 0)
    return unit, norms


def _normalize_backward(unit: np.ndarray, norms: np.ndarray, g_unit: np.ndarray) -> np.ndarray:
    radial = np.sum(unit * g_unit, axis=1, keepdims=True)
    safe = np.where(norms > ZERO_NORM, norms, 1)
    return np.where(norms > ZERO_NORM, (g_unit - unit * radial) / safe, 0)


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ua, _ = normalize_rows(a)
    ub, _ = normalize_rows(b)
    return ua @ ub.T


def similarity_matrix(nets: CpcNets, s: np.ndarray, s_next: np.ndarray, z: np.ndarray) -> np.ndarray:
    if len(s) < 2:
        raise InvalidBatchError("contrastive batch needs at least 2 samples")
    skill_proj = nn.forward(nets.g_phi_z, z)
    trans_proj = transition_embedding(nets, s, s_next)
    return cosine_matrix(skill_proj, trans_proj) / nets.temperature


def _log_softmax(sim: np.ndarray) -> np.ndarray:
    shifted = sim - sim.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def nce_loss(sim: np.ndarray) -> float:
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise InvalidBatchError(f"similarity matrix must be square, got {sim.shape}")
    if not np.all(np.isfinite(sim)):
        raise TrainingError("non-finite similarity")
    return float(-np.mean(np.diag(_log_softmax(sim))))


def nce_loss_grad(sim: np.ndarray) -> np.ndarray:
    """d nce_loss / d sim = (softmax(sim) - I) / N."""
    n = sim.shape[0]
    probs = np.exp(_log_softmax(sim))
    probs[np.diag_indices(n)] -= 1
    return probs / n


def cpc_loss_and_grads(nets: CpcNets, s: np.ndarray, s_next: np.ndarray, z: np.ndarray):
    """NCE loss and its gradients for ``(f_psi, g_phi_z, g_phi_s)``."""
    n = len(s)
    if n < 2:
        raise InvalidBatchError("contrastive batch needs at least 2 samples")
    h, cache_h = nn.forward_cached(nets.f_psi, s)
    h_next, cache_hn = nn.forward_cached(nets.f_psi, s_next)
    u, cache_u = nn.forward_cached(nets.g_phi_z, z)
    v, cache_v = nn.forward_cached(nets.g_phi_s, np.concatenate([h, h_next], axis=1))
    unit_u, norm_u = normalize_rows(u)
    unit_v, norm_v = normalize_rows(v)
    omega = nets.temperature
    sim = unit_u @ unit_v.T / omega
    loss = nce_loss(sim)

    g_sim = nce_loss_grad(sim).astype(u.dtype)
    g_unit_u = g_sim @ unit_v / omega
    g_unit_v = g_sim.T @ unit_u / omega
    g_u = _normalize_backward(unit_u, norm_u, g_unit_u).astype(u.dtype)
    g_v = _normalize_backward(unit_v, norm_v, g_unit_v).astype(v.dtype)

    grad_z, _ = nn.backward(nets.g_phi_z, cache_u, g_u)
    grad_s, g_pair = nn.backward(nets.g_phi_s, cache_v, g_v)
    d = h.shape[1]
    grad_f1, _ = nn.backward(nets.f_psi, cache_h, g_pair[:, :d])
    grad_f2, _ = nn.backward(nets.f_psi, cache_hn, g_pair[:, d:])
    grad_f = grad_f1.with_arrays([a + b for a, b in zip(grad_f1.arrays(), grad_f2.arrays())])
    return loss, (grad_f, grad_z, grad_s)


def cpc_update(nets: CpcNets, s: np.ndarray, s_next: np.ndarray, z: np.ndarray,
               opt: CpcOptState, max_grad_norm: float | None = None):
    """One Adam step on all three nets. Returns ``(nets, opt, pre-update loss)``."""
    loss, grads = cpc_loss_and_grads(nets, s, s_next, z)
    new_params, new_states = [], []
    for params, grad, state in zip(nets.nets(), grads, opt.states()):
        params, state = nn.adam_step(params, nn.clip_grad_norm(grad, max_grad_norm), state)
        new_params.append(params)
        new_states.append(state)
    return nets.replace(*new_params), CpcOptState(*new_states), loss
