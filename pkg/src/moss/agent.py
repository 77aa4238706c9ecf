"""Skill-conditioned DDPG with twin critics and min-target bootstrapping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from moss import nn
from moss.errors import InvalidBatchError, TrainingError


@dataclass(frozen=True)
class ExplorationSpec:
    stddev: float = 0.2
    clip: float = 0.3

    def __post_init__(self) -> None:
        if self.stddev <= 0 or self.clip <= 0:
            raise ValueError("exploration stddev and clip must be positive")


@dataclass
class AgentParams:
    actor: nn.MlpParams
    critic1: nn.MlpParams
    critic2: nn.MlpParams
    target1: nn.MlpParams
    target2: nn.MlpParams
    actor_opt: nn.AdamState
    critic1_opt: nn.AdamState
    critic2_opt: nn.AdamState

    @property
    def action_dim(self) -> int:
        return self.actor.out_dim


def init_agent(obs_dim: int, action_dim: int, skill_dim: int, hidden: int,
               rng: np.random.Generator, lr: float = 1e-4, scheme: str = "orthogonal",
               dtype=np.float32) -> AgentParams:
    actor = nn.init_mlp([obs_dim + skill_dim, hidden, hidden, action_dim], rng, "relu", "tanh", scheme, dtype)
    sizes = [obs_dim + skill_dim + action_dim, hidden, hidden, 1]
    critic1 = nn.init_mlp(sizes, rng, "relu", "identity", scheme, dtype)
    critic2 = nn.init_mlp(sizes, rng, "relu", "identity", scheme, dtype)
    return AgentParams(
        actor, critic1, critic2, critic1.copy(), critic2.copy(),
        nn.adam_init(actor, lr), nn.adam_init(critic1, lr), nn.adam_init(critic2, lr),
    )


def _policy_input(obs: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.concatenate([np.atleast_2d(obs), np.atleast_2d(z)], axis=1)


def policy(actor: nn.MlpParams, obs: np.ndarray, z: np.ndarray) -> np.ndarray:
    x = _policy_input(obs, z).astype(actor.dtype, copy=False)
    return nn.forward(actor, x)


def clipped_noise(raw: np.ndarray, clip: float) -> np.ndarray:
    return np.clip(raw, -clip, clip)


def act(params: AgentParams, obs: np.ndarray, z: np.ndarray, explore: bool,
        rng: np.random.Generator | None = None, spec: ExplorationSpec = ExplorationSpec()) -> np.ndarray:
    """Single action in ``[-1, 1]^A``; optional clipped Gaussian exploration."""
    mu = policy(params.actor, obs, z)[0].astype(np.float64)
    if not np.all(np.isfinite(mu)):
        raise TrainingError("actor produced a non-finite action")
    if explore:
        if rng is None:
            raise ValueError("exploration needs an rng")
        mu = mu + clipped_noise(spec.stddev * rng.standard_normal(mu.shape), spec.clip)
    return np.clip(mu, -1.0, 1.0)


def n_step_target(rewards: np.ndarray, gamma: float, bootstrap) -> np.ndarray:
    """``sum_i gamma^i r_i + gamma^n Q`` along the last axis of ``rewards``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape[-1] == 0:
        raise InvalidBatchError("empty reward window")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    n = rewards.shape[-1]
    discounts = gamma ** np.arange(n)
    return rewards @ discounts + gamma**n * np.asarray(bootstrap, dtype=np.float64)


def _critic_input(obs, z, action, dtype):
    return np.concatenate([obs, z, action], axis=1).astype(dtype, copy=False)


def twin_q(params: AgentParams, obs, z, action, target: bool = False):
    c1, c2 = (params.target1, params.target2) if target else (params.critic1, params.critic2)
    x = _critic_input(obs, z, action, c1.dtype)
    return nn.forward(c1, x)[:, 0], nn.forward(c2, x)[:, 0]


def td_targets(params: AgentParams, rewards, next_obs, z, gamma: float) -> np.ndarray:
    next_action = policy(params.actor, next_obs, z)
    tq1, tq2 = twin_q(params, next_obs, z, next_action, target=True)
    return n_step_target(rewards, gamma, np.minimum(tq1, tq2))


def critic_loss_and_grads(params: AgentParams, obs, action, z, targets):
    dtype = params.critic1.dtype
    x = _critic_input(obs, z, action, dtype)
    y = np.asarray(targets, dtype=dtype)
    n = len(y)
    loss = 0.0
    grads = []
    for critic in (params.critic1, params.critic2):
        q, cache = nn.forward_cached(critic, x)
        err = q[:, 0] - y
        loss += float(np.mean(np.square(err, dtype=np.float64)))
        g, _ = nn.backward(critic, cache, (2.0 / n * err)[:, None].astype(dtype))
        grads.append(g)
    return loss, grads[0], grads[1]


def critic_update(params: AgentParams, obs, action, z, rewards, next_obs, gamma: float,
                  max_grad_norm: float | None = None) -> tuple[AgentParams, float]:
    """One Adam step on both online critics against the clipped double-Q target."""
    targets = td_targets(params, rewards, next_obs, z, gamma)
    loss, g1, g2 = critic_loss_and_grads(params, obs, action, z, targets)
    c1, o1 = nn.adam_step(params.critic1, nn.clip_grad_norm(g1, max_grad_norm), params.critic1_opt)
    c2, o2 = nn.adam_step(params.critic2, nn.clip_grad_norm(g2, max_grad_norm), params.critic2_opt)
    return AgentParams(params.actor, c1, c2, params.target1, params.target2,
                       params.actor_opt, o1, o2), loss


QGrad = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def actor_loss_and_grad(actor: nn.MlpParams, obs, z, q_and_grad: QGrad):
    """Loss ``-mean(Q(a))`` for ``a = actor(obs, z)`` and its actor gradient.

    ``q_and_grad(a)`` returns per-sample Q and dQ/da.
    """
    x = _policy_input(obs, z).astype(actor.dtype, copy=False)
    a, cache = nn.forward_cached(actor, x)
    q, dq_da = q_and_grad(a)
    n = len(a)
    grads, _ = nn.backward(actor, cache, (-dq_da / n).astype(actor.dtype))
    return -float(np.mean(q)), grads


def twin_min_q(params: AgentParams, obs, z) -> QGrad:
    """dQ/da of ``min(Q1, Q2)`` with both critics held fixed."""

    def q_and_grad(a):
        dtype = params.critic1.dtype
        x = _critic_input(obs, z, a, dtype)
        q1, cache1 = nn.forward_cached(params.critic1, x)
        q2, cache2 = nn.forward_cached(params.critic2, x)
        use1 = (q1[:, 0] <= q2[:, 0])[:, None]
        g1 = nn.input_grad(params.critic1, cache1, use1.astype(dtype))
        g2 = nn.input_grad(params.critic2, cache2, (~use1).astype(dtype))
        adim = a.shape[1]
        return np.where(use1, q1, q2)[:, 0], g1[:, -adim:] + g2[:, -adim:]

    return q_and_grad


def actor_update(params: AgentParams, obs, z, max_grad_norm: float | None = None,
                 q_and_grad: QGrad | None = None) -> tuple[AgentParams, float]:
    if q_and_grad is None:
        q_and_grad = twin_min_q(params, obs, z)
    loss, grads = actor_loss_and_grad(params.actor, obs, z, q_and_grad)
    actor, opt = nn.adam_step(params.actor, nn.clip_grad_norm(grads, max_grad_norm), params.actor_opt)
    return AgentParams(actor, params.critic1, params.critic2, params.target1, params.target2,
                       opt, params.critic1_opt, params.critic2_opt), loss


def _ema(target: nn.MlpParams, online: nn.MlpParams, tau: float) -> nn.MlpParams:
    return target.with_arrays([
        (1 - tau) * t + tau * o if tau < 1 else o.copy()
        for t, o in zip(target.arrays(), online.arrays())
    ])


def soft_update_targets(params: AgentParams, tau: float = 0.01) -> AgentParams:
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    return AgentParams(params.actor, params.critic1, params.critic2,
                       _ema(params.target1, params.critic1, tau), _ema(params.target2, params.critic2, tau),
                       params.actor_opt, params.critic1_opt, params.critic2_opt)
