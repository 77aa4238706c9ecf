"""Planar point-mass environment with optional wind and downstream tasks.

Observation layout: ``(x, y, vx, vy)``. The wind force is hidden state and
never part of the observation. Episodes have a fixed length and never
terminate early.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from moss.errors import ConfigError, EnvironmentFault

OBS_DIM = 4
ACTION_DIM = 2


@dataclass(frozen=True)
class PointMassConfig:
    dt: float = 0.02
    mass: float = 1.0
    friction: float = 1.0
    half_width: float = 1.0
    episode_length: int = 1000
    max_force: float = 1.0
    # 0 disables the wind; otherwise the OU process noise scale
    wind_sigma: float = 0.0
    wind_theta: float = 1.0
    init_spread: float = 0.0

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.mass <= 0 or self.half_width <= 0:
            raise ConfigError("dt, mass and half_width must be positive")
        if self.episode_length < 1:
            raise ConfigError("episode_length must be positive")
        if self.friction < 0 or self.wind_sigma < 0 or self.wind_theta < 0 or self.init_spread < 0:
            raise ConfigError("friction, wind parameters and init_spread must be non-negative")

    @property
    def perturbation(self) -> str:
        return "wind" if self.wind_sigma > 0 else "none"

    @property
    def diameter(self) -> float:
        return 2.0 * sqrt(2.0) * self.half_width


@dataclass(frozen=True)
class NoiseWrapperConfig:
    p: float = 0.3
    sigma: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")


@dataclass(frozen=True)
class TaskSpec:
    kind: str  # "reach" or "run"
    goal: tuple[float, float] = (0.0, 0.0)
    target_speed: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("reach", "run"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.kind == "run" and self.target_speed <= 0:
            raise ConfigError("target_speed must be positive")


TASKS: dict[str, TaskSpec] = {
    "reach_top_left": TaskSpec("reach", (-0.7, 0.7)),
    "reach_top_right": TaskSpec("reach", (0.7, 0.7)),
    "reach_bottom_left": TaskSpec("reach", (-0.7, -0.7)),
    "reach_bottom_right": TaskSpec("reach", (0.7, -0.7)),
    "run": TaskSpec("run", target_speed=0.5),
}


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise ConfigError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None


@dataclass
class PointMassState:
    pos: np.ndarray = field(default_factory=lambda: np.zeros(2))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(2))
    wind: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t: int = 0

    def observation(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])


def reset(config: PointMassConfig, rng: np.random.Generator) -> PointMassState:
    pos = np.zeros(2)
    if config.init_spread > 0:
        pos = rng.uniform(-config.init_spread, config.init_spread, size=2)
    return PointMassState(pos, np.zeros(2), np.zeros(2), 0)


def task_reward(state: PointMassState, spec: TaskSpec, config: PointMassConfig) -> float:
    if spec.kind == "reach":
        dist = float(np.linalg.norm(state.pos - np.asarray(spec.goal)))
        return 1.0 - min(max(dist / config.diameter, 0.0), 1.0)
    speed = float(np.linalg.norm(state.vel))
    return max(0.0, 1.0 - abs(speed - spec.target_speed) / spec.target_speed)


def step(state: PointMassState, action: np.ndarray, config: PointMassConfig,
         rng: np.random.Generator, task: TaskSpec | None = None) -> tuple[PointMassState, float, bool]:
    """Semi-implicit Euler step. Returns ``(next_state, r_ext, done)``."""
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if a.shape != (ACTION_DIM,) or not np.all(np.isfinite(a)):
        raise EnvironmentFault(f"invalid action {action!r}")
    wind = state.wind
    if config.wind_sigma > 0:
        wind = (wind - config.wind_theta * wind * config.dt
                + config.wind_sigma * sqrt(config.dt) * rng.standard_normal(2))
    force = config.max_force * a + wind
    vel = state.vel + config.dt * (force / config.mass - config.friction * state.vel)
    pos = state.pos + config.dt * vel
    w = config.half_width
    hit = np.abs(pos) > w
    if np.any(hit):
        pos = np.clip(pos, -w, w)
        vel = np.where(hit, 0.0, vel)
    nxt = PointMassState(pos, vel, wind, state.t + 1)
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        raise EnvironmentFault("non-finite point-mass state")
    reward = task_reward(nxt, task, config) if task is not None else 0.0
    return nxt, reward, nxt.t >= config.episode_length


def wrap_noise(action: np.ndarray, config: NoiseWrapperConfig,
               rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """With probability p add N(0, sigma^2) per component, then clamp."""
    action = np.asarray(action, dtype=np.float64)
    if rng.random() >= config.p:
        return action, False
    noisy = action + config.sigma * rng.standard_normal(action.shape)
    return np.clip(noisy, -1.0, 1.0), True


class PointMassEnv:
    """Stateful wrapper used by the training loops."""

    obs_dim = OBS_DIM
    action_dim = ACTION_DIM

    def __init__(self, config: PointMassConfig, task: TaskSpec | None = None,
                 noise: NoiseWrapperConfig | None = None, seed: int | np.random.SeedSequence = 0):
        self.config = config
        self.task = task
        self.noise = noise
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        dyn_ss, noise_ss = ss.spawn(2)
        self.rng = np.random.default_rng(dyn_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.state = reset(config, self.rng)

    def reset(self) -> np.ndarray:
        self.state = reset(self.config, self.rng)
        return self.state.observation()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        if self.noise is not None:
            action, _ = wrap_noise(action, self.noise, self.noise_rng)
        self.state, reward, done = step(self.state, action, self.config, self.rng, self.task)
        return self.state.observation(), reward, done

    def with_task(self, task: TaskSpec | None) -> "PointMassEnv":
        env = PointMassEnv(self.config, task, self.noise)
        env.rng, env.noise_rng, env.state = self.rng, self.noise_rng, self.state
        return env
