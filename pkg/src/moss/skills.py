"""Skill priors, mode schedules and the variance-driven mode switcher.

Mode 0 maximises transition entropy, mode 1 minimises it. Under the
``disjoint`` encoding the two modes draw skills from ``U[0, 1]^d`` and
``U[-1, 0]^d``; under ``half`` each mode owns one half of the vector and
leaves the other half at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from moss.errors import InvalidBatchError, ScheduleError

MAXIMIZE = 0
MINIMIZE = 1


class Encoding(str, Enum):
    DISJOINT = "disjoint"
    HALF = "half"


class ScheduleVariant(str, Enum):
    DETERMINISTIC = "deterministic"
    ADAPTIVE = "adaptive"
    FIXED_MAX = "fixed_max"  # plain CIC
    FIXED_MIN = "fixed_min"  # negative CIC
    SAME_SUPPORT = "same_support"  # MOSS_SAME ablation


@dataclass(frozen=True)
class SkillContext:
    mode: int
    z: np.ndarray


def _check_mode(mode: int) -> int:
    if mode not in (MAXIMIZE, MINIMIZE):
        raise ValueError(f"mode must be 0 or 1, got {mode!r}")
    return int(mode)


def sample_skill(mode: int, rng: np.random.Generator, dim: int = 64,
                 encoding: Encoding | str = Encoding.DISJOINT, same_support: bool = False,
                 size: int | None = None) -> np.ndarray:
    """Draw one skill (or ``size`` skills) from the prior of ``mode``.

    With ``same_support`` both modes use the mode-0 prior.
    """
    mode = _check_mode(mode)
    encoding = Encoding(encoding)
    shape = (dim,) if size is None else (size, dim)
    if same_support:
        mode = MAXIMIZE
    if encoding is Encoding.DISJOINT:
        u = rng.uniform(0.0, 1.0, size=shape)
        return u if mode == MAXIMIZE else -u
    if dim % 2:
        raise ValueError("half-vector encoding needs an even skill dimension")
    half = dim // 2
    z = np.zeros(shape)
    active = slice(0, half) if mode == MAXIMIZE else slice(half, dim)
    z[..., active] = rng.uniform(0.0, 1.0, size=shape[:-1] + (half,))
    return z


def skill_in_support(z: np.ndarray, mode: int, encoding: Encoding | str = Encoding.DISJOINT,
                     same_support: bool = False) -> bool:
    z = np.asarray(z)
    mode = MAXIMIZE if same_support else _check_mode(mode)
    if Encoding(encoding) is Encoding.DISJOINT:
        if mode == MAXIMIZE:
            return bool(np.all((z >= 0) & (z <= 1)))
        return bool(np.all((z >= -1) & (z <= 0)))
    half = z.shape[-1] // 2
    active, inactive = (z[..., :half], z[..., half:]) if mode == MAXIMIZE else (z[..., half:], z[..., :half])
    return bool(np.all(inactive == 0) and np.all((active >= 0) & (active <= 1)))


@dataclass(frozen=True)
class ModeSchedule:
    episode_length: int
    max_fraction: float = 0.5
    variant: ScheduleVariant = ScheduleVariant.DETERMINISTIC

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", ScheduleVariant(self.variant))
        if self.episode_length < 1:
            raise ScheduleError("episode_length must be positive")
        if not 0.0 <= self.max_fraction <= 1.0:
            raise ScheduleError("max_fraction must lie in [0, 1]")

    @property
    def switch_step(self) -> int:
        """First step of the minimisation phase."""
        # round before ceil so 0.7 * 1000 does not become 701
        return math.ceil(round(self.max_fraction * self.episode_length, 9))

    @property
    def same_support(self) -> bool:
        return self.variant is ScheduleVariant.SAME_SUPPORT

    def mode_at(self, step: int) -> int:
        if not 0 <= step < self.episode_length:
            raise ScheduleError(f"step {step} outside [0, {self.episode_length})")
        v = self.variant
        if v is ScheduleVariant.FIXED_MAX:
            return MAXIMIZE
        if v is ScheduleVariant.FIXED_MIN:
            return MINIMIZE
        if v is ScheduleVariant.ADAPTIVE:
            # state-driven; every episode opens in the maximisation mode
            if step == 0:
                return MAXIMIZE
            raise ScheduleError("the adaptive schedule is decided by AdaptiveSwitchState")
        return MAXIMIZE if step < self.switch_step else MINIMIZE


def sample_variance(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise InvalidBatchError("variance probe needs at least 2 values")
    return float(np.var(values, ddof=1))


def q_variance(q_fn, state: np.ndarray, skills: np.ndarray) -> float:
    """Unbiased variance of ``q_fn(states, skills)`` over the probe skills.

    ``q_fn`` evaluates ``Q(s, pi(s, z), z)`` for a batch of (state, skill)
    rows and returns one value per row.
    """
    skills = np.atleast_2d(skills)
    if len(skills) < 2:
        raise InvalidBatchError("variance probe needs at least 2 skills")
    states = np.repeat(np.atleast_2d(state), len(skills), axis=0)
    return sample_variance(q_fn(states, skills))


@dataclass
class AdaptiveSwitchState:
    beta: float = 1.1
    probe_count: int = 64
    last_variance: list = field(default_factory=lambda: [None, None])

    def __post_init__(self) -> None:
        if self.beta <= 1:
            raise ValueError("beta must be greater than 1")
        if self.probe_count < 2:
            raise ValueError("probe_count must be at least 2")

    def reset(self) -> None:
        self.last_variance = [None, None]


def adaptive_switch(state: AdaptiveSwitchState, current_mode: int,
                    v_now_opposite: float) -> tuple[int, AdaptiveSwitchState]:
    """Switch to the other mode iff ``beta * V_last(other) <= V_now(other)``.

    The first probe of the other mode only records its variance.
    """
    current_mode = _check_mode(current_mode)
    if v_now_opposite < 0:
        raise ValueError("variance must be non-negative")
    other = 1 - current_mode
    last = list(state.last_variance)
    previous = last[other]
    new_mode = current_mode
    if previous is not None and state.beta * previous <= v_now_opposite:
        new_mode = other
    last[other] = float(v_now_opposite)
    return new_mode, AdaptiveSwitchState(state.beta, state.probe_count, last)
