"""Run configuration, named profiles and config-file loading.

Defaults are the full-scale hyperparameters. The ``desk`` profile shrinks
networks, batches and step budgets so a run fits on a single CPU core;
``smoke`` is smaller still and is meant for tests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from moss.envs import TASKS, NoiseWrapperConfig, PointMassConfig
from moss.errors import ConfigError
from moss.skills import Encoding, ScheduleVariant


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    method: str = ""  # label in results; derived from the schedule when empty

    # environment
    episode_length: int = 1000
    dt: float = 0.02
    mass: float = 1.0
    friction: float = 1.0
    half_width: float = 1.0
    max_force: float = 1.0
    wind_sigma: float = 0.0
    wind_theta: float = 1.0
    action_noise: bool = False
    action_noise_p: float = 0.3
    action_noise_sigma: float = 0.2
    task: str = "reach_top_right"

    # budgets
    pretrain_steps: int = 2_000_000
    finetune_steps: int = 100_000
    seed_frames: int = 4000
    random_action_steps: int = 2000

    # DDPG
    capacity: int = 1_000_000
    nstep: int = 3
    batch_size: int = 1048
    discount: float = 0.99
    lr: float = 1e-4
    update_every: int = 2
    tau: float = 0.01
    hidden_dim: int = 1024
    stddev: float = 0.2
    stddev_clip: float = 0.3
    agent_init: str = "orthogonal"
    max_grad_norm: float | None = None

    # skills and intrinsic reward
    skill_dim: int = 64
    skill_every: int = 50
    temperature: float = 0.5
    cpc_hidden_dim: int = 1024
    cpc_init: str = "fan_in"
    cpc_update_every: int = 2
    knn_k: int = 12
    knn_c: float = 1.0
    knn_space: str = "transition"  # "transition" -> g_phi_s(h, h'); "state" -> f_psi(s')
    schedule: str = "deterministic"
    max_fraction: float = 0.5
    encoding: str = "disjoint"
    adaptive_beta: float = 1.1
    adaptive_probe: int = 64

    # finetuning and evaluation
    skill_selection: str = "grid_then_freeze"
    candidates_per_mode: int = 8
    eval_every: int = 1000
    final_window: int = 10
    expert_multiplier: int = 5
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        validate(self)

    # ------------------------------------------------------------------
    def env_config(self) -> PointMassConfig:
        return PointMassConfig(self.dt, self.mass, self.friction, self.half_width, self.episode_length,
                               self.max_force, self.wind_sigma, self.wind_theta)

    def noise_config(self) -> NoiseWrapperConfig | None:
        if not self.action_noise:
            return None
        return NoiseWrapperConfig(self.action_noise_p, self.action_noise_sigma)

    @property
    def method_label(self) -> str:
        if self.method:
            return self.method
        return {
            "deterministic": "moss",
            "adaptive": "moss_adaptive",
            "fixed_max": "cic",
            "fixed_min": "negative_cic",
            "same_support": "moss_same",
        }[self.schedule]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def arch_dict(self) -> dict[str, Any]:
        """Fields that determine network shapes; checkpoints must agree on these."""
        keys = ("hidden_dim", "cpc_hidden_dim", "skill_dim", "encoding", "temperature")
        return {k: getattr(self, k) for k in keys}


def config_hash(d: dict[str, Any]) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


_POSITIVE_INT = ("episode_length", "pretrain_steps", "finetune_steps", "capacity", "nstep", "batch_size",
                 "update_every", "hidden_dim", "skill_dim", "skill_every", "cpc_hidden_dim",
                 "cpc_update_every", "knn_k", "candidates_per_mode", "eval_every", "final_window",
                 "expert_multiplier")
_NON_NEGATIVE_INT = ("seed", "seed_frames", "random_action_steps", "checkpoint_every")
_POSITIVE_FLOAT = ("dt", "mass", "half_width", "max_force", "lr", "stddev", "stddev_clip", "temperature", "knn_c")


def validate(cfg: RunConfig) -> None:
    for name in _POSITIVE_INT:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    for name in _NON_NEGATIVE_INT:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
    for name in _POSITIVE_FLOAT:
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be positive")
    checks = [
        (0.0 <= cfg.discount < 1.0, "discount must lie in [0, 1)"),
        (0.0 < cfg.tau <= 1.0, "tau must lie in (0, 1]"),
        (0.0 <= cfg.max_fraction <= 1.0, "max_fraction must lie in [0, 1]"),
        (cfg.adaptive_beta > 1.0, "adaptive_beta must exceed 1"),
        (cfg.adaptive_probe >= 2, "adaptive_probe must be at least 2"),
        (cfg.batch_size >= 2, "batch_size must be at least 2"),
        (cfg.batch_size > cfg.knn_k, "batch_size must exceed knn_k"),
        (cfg.friction >= 0 and cfg.wind_sigma >= 0 and cfg.wind_theta >= 0, "env parameters must be >= 0"),
        (0.0 <= cfg.action_noise_p <= 1.0, "action_noise_p must lie in [0, 1]"),
        (cfg.action_noise_sigma >= 0, "action_noise_sigma must be >= 0"),
        (cfg.knn_space in ("transition", "state"), "knn_space must be 'transition' or 'state'"),
        (cfg.agent_init in ("orthogonal", "fan_in") and cfg.cpc_init in ("orthogonal", "fan_in"),
         "init schemes must be 'orthogonal' or 'fan_in'"),
        (cfg.skill_selection == "grid_then_freeze", "only grid_then_freeze skill selection is implemented"),
        (cfg.task in TASKS, f"task must be one of {sorted(TASKS)}"),
        (cfg.max_grad_norm is None or cfg.max_grad_norm > 0, "max_grad_norm must be positive or null"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    try:
        ScheduleVariant(cfg.schedule)
        Encoding(cfg.encoding)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.encoding == "half" and cfg.skill_dim % 2:
        raise ConfigError("half-vector encoding needs an even skill_dim")


PROFILES: dict[str, dict[str, Any]] = {
    "paper": {},
    "desk": {
        "episode_length": 200,
        "pretrain_steps": 100_000,
        "finetune_steps": 20_000,
        "capacity": 100_000,
        "batch_size": 256,
        "hidden_dim": 128,
        "cpc_hidden_dim": 128,
    },
    "smoke": {
        "episode_length": 200,
        "pretrain_steps": 10_000,
        "finetune_steps": 6_000,
        "capacity": 20_000,
        "batch_size": 64,
        "hidden_dim": 32,
        "cpc_hidden_dim": 32,
        "skill_dim": 16,
        "candidates_per_mode": 2,
        "eval_every": 400,
    },
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    kind = _FIELD_TYPES[name]
    if isinstance(value, str) and kind != "str":
        if value.lower() in ("none", "null"):
            return None
        if kind == "bool":
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{name} expects a boolean, got {value!r}")
            return value.lower() in ("true", "1", "yes")
        if kind == "int":
            return int(float(value)) if "e" in value.lower() else int(value)
        return float(value)
    if kind == "float" and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind == "float | None" and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind == "int" and isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def load_config_file(path: str | Path) -> dict[str, Any]:
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    return {k: _coerce(k, v) for k, v in data.items()}


def make_config(profile: str = "desk", file: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> RunConfig:
    """Profile defaults, then the config file, then explicit overrides."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    values = dict(PROFILES[profile])
    if file is not None:
        values.update(load_config_file(file))
    for k, v in (overrides or {}).items():
        values[k] = _coerce(k, v)
    return RunConfig(**values)


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
