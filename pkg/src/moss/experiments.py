"""Directional desk-scale experiments.

Runs are cached under ``cache_dir`` keyed by the config hash. Training is
deterministic given the config, so a cached run is the run that would have
been produced again.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from moss import train
from moss.config import RunConfig, make_config

log = logging.getLogger(__name__)

DEFAULT_SEEDS = tuple(range(6))


def cached_pretrain(cfg: RunConfig, cache_dir: str | Path) -> Path:
    run = Path(cache_dir) / f"pretrain_{cfg.method_label}_s{cfg.seed}_{cfg.hash()[:12]}"
    done = run / "DONE"
    if not done.exists():
        log.info("pretraining %s", run.name)
        train.pretrain(cfg, run)
        done.write_text(cfg.hash())
    return run / "checkpoint.bin"


def cached_finetune(cfg: RunConfig, checkpoint: Path, cache_dir: str | Path) -> float:
    run = Path(cache_dir) / f"finetune_{cfg.method_label}_s{cfg.seed}_{cfg.hash()[:12]}"
    result = run / "result.json"
    if not result.exists():
        log.info("finetuning %s", run.name)
        train.finetune(cfg, run, checkpoint)
    return float(json.loads(result.read_text())["score"])


@dataclass
class ZeroShotSeed:
    seed: int
    proxy_max: float
    proxy_min: float
    state_proxy_max: float
    state_proxy_min: float

    @property
    def holds(self) -> bool:
        return self.proxy_max > self.proxy_min


def zero_shot_directional(cache_dir: str | Path, seeds=DEFAULT_SEEDS, profile: str = "desk",
                          episodes: int = 10, overrides: dict | None = None) -> list[ZeroShotSeed]:
    """Mean entropy proxy of rollouts under each mode's skills, per seed."""
    out = []
    for seed in seeds:
        cfg = make_config(profile, overrides=dict(overrides or {}, seed=seed))
        ckpt = cached_pretrain(cfg, cache_dir)
        per_mode = {m: train.evaluate(cfg, ckpt, m, episodes) for m in (0, 1)}
        mean = {m: float(np.mean([r["entropy_proxy"] for r in rows])) for m, rows in per_mode.items()}
        raw = {m: float(np.mean([r["state_entropy_proxy"] for r in rows])) for m, rows in per_mode.items()}
        out.append(ZeroShotSeed(seed, mean[0], mean[1], raw[0], raw[1]))
    return out


@dataclass
class RobustnessResult:
    scores: dict  # (schedule, noisy) -> list of per-seed scores

    def median(self, schedule: str, noisy: bool) -> float:
        return float(np.median(self.scores[(schedule, noisy)]))

    def drop(self, schedule: str) -> float:
        clean = self.median(schedule, False)
        return (clean - self.median(schedule, True)) / clean

    @property
    def holds(self) -> bool:
        return self.drop("deterministic") < self.drop("fixed_max")


def noise_robustness(cache_dir: str | Path, seeds=DEFAULT_SEEDS, profile: str = "desk",
                     task: str = "reach_top_right", overrides: dict | None = None) -> RobustnessResult:
    """Finetuned reach scores with and without the action-noise wrapper."""
    scores = {}
    for schedule in ("deterministic", "fixed_max"):
        for noisy in (False, True):
            vals = []
            for seed in seeds:
                cfg = make_config(profile, overrides=dict(overrides or {}, seed=seed, schedule=schedule,
                                                          action_noise=noisy, task=task))
                ckpt = cached_pretrain(cfg, cache_dir)
                vals.append(cached_finetune(cfg, ckpt, cache_dir))
            scores[(schedule, noisy)] = vals
    return RobustnessResult(scores)
