"""Pretraining, finetuning and evaluation loops."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from moss import checkpoint as ckpt_io
from moss import cpc as cpc_mod
from moss import knn, nn, skills
from moss.agent import (AgentParams, ExplorationSpec, act, actor_update, critic_update, init_agent,
                        policy, soft_update_targets, twin_q)
from moss.config import RunConfig, dump_config
from moss.cpc import CpcNets, CpcOptState
from moss.envs import ACTION_DIM, OBS_DIM, PointMassEnv, get_task
from moss.errors import CheckpointError, MossError
from moss.replay import NStepBatch, ReplayBuffer, Transition
from moss.skills import AdaptiveSwitchState, ModeSchedule, ScheduleVariant
from moss.stats import iqm

log = logging.getLogger(__name__)

METRIC_FIELDS = ("step", "mode", "intrinsic_reward_mean", "nce_loss", "extrinsic_return", "entropy_proxy")
STREAMS = ("init", "env", "act", "skill", "replay", "probe")


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


def rng_states(streams: dict[str, np.random.Generator]) -> dict[str, Any]:
    return {name: g.bit_generator.state for name, g in streams.items()}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class MetricsWriter:
    def __init__(self, path: Path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(METRIC_FIELDS)
        self.rows = 0

    def row(self, step, mode=None, intrinsic=None, nce=None, extrinsic=None, proxy=None) -> None:
        self._w.writerow([_fmt(v) for v in (step, mode, intrinsic, nce, extrinsic, proxy)])
        self.rows += 1

    def close(self) -> None:
        self._fh.close()


@dataclass
class Learner:
    agent: AgentParams
    cpc: CpcNets | None = None
    cpc_opt: CpcOptState | None = None


def init_learner(cfg: RunConfig, rng: np.random.Generator, with_cpc: bool = True) -> Learner:
    agent = init_agent(OBS_DIM, ACTION_DIM, cfg.skill_dim, cfg.hidden_dim, rng, cfg.lr, cfg.agent_init)
    if not with_cpc:
        return Learner(agent)
    nets = cpc_mod.init_cpc_nets(OBS_DIM, cfg.skill_dim, cfg.cpc_hidden_dim, rng, cfg.temperature,
                                 scheme=cfg.cpc_init)
    return Learner(agent, nets, cpc_mod.init_cpc_opt(nets, cfg.lr))


def embed(cpc: CpcNets, s: np.ndarray, s_next: np.ndarray, space: str = "transition") -> np.ndarray:
    """Embedding used by the k-NN entropy estimate."""
    if space == "state":
        return cpc_mod.state_embedding(cpc, s_next)
    return cpc_mod.transition_embedding(cpc, s, s_next)


def intrinsic_rewards(cpc: CpcNets, batch: NStepBatch, cfg: RunConfig):
    """Mode-signed k-NN rewards for every step of every window.

    Neighbours are searched among the N transitions that share a window
    offset, so each offset is its own minibatch. Returns the ``[N, n]``
    rewards and the ``[N, n]`` radii.
    """
    n_b, n = batch.r_ext.shape
    s = batch.step_obs.reshape(n_b * n, -1)
    s_next = batch.step_next_obs.reshape(n_b * n, -1)
    emb = embed(cpc, s, s_next, cfg.knn_space).reshape(n_b, n, -1)
    radii = np.empty((n_b, n))
    for j in range(n):
        radii[:, j] = knn.knn_radii(emb[:, j], cfg.knn_k)
    rewards = knn.intrinsic_reward(radii, batch.mode[:, None], cfg.knn_c)
    return rewards, radii


def update_agent(learner: Learner, batch: NStepBatch, rewards: np.ndarray, cfg: RunConfig) -> tuple[Learner, float, float]:
    agent, closs = critic_update(learner.agent, batch.obs, batch.action, batch.skill, rewards,
                                 batch.next_obs, cfg.discount, cfg.max_grad_norm)
    agent, aloss = actor_update(agent, batch.obs, batch.skill, cfg.max_grad_norm)
    agent = soft_update_targets(agent, cfg.tau)
    return Learner(agent, learner.cpc, learner.cpc_opt), closs, aloss


def update_cpc(learner: Learner, batch: NStepBatch, cfg: RunConfig) -> tuple[Learner, float]:
    nets, opt, loss = cpc_mod.cpc_update(learner.cpc, batch.step_obs[:, 0], batch.step_next_obs[:, 0],
                                         batch.skill, learner.cpc_opt, cfg.max_grad_norm)
    return Learner(learner.agent, nets, opt), loss


def critic_q_fn(agent: AgentParams):
    def q_fn(states, zs):
        a = policy(agent.actor, states, zs)
        return twin_q(agent, states, zs, a)[0]

    return q_fn


class SkillController:
    """Tracks the current (mode, skill) inside an episode.

    Skills are resampled at every multiple of ``skill_every`` and whenever the
    schedule changes mode, so a skill segment never straddles a mode switch.
    """

    def __init__(self, cfg: RunConfig, rng: np.random.Generator, probe_rng: np.random.Generator | None = None,
                 forced_mode: int | None = None):
        self.cfg = cfg
        self.rng = rng
        self.probe_rng = probe_rng
        self.forced_mode = forced_mode
        self.schedule = ModeSchedule(cfg.episode_length, cfg.max_fraction, cfg.schedule)
        self.switch = AdaptiveSwitchState(cfg.adaptive_beta, cfg.adaptive_probe)
        self.mode = skills.MAXIMIZE
        self.z = np.zeros(cfg.skill_dim)

    @property
    def adaptive(self) -> bool:
        return self.forced_mode is None and self.schedule.variant is ScheduleVariant.ADAPTIVE

    def _sample(self, mode: int) -> np.ndarray:
        return skills.sample_skill(mode, self.rng, self.cfg.skill_dim, self.cfg.encoding,
                                   self.schedule.same_support and self.forced_mode is None)

    def _probe(self, obs, mode: int, q_fn) -> float:
        zs = skills.sample_skill(mode, self.probe_rng, self.cfg.skill_dim, self.cfg.encoding,
                                 size=self.switch.probe_count)
        return skills.q_variance(q_fn, obs, zs)

    def step(self, step_in_episode: int, obs=None, q_fn=None) -> bool:
        """Update (mode, z) for this step; True when a new skill was drawn."""
        boundary = step_in_episode % self.cfg.skill_every == 0
        if self.forced_mode is not None:
            mode = self.forced_mode
        elif self.adaptive:
            if step_in_episode == 0:
                self.switch.reset()
                self.mode = skills.MAXIMIZE
            if not boundary:
                return False
            v_now = self._probe(obs, 1 - self.mode, q_fn)
            mode, self.switch = skills.adaptive_switch(self.switch, self.mode, v_now)
        else:
            mode = self.schedule.mode_at(step_in_episode)
        if boundary or mode != self.mode:
            self.mode = mode
            self.z = self._sample(mode)
            return True
        return False


@dataclass
class PretrainResult:
    out_dir: Path
    checkpoint: Path
    metrics: Path
    global_step: int
    update_steps: list[int] = field(default_factory=list)
    resample_steps: list[int] = field(default_factory=list)
    mode_counts: list[int] = field(default_factory=lambda: [0, 0])
    seconds: float = 0.0


def _make_env(cfg: RunConfig, seed_seq, task=None) -> PointMassEnv:
    return PointMassEnv(cfg.env_config(), task, cfg.noise_config(), seed=seed_seq)


def _env_seed(cfg: RunConfig, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, purpose])


def build_checkpoint(cfg: RunConfig, learner: Learner, step: int, streams, env: PointMassEnv | None = None,
                     extra: dict | None = None):
    arrays, meta = ckpt_io.pack_learner(learner.agent, learner.cpc, learner.cpc_opt)
    meta.update(extra or {})
    rng = rng_states(streams)
    if env is not None:
        rng["env_dynamics"] = env.rng.bit_generator.state
        rng["env_noise"] = env.noise_rng.bit_generator.state
    return ckpt_io.Checkpoint(cfg.hash(), cfg.to_dict(), step, arrays, rng, meta)


def pretrain(cfg: RunConfig, out_dir: str | Path) -> PretrainResult:
    """Reward-free pretraining with the mixture-of-surprises intrinsic reward."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    t0 = time.perf_counter()
    streams = make_streams(cfg.seed)
    learner = init_learner(cfg, streams["init"])
    env = _make_env(cfg, _env_seed(cfg, 1))
    buffer = ReplayBuffer(cfg.capacity)
    controller = SkillController(cfg, streams["skill"], streams["probe"])
    explore = ExplorationSpec(cfg.stddev, cfg.stddev_clip)
    metrics = MetricsWriter(out / "metrics.csv")
    result = PretrainResult(out, out / "checkpoint.bin", out / "metrics.csv", 0)

    seg_fh = open(out / "segments.csv", "w", newline="")
    segments = csv.writer(seg_fh)
    segments.writerow(("step", "episode", "step_in_episode", "mode"))

    obs = env.reset()
    episode, step_in_ep = 0, 0
    try:
        for t in range(1, cfg.pretrain_steps + 1):
            q_fn = critic_q_fn(learner.agent) if controller.adaptive else None
            if controller.step(step_in_ep, obs, q_fn):
                result.resample_steps.append(t - 1)
                segments.writerow((t - 1, episode, step_in_ep, controller.mode))
            if t <= cfg.random_action_steps:
                action = streams["act"].uniform(-1.0, 1.0, size=ACTION_DIM)
            else:
                action = act(learner.agent, obs, controller.z, True, streams["act"], explore)
            next_obs, r_ext, done = env.step(action)
            buffer.push(Transition(obs, action, next_obs, controller.mode, controller.z, r_ext, done,
                                   episode, step_in_ep))
            result.mode_counts[controller.mode] += 1
            obs, step_in_ep = next_obs, step_in_ep + 1
            if done:
                obs, step_in_ep, episode = env.reset(), 0, episode + 1

            if t >= cfg.seed_frames and t % cfg.update_every == 0:
                batch = buffer.sample_nstep(cfg.batch_size, cfg.nstep, streams["replay"])
                rewards, radii = intrinsic_rewards(learner.cpc, batch, cfg)
                learner, _, _ = update_agent(learner, batch, rewards, cfg)
                nce = None
                if t % cfg.cpc_update_every == 0:
                    learner, nce = update_cpc(learner, batch, cfg)
                result.update_steps.append(t)
                log_r = np.log(cfg.knn_c + radii[:, 0])
                for m in (0, 1):
                    sel = batch.mode == m
                    if np.any(sel):
                        metrics.row(t, m, float(np.mean(rewards[sel, 0])), nce, None, float(np.mean(log_r[sel])))
            if cfg.checkpoint_every and t % cfg.checkpoint_every == 0:
                ckpt_io.save(out / f"checkpoint_{t}.bin", build_checkpoint(cfg, learner, t, streams, env))
            if t % 10_000 == 0:
                log.info("pretrain step %d  (%.0fs)", t, time.perf_counter() - t0)
    except MossError:
        log.error("pretraining aborted at step %d", t)
        (out / "FAILED").write_text(f"step {t}\n")
        raise
    finally:
        metrics.close()
        seg_fh.close()

    result.global_step = cfg.pretrain_steps
    extra = {"episode": episode, "step_in_episode": step_in_ep, "mode_counts": result.mode_counts,
             "knn_backend": knn.kernels.backend()}
    ckpt_io.save(result.checkpoint, build_checkpoint(cfg, learner, cfg.pretrain_steps, streams, env, extra))
    result.seconds = time.perf_counter() - t0
    return result


def load_learner(path: str | Path, cfg: RunConfig, force: bool = False) -> Learner:
    """Load networks for finetuning or evaluation; shapes must match ``cfg``."""
    ck = ckpt_io.load(path)
    saved = RunConfig(**ck.config)
    if saved.arch_dict() != cfg.arch_dict() and not force:
        raise CheckpointError(f"checkpoint architecture {saved.arch_dict()} is incompatible with {cfg.arch_dict()}")
    agent, nets, opt = ckpt_io.unpack_learner(ck.arrays, ck.meta)
    return Learner(agent, nets, opt)


def rollout(env: PointMassEnv, agent: AgentParams, controller: SkillController, cfg: RunConfig,
            explore_rng=None, explore: ExplorationSpec | None = None, on_step=None):
    """Run one episode; returns (return, states, next_states)."""
    obs = env.reset()
    total, states, next_states = 0.0, [], []
    for step_in_ep in range(cfg.episode_length):
        controller.step(step_in_ep, obs, critic_q_fn(agent) if controller.adaptive else None)
        action = act(agent, obs, controller.z, explore is not None, explore_rng,
                     explore or ExplorationSpec())
        next_obs, r, done = env.step(action)
        if on_step is not None:
            on_step(obs, action, next_obs, r, done, step_in_ep)
        states.append(obs)
        next_states.append(next_obs)
        total += r
        obs = next_obs
        if done:
            break
    return total, np.array(states), np.array(next_states)


@dataclass
class FinetuneResult:
    out_dir: Path
    score: float
    eval_returns: list[float]
    skill: np.ndarray
    skill_mode: int
    candidate_returns: list[tuple[int, float]]
    seconds: float = 0.0


class _FrozenSkill:
    """Controller stand-in that always returns the selected skill."""

    adaptive = False

    def __init__(self, mode: int, z: np.ndarray):
        self.mode, self.z = mode, z

    def step(self, *args, **kwargs) -> bool:
        return False


def finetune(cfg: RunConfig, out_dir: str | Path, checkpoint: str | Path | None = None,
             steps: int | None = None, force: bool = False) -> FinetuneResult:
    """Select a skill on the task reward, freeze it, then train on extrinsic reward."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    t0 = time.perf_counter()
    budget = steps if steps is not None else cfg.finetune_steps
    streams = make_streams(cfg.seed + 10_000)
    if checkpoint is not None:
        learner = load_learner(checkpoint, cfg, force)
    else:
        learner = init_learner(cfg, streams["init"], with_cpc=False)
    # fresh optimisers and targets copied from the online critics
    a = learner.agent
    learner = Learner(AgentParams(a.actor, a.critic1, a.critic2, a.critic1.copy(), a.critic2.copy(),
                                  nn.adam_init(a.actor, cfg.lr), nn.adam_init(a.critic1, cfg.lr),
                                  nn.adam_init(a.critic2, cfg.lr)))

    task = get_task(cfg.task)
    env = _make_env(cfg, _env_seed(cfg, 2), task)
    eval_env = _make_env(cfg, _env_seed(cfg, 3), task)
    buffer = ReplayBuffer(cfg.capacity)
    explore = ExplorationSpec(cfg.stddev, cfg.stddev_clip)
    metrics = MetricsWriter(out / "metrics.csv")
    t = 0
    episode = 0

    def store(mode, z):
        def on_step(obs, action, next_obs, r, done, step_in_ep):
            buffer.push(Transition(obs, action, next_obs, mode, z, r, done, episode, step_in_ep))
        return on_step

    # skill selection on the task reward, one episode per candidate
    candidates = []
    for mode in (skills.MAXIMIZE, skills.MINIMIZE):
        for _ in range(cfg.candidates_per_mode):
            candidates.append((mode, skills.sample_skill(mode, streams["skill"], cfg.skill_dim, cfg.encoding)))
    candidate_returns = []
    for mode, z in candidates:
        if t + cfg.episode_length > budget:
            break
        ret, _, _ = rollout(env, learner.agent, _FrozenSkill(mode, z), cfg, on_step=store(mode, z))
        candidate_returns.append((mode, ret))
        t += cfg.episode_length
        episode += 1
        metrics.row(t, mode, None, None, ret, None)
    if candidate_returns:
        best = int(np.argmax([r for _, r in candidate_returns]))
        skill_mode, skill = candidates[best]
    else:
        skill_mode, skill = candidates[0]
    log.info("selected skill from mode %d", skill_mode)

    eval_returns: list[float] = []
    frozen = _FrozenSkill(skill_mode, skill)
    obs = env.reset()
    step_in_ep, ep_return = 0, 0.0
    while t < budget:
        t += 1
        action = act(learner.agent, obs, skill, True, streams["act"], explore)
        next_obs, r, done = env.step(action)
        buffer.push(Transition(obs, action, next_obs, skill_mode, skill, r, done, episode, step_in_ep))
        ep_return += r
        obs, step_in_ep = next_obs, step_in_ep + 1
        if done:
            metrics.row(t, skill_mode, None, None, ep_return, None)
            obs, step_in_ep, ep_return, episode = env.reset(), 0, 0.0, episode + 1
        if t >= cfg.seed_frames and t % cfg.update_every == 0:
            batch = buffer.sample_nstep(cfg.batch_size, cfg.nstep, streams["replay"])
            learner, _, _ = update_agent(learner, batch, batch.r_ext.astype(np.float64), cfg)
        if t % cfg.eval_every == 0:
            ret, _, _ = rollout(eval_env, learner.agent, frozen, cfg)
            eval_returns.append(ret)

    metrics.close()
    window = eval_returns[-cfg.final_window:]
    if len(window) >= 4:
        score = iqm(window)
    else:
        score = float(np.mean(window)) if window else float("nan")
    result = FinetuneResult(out, score, eval_returns, skill, skill_mode, candidate_returns,
                            time.perf_counter() - t0)
    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("eval_index", "return"))
        for i, r in enumerate(eval_returns):
            w.writerow((i, repr(float(r))))
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "task", "seed", "score"))
        w.writerow((cfg.method_label if checkpoint is not None else "scratch", cfg.task, cfg.seed, repr(score)))
    (out / "result.json").write_text(json.dumps({
        "score": score, "eval_returns": eval_returns, "skill_mode": skill_mode, "skill": skill.tolist(),
        "candidate_returns": candidate_returns, "checkpoint": str(checkpoint) if checkpoint else None,
        "task": cfg.task, "seed": cfg.seed, "method": cfg.method_label, "steps": budget,
    }, indent=2))
    return result


def expert(cfg: RunConfig, out_dir: str | Path) -> FinetuneResult:
    """From-scratch DDPG on the task reward with the enlarged step budget."""
    res = finetune(cfg, out_dir, None, steps=cfg.finetune_steps * cfg.expert_multiplier)
    with open(Path(out_dir) / "expert.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("task", "score"))
        w.writerow((cfg.task, repr(res.score)))
    return res


def evaluate(cfg: RunConfig, checkpoint: str | Path | None, mode: int, num_episodes: int,
             learner: Learner | None = None, force: bool = False) -> list[dict[str, Any]]:
    """Roll out the frozen policy with skills from ``mode``'s prior.

    Each episode reports the extrinsic return under ``cfg.task`` and the
    mean ``log(c + R_k)`` over its visited transitions, both in the learned
    embedding space and in raw ``(s, s')`` space.
    """
    if num_episodes <= 0:
        return []
    if learner is None:
        if checkpoint is None:
            raise ValueError("evaluate needs a checkpoint or a learner")
        learner = load_learner(checkpoint, cfg, force)
    task = get_task(cfg.task)
    rows = []
    for ep in range(num_episodes):
        env = _make_env(cfg, np.random.SeedSequence([cfg.seed, 4, ep]), task)
        controller = SkillController(cfg, np.random.default_rng([cfg.seed, 5, ep, mode]), forced_mode=mode)
        ret, s, s_next = rollout(env, learner.agent, controller, cfg)
        k = min(cfg.knn_k, len(s) - 1)
        emb = embed(learner.cpc, s.astype(np.float32), s_next.astype(np.float32), cfg.knn_space)
        rows.append({
            "episode": ep, "mode": mode, "return": ret,
            "entropy_proxy": knn.entropy_proxy(emb, k, cfg.knn_c),
            "state_entropy_proxy": knn.entropy_proxy(np.concatenate([s, s_next], axis=1), k, cfg.knn_c),
        })
    return rows
