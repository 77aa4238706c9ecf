"""FIFO transition storage with n-step window sampling.

A window of ``n`` consecutive transitions is valid only if every member
shares the episode, mode and skill of the first one and the step indices
are contiguous. Validity is checked at sample time, so eviction can never
leave a dangling window behind.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from moss.errors import InvalidBatchError, NotReadyError

_FIELDS = ("obs", "action", "next_obs", "mode", "skill", "r_ext", "done", "episode_id", "step_index")


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    mode: int
    skill: np.ndarray
    r_ext: float
    done: bool
    episode_id: int
    step_index: int


@dataclass
class NStepBatch:
    obs: np.ndarray  # [N, obs]  state at the window start
    action: np.ndarray  # [N, A]
    skill: np.ndarray  # [N, d]
    mode: np.ndarray  # [N]
    r_ext: np.ndarray  # [N, n]
    step_obs: np.ndarray  # [N, n, obs]
    step_next_obs: np.ndarray  # [N, n, obs]
    next_obs: np.ndarray  # [N, obs]  state after the last window step
    start: np.ndarray  # [N] logical index of the window start

    def __len__(self) -> int:
        return len(self.obs)


class ReplayBuffer:
    def __init__(self, capacity: int = 1_000_000, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.dtype = np.dtype(dtype)
        self._data: dict[str, np.ndarray] | None = None
        self._total = 0

    def __len__(self) -> int:
        return min(self._total, self.capacity)

    @property
    def total_pushed(self) -> int:
        return self._total

    def _allocate(self, t: Transition) -> None:
        c = self.capacity
        obs_dim, act_dim, skill_dim = len(t.obs), len(t.action), len(t.skill)
        self._data = {
            "obs": np.zeros((c, obs_dim), self.dtype),
            "action": np.zeros((c, act_dim), self.dtype),
            "next_obs": np.zeros((c, obs_dim), self.dtype),
            "mode": np.zeros(c, np.int8),
            "skill": np.zeros((c, skill_dim), self.dtype),
            "r_ext": np.zeros(c, self.dtype),
            "done": np.zeros(c, bool),
            "episode_id": np.zeros(c, np.int64),
            "step_index": np.zeros(c, np.int64),
        }

    def push(self, t: Transition) -> None:
        if self._data is None:
            self._allocate(t)
        d = self._data
        vectors = {"obs": t.obs, "action": t.action, "next_obs": t.next_obs, "skill": t.skill}
        for name, value in vectors.items():
            value = np.asarray(value)
            if value.shape != d[name].shape[1:]:
                raise InvalidBatchError(f"{name} has shape {value.shape}, expected {d[name].shape[1:]}")
            if not np.all(np.isfinite(value)):
                raise InvalidBatchError(f"{name} is not finite")
        if t.mode not in (0, 1):
            raise InvalidBatchError(f"mode must be 0 or 1, got {t.mode!r}")
        if not np.isfinite(t.r_ext):
            raise InvalidBatchError("r_ext is not finite")
        i = self._total % self.capacity
        for name, value in vectors.items():
            d[name][i] = value
        d["mode"][i] = t.mode
        d["r_ext"][i] = t.r_ext
        d["done"][i] = t.done
        d["episode_id"][i] = t.episode_id
        d["step_index"][i] = t.step_index
        self._total += 1

    def get(self, offset: int) -> Transition:
        """Transition at position ``offset`` counted from the oldest stored one."""
        if not 0 <= offset < len(self):
            raise IndexError(offset)
        i = (self._total - len(self) + offset) % self.capacity
        d = self._data
        return Transition(d["obs"][i].copy(), d["action"][i].copy(), d["next_obs"][i].copy(),
                          int(d["mode"][i]), d["skill"][i].copy(), float(d["r_ext"][i]),
                          bool(d["done"][i]), int(d["episode_id"][i]), int(d["step_index"][i]))

    def _valid(self, starts: np.ndarray, n: int) -> np.ndarray:
        d, c = self._data, self.capacity
        i0 = starts % c
        ok = np.ones(len(starts), bool)
        for j in range(1, n):
            ij = (starts + j) % c
            ok &= d["episode_id"][ij] == d["episode_id"][i0]
            ok &= d["mode"][ij] == d["mode"][i0]
            ok &= d["step_index"][ij] == d["step_index"][i0] + j
            ok &= np.all(d["skill"][ij] == d["skill"][i0], axis=1)
        return ok

    def valid_window_starts(self, n: int) -> np.ndarray:
        """All logical start indices of valid n-step windows (oldest first)."""
        if n < 1:
            raise ValueError("n must be positive")
        first = self._total - len(self)
        count = len(self) - n + 1
        if count <= 0:
            return np.zeros(0, np.int64)
        starts = np.arange(first, first + count, dtype=np.int64)
        return starts[self._valid(starts, n)]

    def sample_starts(self, batch_size: int, n: int, rng: np.random.Generator,
                      max_rounds: int = 32) -> np.ndarray:
        if batch_size < 1 or n < 1:
            raise ValueError("batch_size and n must be positive")
        first = self._total - len(self)
        count = len(self) - n + 1
        if count <= 0:
            raise NotReadyError(f"buffer holds {len(self)} transitions, need at least {n}")
        chosen = np.empty(0, np.int64)
        for _ in range(max_rounds):
            need = batch_size - len(chosen)
            cand = first + rng.integers(0, count, size=need)
            chosen = np.concatenate([chosen, cand[self._valid(cand, n)]])
            if len(chosen) == batch_size:
                return chosen
        valid = self.valid_window_starts(n)
        if len(valid) == 0:
            raise NotReadyError("no valid n-step window in the buffer")
        extra = valid[rng.integers(0, len(valid), size=batch_size - len(chosen))]
        return np.concatenate([chosen, extra])

    def sample_nstep(self, batch_size: int, n: int, rng: np.random.Generator) -> NStepBatch:
        starts = self.sample_starts(batch_size, n, rng)
        d, c = self._data, self.capacity
        idx = (starts[:, None] + np.arange(n)[None, :]) % c
        i0, last = idx[:, 0], idx[:, -1]
        return NStepBatch(
            obs=d["obs"][i0], action=d["action"][i0], skill=d["skill"][i0], mode=d["mode"][i0].astype(np.int64),
            r_ext=d["r_ext"][idx], step_obs=d["obs"][idx], step_next_obs=d["next_obs"][idx],
            next_obs=d["next_obs"][last], start=starts,
        )

    def save(self, path: str | Path) -> None:
        arrays = {"capacity": np.array(self.capacity), "total": np.array(self._total)}
        if self._data is not None:
            arrays.update(self._data)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ReplayBuffer":
        with np.load(path) as f:
            buf = cls(int(f["capacity"]), f["obs"].dtype if "obs" in f else np.float32)
            buf._total = int(f["total"])
            if "obs" in f:
                buf._data = {name: f[name].copy() for name in _FIELDS}
        return buf
