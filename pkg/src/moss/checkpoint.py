"""Versioned checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic b"MOSSCKPT"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header (sorted keys, compact separators)
    ...       float32 little-endian array payload, concatenated

The header holds ``format_version``, ``config_hash``, ``config``,
``global_step``, ``rng_state``, ``meta`` and an ``arrays`` table with
``name``, ``shape``, ``offset`` and ``nbytes`` for every array (offsets are
relative to the start of the payload).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from moss import nn
from moss.agent import AgentParams
from moss.cpc import CpcNets, CpcOptState
from moss.errors import CheckpointError

MAGIC = b"MOSSCKPT"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    config_hash: str
    config: dict[str, Any]
    global_step: int
    arrays: dict[str, np.ndarray]
    rng_state: dict[str, Any] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def to_bytes(ckpt: Checkpoint) -> bytes:
    table, chunks, offset = [], [], 0
    for name, arr in ckpt.arrays.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        table.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {
        "format_version": ckpt.format_version,
        "config_hash": ckpt.config_hash,
        "config": ckpt.config,
        "global_step": ckpt.global_step,
        "rng_state": ckpt.rng_state,
        "meta": ckpt.meta,
        "arrays": table,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", ckpt.format_version, len(blob)) + blob + b"".join(chunks)


def from_bytes(raw: bytes) -> Checkpoint:
    if raw[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    header = json.loads(raw[20:20 + hlen])
    payload = memoryview(raw)[20 + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        start, stop = entry["offset"], entry["offset"] + entry["nbytes"]
        if stop > len(payload):
            raise CheckpointError(f"array {entry['name']} is truncated")
        arr = np.frombuffer(payload[start:stop], dtype=_DTYPE).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(np.float32)
    return Checkpoint(header["config_hash"], header["config"], header["global_step"], arrays,
                      header["rng_state"], header["meta"], header["format_version"])


def save(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load(path: str | Path, expected_hash: str | None = None, force: bool = False) -> Checkpoint:
    ckpt = from_bytes(Path(path).read_bytes())
    if expected_hash is not None and ckpt.config_hash != expected_hash and not force:
        raise CheckpointError(
            f"checkpoint config hash {ckpt.config_hash[:12]} does not match {expected_hash[:12]}; "
            "pass force=True to load anyway"
        )
    return ckpt


# ---------------------------------------------------------------------------
# packing of network state
# ---------------------------------------------------------------------------

_AGENT_NETS = {"actor": ("relu", "tanh"), "critic1": ("relu", "identity"), "critic2": ("relu", "identity"),
               "target1": ("relu", "identity"), "target2": ("relu", "identity")}
_AGENT_OPTS = ("actor_opt", "critic1_opt", "critic2_opt")
_CPC_NETS = ("f_psi", "g_phi_z", "g_phi_s")


def _adam_arrays(state: nn.AdamState, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        out[f"{prefix}.m{i}"] = m
        out[f"{prefix}.v{i}"] = v
    return out


def _adam_meta(state: nn.AdamState) -> dict[str, Any]:
    return {"step": state.step, "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps}


def pack_learner(agent: AgentParams, cpc: CpcNets | None, cpc_opt: CpcOptState | None):
    """Flatten agent and contrastive nets into ``(arrays, meta)``."""
    arrays: dict[str, np.ndarray] = {}
    meta: dict[str, Any] = {"optimizers": {}}
    for name in _AGENT_NETS:
        arrays.update(getattr(agent, name).named_arrays(f"agent.{name}"))
    for name in _AGENT_OPTS:
        state = getattr(agent, name)
        arrays.update(_adam_arrays(state, f"agent.{name}"))
        meta["optimizers"][f"agent.{name}"] = _adam_meta(state)
    if cpc is not None:
        meta["temperature"] = cpc.temperature
        for name, params in zip(_CPC_NETS, cpc.nets()):
            arrays.update(params.named_arrays(f"cpc.{name}"))
        for name, state in zip(_CPC_NETS, cpc_opt.states()):
            arrays.update(_adam_arrays(state, f"cpc.{name}_opt"))
            meta["optimizers"][f"cpc.{name}_opt"] = _adam_meta(state)
    return arrays, meta


def _mlp(arrays, prefix: str, hidden_act: str, out_act: str) -> nn.MlpParams:
    n = 0
    while f"{prefix}.w{n}" in arrays:
        n += 1
    if n == 0:
        raise CheckpointError(f"missing network {prefix}")
    ws = [arrays[f"{prefix}.w{i}"].copy() for i in range(n)]
    bs = [arrays[f"{prefix}.b{i}"].copy() for i in range(n)]
    return nn.MlpParams(ws, bs, (hidden_act,) * (n - 1) + (out_act,))


def _adam(arrays, meta, prefix: str, params: nn.MlpParams) -> nn.AdamState:
    k = len(params.arrays())
    m = [arrays[f"{prefix}.m{i}"].copy() for i in range(k)]
    v = [arrays[f"{prefix}.v{i}"].copy() for i in range(k)]
    info = meta["optimizers"][prefix]
    return nn.AdamState(m, v, info["step"], info["lr"], info["beta1"], info["beta2"], info["eps"])


def unpack_learner(arrays: dict[str, np.ndarray], meta: dict[str, Any]):
    nets = {name: _mlp(arrays, f"agent.{name}", *acts) for name, acts in _AGENT_NETS.items()}
    opts = {
        "actor_opt": _adam(arrays, meta, "agent.actor_opt", nets["actor"]),
        "critic1_opt": _adam(arrays, meta, "agent.critic1_opt", nets["critic1"]),
        "critic2_opt": _adam(arrays, meta, "agent.critic2_opt", nets["critic2"]),
    }
    agent = AgentParams(**nets, **opts)
    if "cpc.f_psi.w0" not in arrays:
        return agent, None, None
    cpc_params = [_mlp(arrays, f"cpc.{name}", "relu", "identity") for name in _CPC_NETS]
    cpc = CpcNets(*cpc_params, temperature=meta["temperature"])
    cpc_opt = CpcOptState(*(_adam(arrays, meta, f"cpc.{name}_opt", p) for name, p in zip(_CPC_NETS, cpc_params)))
    return agent, cpc, cpc_opt
