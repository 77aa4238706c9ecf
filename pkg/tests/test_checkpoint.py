import numpy as np
import pytest

from moss import agent, checkpoint, cpc
from moss.config import RunConfig
from moss.errors import CheckpointError


def learner(rng):
    a = agent.init_agent(4, 2, 6, 16, rng)
    nets = cpc.init_cpc_nets(4, 6, 16, rng)
    return a, nets, cpc.init_cpc_opt(nets, 1e-4)


def make_ckpt(rng):
    a, nets, opt = learner(rng)
    # take one step so the Adam moments are non-trivial
    s = rng.standard_normal((8, 4)).astype(np.float32)
    z = rng.uniform(0, 1, (8, 6)).astype(np.float32)
    nets, opt, _ = cpc.cpc_update(nets, s, s + 1, z, opt)
    arrays, meta = checkpoint.pack_learner(a, nets, opt)
    cfg = RunConfig()
    return checkpoint.Checkpoint(cfg.hash(), cfg.to_dict(), 123, arrays,
                                 {"env": np.random.default_rng(0).bit_generator.state}, meta)


def test_save_load_save_bytes(tmp_path, rng):
    ck = make_ckpt(rng)
    checkpoint.save(tmp_path / "a.bin", ck)
    back = checkpoint.load(tmp_path / "a.bin")
    checkpoint.save(tmp_path / "b.bin", back)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert back.global_step == 123


def test_layout(rng):
    raw = checkpoint.to_bytes(make_ckpt(rng))
    assert raw[:8] == b"MOSSCKPT"
    assert int.from_bytes(raw[8:12], "little") == checkpoint.FORMAT_VERSION


def test_hash_mismatch_refused(tmp_path, rng):
    ck = make_ckpt(rng)
    checkpoint.save(tmp_path / "a.bin", ck)
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "a.bin", expected_hash="0" * 64)
    assert checkpoint.load(tmp_path / "a.bin", expected_hash="0" * 64, force=True).global_step == 123
    assert checkpoint.load(tmp_path / "a.bin", expected_hash=ck.config_hash).config_hash == ck.config_hash


def test_corrupt_files(rng):
    raw = checkpoint.to_bytes(make_ckpt(rng))
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(raw[:8] + (99).to_bytes(4, "little") + raw[12:])
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(raw[:-16])


def test_unpack_round_trip(rng):
    a, nets, opt = learner(rng)
    arrays, meta = checkpoint.pack_learner(a, nets, opt)
    a2, nets2, opt2 = checkpoint.unpack_learner(arrays, meta)
    for x, y in zip(a.actor.arrays() + a.target2.arrays(), a2.actor.arrays() + a2.target2.arrays()):
        np.testing.assert_array_equal(x, y)
    assert a2.actor.activations == ("relu", "relu", "tanh")
    assert nets2.temperature == nets.temperature
    assert opt2.g_phi_s.lr == opt.g_phi_s.lr
    only_agent, none_nets, none_opt = checkpoint.unpack_learner(*checkpoint.pack_learner(a, None, None))
    assert none_nets is None and none_opt is None
    assert "agent.actor.w0" in arrays and "cpc.f_psi_opt.m0" in arrays
