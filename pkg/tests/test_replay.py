import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from moss.errors import InvalidBatchError, NotReadyError
from moss.replay import ReplayBuffer, Transition


def tr(i, episode=0, step=None, mode=0, skill=None):
    return Transition(np.full(2, float(i)), np.zeros(1), np.full(2, float(i + 1)), mode,
                      np.zeros(3) if skill is None else skill, float(i), False, episode,
                      i if step is None else step)


def fill(buf, segments):
    """segments: list of (episode, length, mode, skill_value); step index restarts per episode."""
    steps = {}
    i = 0
    for episode, length, mode, sv in segments:
        for _ in range(length):
            s = steps.get(episode, 0)
            buf.push(tr(i, episode, s, mode, np.full(3, sv)))
            steps[episode] = s + 1
            i += 1


def test_push_len_and_round_trip():
    buf = ReplayBuffer(10)
    t = tr(0)
    buf.push(t)
    assert len(buf) == 1
    got = buf.get(0)
    np.testing.assert_array_equal(got.obs, t.obs.astype(np.float32))
    assert (got.mode, got.episode_id, got.step_index, got.r_ext) == (0, 0, 0, 0.0)


def test_fifo_eviction():
    buf = ReplayBuffer(2)
    for i in range(3):
        buf.push(tr(i))
    assert len(buf) == 2 and buf.total_pushed == 3
    assert buf.get(0).r_ext == 1.0 and buf.get(1).r_ext == 2.0
    with pytest.raises(IndexError):
        buf.get(2)


def test_malformed_rejected():
    buf = ReplayBuffer(4)
    buf.push(tr(0))
    bad = tr(1)
    bad.obs = np.zeros(3)
    with pytest.raises(InvalidBatchError):
        buf.push(bad)
    with pytest.raises(InvalidBatchError):
        buf.push(tr(1, mode=2))
    nan = tr(1)
    nan.skill = np.array([np.nan, 0, 0])
    with pytest.raises(InvalidBatchError):
        buf.push(nan)


def test_single_episode_single_window(rng):
    buf = ReplayBuffer(10)
    fill(buf, [(0, 3, 0, 0.5)])
    np.testing.assert_array_equal(buf.valid_window_starts(3), [0])
    batch = buf.sample_nstep(4, 3, rng)
    assert np.all(batch.start == 0)
    np.testing.assert_array_equal(batch.r_ext[0], [0, 1, 2])
    np.testing.assert_array_equal(batch.next_obs[0], [3, 3])


def test_mode_switch_boundary_enumeration():
    buf = ReplayBuffer(2000)
    fill(buf, [(0, 500, 0, 0.2), (0, 500, 1, -0.2)])
    valid = set(buf.valid_window_starts(3).tolist())
    assert 498 not in valid and 499 not in valid
    assert 497 in valid and 500 in valid
    assert len(valid) == 1000 - 2 - 2


def test_windows_never_mix(rng):
    buf = ReplayBuffer(500)
    fill(buf, [(0, 7, 0, 0.1), (0, 5, 0, 0.3), (1, 9, 1, -0.3), (2, 4, 0, 0.9)])
    batch = buf.sample_nstep(300, 3, rng)
    for j in range(3):
        np.testing.assert_array_equal(batch.step_obs[:, j, 0], batch.obs[:, 0] + j)
    idx = batch.start
    eps = np.array([buf.get(int(s)).episode_id for s in idx])
    eps_end = np.array([buf.get(int(s) + 2).episode_id for s in idx])
    np.testing.assert_array_equal(eps, eps_end)
    skills_end = np.array([buf.get(int(s) + 2).skill for s in idx])
    np.testing.assert_array_equal(batch.skill, skills_end)


def test_not_ready(rng):
    buf = ReplayBuffer(10)
    with pytest.raises(NotReadyError):
        buf.sample_nstep(2, 3, rng)
    fill(buf, [(0, 2, 0, 0.0), (1, 2, 0, 0.0)])
    with pytest.raises(NotReadyError):
        buf.sample_nstep(2, 3, rng)


def test_eviction_revalidates(rng):
    buf = ReplayBuffer(5)
    fill(buf, [(0, 4, 0, 0.0), (1, 4, 0, 0.0)])
    # oldest surviving transition is episode 0 step 3; only episode 1 forms windows
    starts = buf.valid_window_starts(3)
    assert all(buf.get(int(s) - (buf.total_pushed - len(buf))).episode_id == 1 for s in starts)


def test_uniform_over_valid_windows():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(100)
    fill(buf, [(0, 20, 0, 0.1), (0, 15, 1, -0.1), (1, 10, 0, 0.4)])
    valid = buf.valid_window_starts(3)
    draws = np.concatenate([buf.sample_starts(1000, 3, rng) for _ in range(100)])
    counts = np.array([(draws == v).sum() for v in valid])
    assert counts.sum() == len(draws)
    _, p = sps.chisquare(counts)
    assert p > 1e-3


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 8), st.integers(0, 1)), min_size=1, max_size=8), st.integers(1, 4))
def test_valid_starts_match_enumeration(segs, n):
    buf = ReplayBuffer(1000)
    segments = [(k, length, mode, float(k)) for k, (length, mode) in enumerate(segs)]
    fill(buf, segments)
    expected, offset = [], 0
    for _, length, _, _ in segments:
        expected.extend(range(offset, offset + length - n + 1))
        offset += length
    np.testing.assert_array_equal(buf.valid_window_starts(n), expected)


def test_save_load(tmp_path, rng):
    buf = ReplayBuffer(8)
    fill(buf, [(0, 10, 0, 0.5)])
    buf.save(tmp_path / "buf.npz")
    back = ReplayBuffer.load(tmp_path / "buf.npz")
    assert len(back) == 8 and back.total_pushed == 10
    for i in range(8):
        np.testing.assert_array_equal(back.get(i).obs, buf.get(i).obs)
