import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsilo.errors import ConfigurationError
from qsilo.model import (
    NoiseDraw, SiloConfig, SiloState, lost_to_walls, mean_profile, parse_weight_dist,
    sample_noise, sample_noise_block, step, weight_variance, weights_from_uniforms,
)
from qsilo.rng import stream


def test_mean_profile_values():
    assert mean_profile(1).tolist() == [1.0]
    assert mean_profile(2).tolist() == [2.0, 2.0]
    assert mean_profile(4).tolist() == [4.0, 6.0, 6.0, 4.0]


def test_mean_profile_is_fixed_point_in_expectation():
    # average the update over u = 1/2 with unit grain weight
    for N in (1, 2, 7, 30):
        w = mean_profile(N)
        nxt = step(SiloState(0, w), NoiseDraw(np.full(N, 0.5), np.ones(N))).w
        assert np.allclose(nxt, w)


def test_single_step_by_hand():
    s = step(SiloState(0, np.array([1.0, 2.0, 3.0])), NoiseDraw(np.array([0.5, 0.25, 1.0]), np.ones(3)))
    # site 1: 1 + w2 u2 = 1 + 0.5; site 2: 1 + w3 u3 + w1 (1-u1) = 1 + 3 + 0.5; site 3: 1 + w2 (1-u2)
    assert s.w.tolist() == [1.5, 4.5, 2.5]
    assert s.t == 1


def test_step_length_mismatch():
    with pytest.raises(ConfigurationError):
        step(SiloState(0, np.ones(3)), NoiseDraw(np.ones(2), np.ones(3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_mass_balance(N, seed):
    rng = stream(seed, "selftest", 1)
    w = rng.exponential(size=N) * N
    cfg = SiloConfig(N, "exp", seed)
    noise = sample_noise(cfg, rng)
    new = step(SiloState(0, w), noise).w
    assert new.sum() == pytest.approx(w.sum() + noise.v.sum() - lost_to_walls(w, noise.u), rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_monotone_in_state(N, seed):
    rng = stream(seed, "selftest", 2)
    y = rng.random(N)
    x = y + rng.random(N)
    noise = NoiseDraw(rng.random(N), rng.random(N))
    assert np.all(step(SiloState(0, x), noise).w >= step(SiloState(0, y), noise).w)


def test_block_matches_sequential():
    cfg = SiloConfig(5, "gamma:3", 9)
    a, b = stream(9, "selftest", 3), stream(9, "selftest", 3)
    u, v = sample_noise_block(cfg, a, 7)
    for t in range(7):
        d = sample_noise(cfg, b)
        assert np.array_equal(d.u, u[t]) and np.array_equal(d.v, v[t])


@pytest.mark.parametrize("tag,var", [("const", 0.0), ("exp", 1.0), ("uniform", 1 / 3), ("gamma:4", 0.25)])
def test_weight_laws(tag, var):
    assert weight_variance(tag) == pytest.approx(var)
    x = stream(1, "selftest", 4).random(400_000)
    v = weights_from_uniforms(tag, x)
    assert v.mean() == pytest.approx(1.0, abs=5e-3)
    assert v.var() == pytest.approx(var, abs=1e-2)


@pytest.mark.parametrize("tag", ["pareto", "gamma", "gamma:-1", "exp:2", "gamma:x"])
def test_bad_weight_tags(tag):
    with pytest.raises(ConfigurationError):
        parse_weight_dist(tag)


def test_config_validation():
    assert SiloConfig(3, "uniform").alpha == pytest.approx(1 / 3)
    for bad in (0, -2, 1.5):
        with pytest.raises(ConfigurationError):
            SiloConfig(bad)
