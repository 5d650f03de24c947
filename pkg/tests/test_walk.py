import numpy as np
import pytest

from qsilo.errors import ConfigurationError
from qsilo.moments import solve_R_direct, source_K
from qsilo.rng import stream
from qsilo.walk import (
    DiamondWalkState, R_bracket, diamond_step, difference_kernel, estimate_R, expected_T_bound,
    expected_diagonal_visits, run_diamond, sample_T, simulate_T, simulate_T_diamond,
)


def test_N1_exits_in_one_step():
    rng = stream(0, "selftest", 40)
    assert simulate_T((1, 1), 1, source_K(1, 0.0), rng) == 1.0


def test_boundary_start_is_zero():
    rng = stream(0, "selftest", 41)
    assert simulate_T((0, 2), 3, source_K(3, 0.0), rng) == 0.0


@pytest.mark.parametrize("N,start", [(2, (1, 1)), (3, (1, 3)), (4, (2, 2))])
def test_estimate_matches_direct(N, start):
    est = estimate_R(start, N, 0.25, 40_000, stream(1, "walk", N))
    R = solve_R_direct(N, 0.25).R[start]
    assert abs(est.estimate - R) <= 4 * est.stderr
    assert est.truncated_fraction == 0.0


def test_truncation_reported():
    t, trunc = sample_T((4, 4), 7, source_K(7, 0.0), 50, stream(0, "selftest", 42), max_steps=2)
    assert trunc > 0 and len(t) == 50


def test_difference_kernel_rows_sum_to_one():
    for N in (1, 3, 7):
        for z, row in difference_kernel(N).items():
            assert sum(row.values()) == pytest.approx(1.0)
            assert all(abs(z2) <= N + 1 and (z2 - z) % 2 == 0 for z2 in row)


def test_diamond_transitions_match_kernel():
    N = 5
    res = run_diamond((3, 3), N, 4000, stream(0, "diamond", 99), record_transitions=True)
    tr = res["transitions"]
    p0 = difference_kernel(N)
    for z in (0, 2, -4):
        sel = tr[tr[:, 0] == z]
        for z2, p in p0[z].items():
            frac = np.mean(sel[:, 1] == z2)
            assert frac == pytest.approx(p, abs=4 * np.sqrt(p * (1 - p) / len(sel)) + 1e-3)


def test_diamond_visit_structure():
    N = 3
    res = run_diamond((2, 2), N, 50_000, stream(0, "diamond", 98))
    soj = res["sojourns"]
    assert soj.mean() == pytest.approx(3.0, rel=0.02)
    assert res["excursions"].mean() == pytest.approx((N + 1) / 2, rel=0.02)
    assert res["visits"].mean() == pytest.approx(expected_diagonal_visits(N), rel=0.02)


def test_diamond_step_and_validation():
    s = DiamondWalkState((1, 1), False)
    nxt = diamond_step(s, 3, 0.1)  # first diagonal move -> (2, 2)
    assert nxt.pos == (2, 2) and not nxt.absorbed
    wrap = diamond_step(DiamondWalkState((3, 3), False), 3, 0.1)
    assert wrap.pos == (1, 1)
    out = diamond_step(DiamondWalkState((1, 1), False), 1, 0.9)
    assert out.absorbed
    with pytest.raises(ConfigurationError):
        diamond_step(s, 4, 0.5)
    with pytest.raises(ConfigurationError):
        simulate_T_diamond((1, 2), 3, 7.0, stream(0, "selftest", 43))


def test_bounds_contain_R():
    for N in (3, 7, 15, 31):
        R = solve_R_direct(N, 0.0).R
        lo, hi = R_bracket(N)
        assert lo <= R.min() and R.max() <= hi
    lo, hi = expected_T_bound(3)
    assert (lo, hi) == (6.0, 42.0)
