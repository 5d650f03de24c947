import numpy as np
import pytest

from qsilo.errors import ConfigurationError
from qsilo.moments import solve_R_direct
from qsilo.multigrid import (
    BLACK, RED, apply_operator, build_hierarchy, corner_series, diagonal_profile, prolong,
    relax, residual, restrict, scaled, solve_multigrid,
)


@pytest.mark.parametrize("N", [1, 3, 7, 15, 63])
def test_matches_direct(N):
    mg, hier = solve_multigrid(N, 0.5)
    d = solve_R_direct(N, 0.5)
    assert np.abs(scaled(mg) - scaled(d)).max() <= 1e-10
    assert hier.residuals[-1] <= 1e-12


def test_invalid_size():
    for N in (0, 2, 10, 100):
        with pytest.raises(ConfigurationError):
            build_hierarchy(N)


def test_transfers_of_zero():
    z = np.zeros((33, 33))
    assert not restrict(z).any()
    assert not prolong(np.zeros((17, 17))).any()


def test_prolong_keeps_coarse_values_and_parity():
    rng = np.random.default_rng(1)
    ec = np.zeros((9, 9))
    I, J = np.indices(ec.shape)
    act = ((I + J) % 2 == 0) & (I > 0) & (J > 0) & (I < 8) & (J < 8)
    ec[act] = rng.random(act.sum())
    e = prolong(ec)
    assert np.array_equal(e[::2, ::2][act], ec[act])
    i, j = np.indices(e.shape)
    assert not e[(i + j) % 2 == 1].any()
    assert not e[0].any() and not e[-1].any()


def test_relax_idempotent():
    # a colour's update only reads the other colour
    hier = build_hierarchy(31)
    lev = hier.fine
    lev.u[:] = np.random.default_rng(2).random(lev.u.shape)
    for color in (RED, BLACK):
        relax(lev, color)
        once = lev.u.copy()
        relax(lev, color)
        assert np.array_equal(lev.u, once)


def test_operator_symmetric():
    hier = build_hierarchy(15)
    lev = hier.fine
    rng = np.random.default_rng(3)
    i, j = np.indices(lev.u.shape)
    act = ((i + j) % 2 == 0) & (i > 0) & (j > 0) & (i < lev.M) & (j < lev.M)
    a, b = np.zeros_like(lev.u), np.zeros_like(lev.u)
    a[act], b[act] = rng.random(act.sum()), rng.random(act.sum())
    assert np.sum(a * apply_operator(lev, b)) == pytest.approx(np.sum(b * apply_operator(lev, a)), rel=1e-12)


def test_residual_of_exact_solution_small():
    _, hier = solve_multigrid(31)
    assert np.abs(residual(hier.fine)).max() <= 1e-11 * np.abs(hier.fine.f).max()


def test_convergence_factor():
    _, hier = solve_multigrid(255)
    r = hier.residuals
    assert len(r) - 1 <= 12
    assert r[3] / r[2] < 0.2


def test_diagonal_profile_shape():
    f, _ = solve_multigrid(31)
    x, r = diagonal_profile(f)
    assert len(x) == 33 and x[0] == 0 and x[-1] == 1
    assert r[0] == r[-1] == 0
    assert np.allclose(r, r[::-1])


def test_corner_series_monotone():
    s = corner_series([15, 31, 63, 127])
    vals = [c for _, c in s]
    assert all(b < a for a, b in zip(vals, vals[1:]))
