"""Geometric multigrid for the scaled ``R`` system.

The unknown is ``r = R / (N+1)**3`` on the grid ``(i, j) in {0..N+1}**2`` with
spacing ``h = 1/(N+1)``.  Only points with ``i + j`` even carry the solution;
they form a square lattice rotated by 45 degrees with spacing ``sqrt(2) h``.
In operator form the system reads

    off the diagonal:  (4 r - S) / (2 h**2) = 0
    on the diagonal:   (4 r - S) / (2 h**2) + (2 r - r[i-1,i-1] - r[i+1,i+1]) / (2 h**2)
                          = 3 K(i) / (N + 1)

where ``S`` is the sum of the four diagonal neighbours.  The operator is
symmetric positive definite.

Coarse level ``l`` is the same kind of grid with ``(N+1) / 2**l`` cells, so
coarse points are the fine points ``(2I, 2J)`` with ``I + J`` even and the
diagonal is represented on every level.  Relaxation is red-black
Gauss-Seidel with colours given by the parity of ``i`` (every stencil
neighbour has the other parity).  Transfers are full weighting and bilinear
interpolation taken along the rotated lattice axes.  The diagonal
second-difference term is a line operator whose weight per unit length is
proportional to the mesh size; it is rediscretised with weight ``2**-l`` on
level ``l`` so all levels describe the same line operator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .moments import MomentField, R_residual, field_from_R, source_K, symmetrize

RED, BLACK = 0, 1
STAGNATION_LEVEL = 1e-11


@dataclass
class Level:
    M: int  # cells per side; interior indices 1..M-1
    line_weight: float
    u: np.ndarray
    f: np.ndarray

    @property
    def h2(self) -> float:
        return 1.0 / self.M**2


@dataclass
class GridHierarchy:
    N: int
    alpha: float
    levels: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    @property
    def fine(self) -> Level:
        return self.levels[0]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def build_hierarchy(N: int, alpha: float = 0.0, coarsest: int = 2) -> GridHierarchy:
    """Assemble all levels for ``N + 1`` a power of two, zero initial guess."""
    if N < 1 or not is_power_of_two(N + 1) or N + 1 < 2:
        raise ConfigurationError(f"multigrid needs N + 1 a power of two, got N = {N}")
    hier = GridHierarchy(N, float(alpha))
    M, lev = N + 1, 0
    while True:
        hier.levels.append(Level(M, 2.0**-lev, np.zeros((M + 1, M + 1)), np.zeros((M + 1, M + 1))))
        if M <= coarsest:
            break
        M //= 2
        lev += 1
    d = np.arange(1, N + 1)
    hier.fine.f[d, d] = 3.0 * source_K(N, alpha) / (N + 1)
    return hier


def _color_slices(M, color):
    """(points, low neighbours, high neighbours) strided slices for a colour."""
    if color == RED:
        return slice(1, M, 2), slice(0, M - 1, 2), slice(2, M + 1, 2)
    return slice(2, M - 1, 2), slice(1, M - 2, 2), slice(3, M, 2)


def relax(level: Level, color: int) -> None:
    """Exact Gauss-Seidel update of every point of one colour, in place."""
    u, f, M, c = level.u, level.f, level.M, level.line_weight
    s, lo, hi = _color_slices(M, color)
    if s.start >= M:
        return
    dlo = np.diagonal(u[lo, lo]).copy()
    dhi = np.diagonal(u[hi, hi]).copy()
    rhs = 2.0 * level.h2 * f[s, s] + u[lo, lo] + u[hi, hi] + u[lo, hi] + u[hi, lo]
    new = rhs / 4.0
    k = np.arange(new.shape[0])
    new[k, k] = (rhs[k, k] + c * (dlo + dhi)) / (4.0 + 2.0 * c)
    u[s, s] = new


def smooth(level: Level, sweeps: int) -> None:
    for _ in range(sweeps):
        relax(level, RED)
        relax(level, BLACK)


def apply_operator(level: Level, u=None) -> np.ndarray:
    """``A u`` on active points; zero on inactive points and the boundary."""
    u = level.u if u is None else u
    M, c = level.M, level.line_weight
    out = np.zeros_like(u)
    for color in (RED, BLACK):
        s, lo, hi = _color_slices(M, color)
        if s.start >= M:
            continue
        centre = u[s, s]
        val = (4.0 * centre - (u[lo, lo] + u[hi, hi] + u[lo, hi] + u[hi, lo])) / (2.0 * level.h2)
        k = np.arange(val.shape[0])
        val[k, k] += c * (2.0 * centre[k, k] - u[lo, lo][k, k] - u[hi, hi][k, k]) / (2.0 * level.h2)
        out[s, s] = val
    return out


def residual(level: Level) -> np.ndarray:
    r = np.zeros_like(level.u)
    M = level.M
    for color in (RED, BLACK):
        s, _, _ = _color_slices(M, color)
        r[s, s] = level.f[s, s]
    return r - apply_operator(level)


def restrict(r: np.ndarray) -> np.ndarray:
    """Full weighting onto the coarse rotated lattice."""
    M = r.shape[0] - 1
    Mc = M // 2
    rc = np.zeros((Mc + 1, Mc + 1))
    if Mc < 2:
        return rc
    c = slice(2, M - 1, 2)
    lo, hi = slice(1, M - 2, 2), slice(3, M, 2)
    lo2, hi2 = slice(0, M - 3, 2), slice(4, M + 1, 2)
    rc[1:-1, 1:-1] = (
        r[c, c] / 4.0
        + (r[lo, lo] + r[hi, hi] + r[lo, hi] + r[hi, lo]) / 8.0
        + (r[lo2, c] + r[hi2, c] + r[c, lo2] + r[c, hi2]) / 16.0
    )
    I, J = np.indices(rc.shape)
    rc[(I + J) % 2 == 1] = 0.0
    return rc


def prolong(ec: np.ndarray) -> np.ndarray:
    """Bilinear interpolation along the rotated axes.

    Relies on ``ec`` being zero at inactive coarse points and on the
    boundary, which lets each interpolation formula pick up only the right
    neighbours.
    """
    Mc = ec.shape[0] - 1
    M = 2 * Mc
    e = np.zeros((M + 1, M + 1))
    e[::2, ::2] = ec
    e[2:-1:2, 2:-1:2] += (ec[:-2, 1:-1] + ec[2:, 1:-1] + ec[1:-1, :-2] + ec[1:-1, 2:]) / 4.0
    e[1::2, 1::2] = (ec[:-1, :-1] + ec[1:, 1:] + ec[1:, :-1] + ec[:-1, 1:]) / 2.0
    return e


def vcycle(hier: GridHierarchy, nu_pre: int = 2, nu_post: int = 2, lev: int = 0) -> GridHierarchy:
    """Apply one V(nu_pre, nu_post) cycle starting at level ``lev``."""
    level = hier.levels[lev]
    if lev == len(hier.levels) - 1:
        # coarsest grid: at most a handful of unknowns, sweep to convergence
        for _ in range(50):
            smooth(level, 1)
            if np.abs(residual(level)).max() <= 1e-15 * max(1.0, np.abs(level.f).max()):
                break
        return hier
    smooth(level, nu_pre)
    coarse = hier.levels[lev + 1]
    coarse.f = restrict(residual(level))
    coarse.u = np.zeros_like(coarse.f)
    vcycle(hier, nu_pre, nu_post, lev + 1)
    level.u += prolong(coarse.u)
    smooth(level, nu_post)
    return hier


def relative_residual(hier: GridHierarchy) -> float:
    fine = hier.fine
    return float(np.abs(residual(fine)).max() / np.abs(fine.f).max())


def solve_multigrid(N, alpha=0.0, tol=1e-13, max_cycles=30, nu_pre=2, nu_post=2):
    """Run V-cycles until the relative fine-grid residual is ``<= tol``.

    Also stops once a cycle gains less than a factor 2 after the residual
    is below ``1e-11``: that is the rounding floor (a few ``1e-14``).
    Returns ``(field, hierarchy)``; ``hierarchy.residuals`` holds the
    residual before the first cycle and after each one.
    """
    hier = build_hierarchy(N, alpha)
    if not np.abs(hier.fine.f).max() > 0:
        hier.residuals.append(0.0)
        return _to_field(hier, 0), hier
    hier.residuals.append(relative_residual(hier))
    cycles = 0
    while hier.residuals[-1] > tol and cycles < max_cycles:
        vcycle(hier, nu_pre, nu_post)
        cycles += 1
        hier.residuals.append(relative_residual(hier))
        prev, cur = hier.residuals[-2:]
        if cur < STAGNATION_LEVEL and cur > 0.5 * prev:
            break
    return _to_field(hier, cycles), hier


def _to_field(hier: GridHierarchy, cycles: int) -> MomentField:
    N = hier.N
    R = symmetrize(hier.fine.u * float(N + 1) ** 3)
    K = source_K(N, hier.alpha)
    return field_from_R(N, hier.alpha, R, R_residual(R, K), "multigrid", cycles)


def scaled(field: MomentField) -> np.ndarray:
    """``r = R / (N+1)**3`` on the padded grid."""
    return field.R / float(field.N + 1) ** 3


def diagonal_profile(field: MomentField):
    """``(x, r(x, x))`` at ``x = i/(N+1)``, ``i = 0..N+1``, walls included."""
    N = field.N
    i = np.arange(N + 2)
    return i / (N + 1.0), scaled(field)[i, i]


def corner_series(N_list, alpha=0.0, **kw):
    """``[(N, R(1,1)/(N+1)**2)]`` from multigrid solves."""
    out = []
    for N in N_list:
        fld, _ = solve_multigrid(N, alpha, **kw)
        out.append((N, float(fld.R[1, 1]) / (N + 1) ** 2))
    return out


def timed_solve(N, alpha=0.0, **kw):
    t0 = time.perf_counter()
    fld, hier = solve_multigrid(N, alpha, **kw)
    return fld, hier, time.perf_counter() - t0
