"""Exact stationary second moments of the finite silo.

The covariances ``sigma(i, j)`` are recovered from the matrix ``R`` with

    R(i, i) = -2 sigma(i, i) + w(i)**2,    R(i, j) = -3 sigma(i, j)  (i != j),

which solves ``R = K 1{i=j} + P R`` with zero boundary values, where ``P`` is
the absorbing kernel on ``{0..N+1}**2``: off the diagonal, one of the four
diagonal neighbours with probability 1/4; from ``(i, i)``, ``(i+-1, i+-1)``
with probability 1/3 and ``(i+-1, i-+1)`` with probability 1/6.

Arrays are dense: ``R`` is ``(N+2, N+2)`` including the zero boundary and
``sigma`` is ``(N, N)``.  Pairs with ``i + j`` odd belong to the other parity
sublattice, are exactly zero and are never touched by the solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConfigurationError, NonConvergenceError, SizeError
from .model import mean_profile

MAX_DIRECT_N = 768


@dataclass(frozen=True)
class MomentField:
    N: int
    alpha: float
    w: np.ndarray
    sigma: np.ndarray
    R: np.ndarray
    K: np.ndarray
    residual: float = float("nan")
    solver: str = ""
    iterations: int = 0

    def sigma_at(self, i, j):
        """Covariance of sites ``i`` and ``j`` (1-based; walls give 0)."""
        if not (1 <= i <= self.N and 1 <= j <= self.N):
            return 0.0
        return float(self.sigma[i - 1, j - 1])


def source_K(N: int, alpha: float) -> np.ndarray:
    """``K(i) = 6 i (N+1-i) - (N+1)**2 - (1 + 2 alpha)`` for ``i = 1..N``."""
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    if alpha < 0:
        raise ConfigurationError("alpha must be nonnegative")
    return 6.0 * mean_profile(N) - (N + 1) ** 2 - (1.0 + 2.0 * alpha)


def even_mask(N: int) -> np.ndarray:
    """Interior pairs with ``i + j`` even, on the padded ``(N+2, N+2)`` grid."""
    i, j = np.indices((N + 2, N + 2))
    m = (i + j) % 2 == 0
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = False
    return m


def apply_kernel(R: np.ndarray) -> np.ndarray:
    """``(P R)`` on the interior of a padded array; boundary rows are left 0."""
    out = np.zeros_like(R)
    c = (slice(1, -1), slice(1, -1))
    out[c] = 0.25 * (R[2:, 2:] + R[:-2, :-2] + R[2:, :-2] + R[:-2, 2:])
    n = R.shape[0] - 2
    d = np.arange(1, n + 1)
    out[d, d] = (R[d + 1, d + 1] + R[d - 1, d - 1]) / 3.0 + (R[d + 1, d - 1] + R[d - 1, d + 1]) / 6.0
    return out


def R_residual(R: np.ndarray, K: np.ndarray) -> float:
    """``max |R - K 1{i=j} - P R|`` over even interior pairs, relative to ``max(1, |K|)``."""
    n = len(K)
    res = R - apply_kernel(R)
    d = np.arange(1, n + 1)
    res[d, d] -= K
    res[~even_mask(n)] = 0.0
    return float(np.abs(res).max() / max(1.0, np.abs(K).max()))


def symmetrize(R: np.ndarray) -> np.ndarray:
    """Project onto transpose- and reflection-symmetric arrays, exactly."""
    S = R + R.T
    S = S + S[::-1, ::-1]
    return S / 4.0


def field_from_R(N, alpha, R, residual=float("nan"), solver="", iterations=0) -> MomentField:
    w = mean_profile(N)
    Ri = R[1:-1, 1:-1]
    sigma = -Ri / 3.0
    d = np.arange(N)
    sigma[d, d] = (w**2 - Ri[d, d]) / 2.0
    sigma[~even_mask(N)[1:-1, 1:-1]] = 0.0
    return MomentField(N, float(alpha), w, sigma, R, source_K(N, alpha), residual, solver, iterations)


@numba.njit(cache=True)
def _gs_sweep(R, K):
    n = R.shape[0] - 2
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if (i + j) % 2:
                continue
            if i == j:
                R[i, i] = K[i - 1] + (R[i + 1, i + 1] + R[i - 1, i - 1]) / 3.0 + (
                    R[i + 1, i - 1] + R[i - 1, i + 1]
                ) / 6.0
            else:
                R[i, j] = 0.25 * (R[i + 1, j + 1] + R[i - 1, j - 1] + R[i + 1, j - 1] + R[i - 1, j + 1])


@numba.njit(cache=True)
def _residual_max(R, K):
    n = R.shape[0] - 2
    worst = 0.0
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if (i + j) % 2:
                continue
            if i == j:
                r = K[i - 1] + (R[i + 1, i + 1] + R[i - 1, i - 1]) / 3.0 + (R[i + 1, i - 1] + R[i - 1, i + 1]) / 6.0
            else:
                r = 0.25 * (R[i + 1, j + 1] + R[i - 1, j - 1] + R[i + 1, j - 1] + R[i - 1, j + 1])
            r = abs(r - R[i, j])
            if r > worst:
                worst = r
    return worst


def solve_R_fixed_point(N, alpha=0.0, tol=1e-12, max_iters=None, history=None) -> MomentField:
    """Lexicographic Gauss-Seidel from ``R = 0`` until the relative residual is ``<= tol``.

    If ``history`` is a list, the residual after every sweep is appended to it.
    """
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    K = source_K(N, alpha)
    if max_iters is None:
        max_iters = int(1e6 * max(1.0, math.log(N)))
    scale = max(1.0, float(np.abs(K).max()))
    R = np.zeros((N + 2, N + 2))
    res = _residual_max(R, K) / scale
    it = 0
    while res > tol:
        if it >= max_iters:
            raise NonConvergenceError(f"Gauss-Seidel did not reach {tol:g} in {max_iters} sweeps", res)
        _gs_sweep(R, K)
        it += 1
        res = _residual_max(R, K) / scale
        if history is not None:
            history.append(res)
    R = symmetrize(R)
    return field_from_R(N, alpha, R, R_residual(R, K), "fixed-point", it)


def kernel_matrix(N):
    """Sparse ``I - P`` over even interior pairs, plus the pair -> row index map."""
    mask = even_mask(N)
    index = -np.ones((N + 2, N + 2), dtype=np.int64)
    ii, jj = np.nonzero(mask)
    n = len(ii)
    index[ii, jj] = np.arange(n)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
    diag = ii == jj
    for di, dj in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        tgt = index[ii + di, jj + dj]
        if di == dj:
            p = np.where(diag, 1.0 / 3.0, 0.25)
        else:
            p = np.where(diag, 1.0 / 6.0, 0.25)
        keep = tgt >= 0
        rows.append(np.nonzero(keep)[0])
        cols.append(tgt[keep])
        vals.append(-p[keep])
    A = sparse.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return A, index, (ii, jj)


def solve_R_direct(N, alpha=0.0) -> MomentField:
    """Sparse LU solve of the same system."""
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    if N > MAX_DIRECT_N:
        raise SizeError(f"direct solver limited to N <= {MAX_DIRECT_N}; use multigrid")
    K = source_K(N, alpha)
    A, _, (ii, jj) = kernel_matrix(N)
    b = np.where(ii == jj, K[np.minimum(ii, N) - 1], 0.0)
    x = spla.spsolve(A, b)
    R = np.zeros((N + 2, N + 2))
    R[ii, jj] = x
    R = symmetrize(R)
    return field_from_R(N, alpha, R, R_residual(R, K), "direct", 1)


def covariance_residual(field: MomentField) -> float:
    """Max residual of the covariance equations evaluated directly on ``sigma``.

    Rows: diagonal, ``|i-j| = 2`` (dedicated form), ``|i-j| > 2`` (plain
    average) and the zero wall rows, which hold by construction of the padded
    array.  Normalised by ``max(1, max w**2)``.
    """
    N, a = field.N, field.alpha
    s = np.zeros((N + 2, N + 2))
    s[1:-1, 1:-1] = field.sigma
    w2 = np.zeros(N + 2)
    w2[1:-1] = field.w**2
    worst = 0.0

    d = np.arange(1, N + 1)
    rhs = a + (s[d + 1, d + 1] + s[d - 1, d - 1]) / 3.0 + (s[d - 1, d + 1] + s[d + 1, d - 1]) / 4.0
    rhs += (w2[d + 1] + w2[d - 1]) / 12.0
    worst = max(worst, np.abs(s[d, d] - rhs).max())

    if N >= 3:
        lo = np.arange(1, N - 1)
        hi, m = lo + 2, lo + 1
        rhs = 0.25 * (s[lo + 1, hi + 1] + s[lo - 1, hi - 1] + s[lo - 1, hi + 1]) + s[m, m] / 6.0 - w2[m] / 12.0
        worst = max(worst, np.abs(s[lo, hi] - rhs).max(), np.abs(s[hi, lo] - rhs).max())

    i, j = np.nonzero(even_mask(N))
    far = np.abs(i - j) > 2
    i, j = i[far], j[far]
    if len(i):
        rhs = 0.25 * (s[i + 1, j + 1] + s[i - 1, j - 1] + s[i - 1, j + 1] + s[i + 1, j - 1])
        worst = max(worst, np.abs(s[i, j] - rhs).max())
    return float(worst / max(1.0, w2.max()))


def scaling_ratios(field: MomentField):
    """``(max_{i!=j} |sigma| / N**3, max_i |sigma(i,i) - w(i)**2/2| / N**3)``."""
    N = field.N
    off = np.abs(field.sigma.copy())
    np.fill_diagonal(off, 0.0)
    dev = np.abs(np.diag(field.sigma) - field.w**2 / 2.0)
    return float(off.max()) / N**3, float(dev.max()) / N**3


def field_rows(field: MomentField, upper_only=True):
    """Yield ``(N, alpha, i, j, sigma, R)`` for stored even pairs."""
    for i in range(1, field.N + 1):
        for j in range(i if upper_only else 1, field.N + 1):
            if (i + j) % 2 == 0:
                yield field.N, field.alpha, i, j, field.sigma[i - 1, j - 1], field.R[i, j]
