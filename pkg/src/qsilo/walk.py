"""Random-walk representation of ``R`` and the diamond-walk bound.

``R(i, j)`` equals the expected ``K``-weighted number of diagonal visits of
the absorbing walk with kernel ``P`` started at ``(i, j)``.  The diamond walk
replaces absorption at the box walls by periodic identification along two
sides, so that the coordinate difference ``z = i - j`` is itself a Markov
chain (lazy steps of size 2, absorbed at ``|z| = N + 1``).  Its diagonal
visit count bounds the original one, which gives the ``3/2 (N+1) K`` bounds.

Walkers are simulated in vectorised batches; a single uniform per walker
and step picks the move.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .moments import source_K

# Move tables indexed by floor(4 x) off the diagonal and by the diagonal
# thresholds below; (di, dj).
_OFF_MOVES = np.array([(1, 1), (-1, -1), (1, -1), (-1, 1)])
_DIAG_THRESHOLDS = np.array([1 / 3, 2 / 3, 5 / 6])


@dataclass(frozen=True)
class DiamondWalkState:
    pos: tuple
    absorbed: bool


@dataclass(frozen=True)
class WalkEstimate:
    i: int
    j: int
    estimate: float
    stderr: float
    n_samples: int
    truncated_fraction: float

    def row(self):
        return self.i, self.j, self.estimate, self.stderr, self.n_samples, self.truncated_fraction


def default_max_steps(N: int) -> int:
    return 10_000 * (N + 1) ** 2


def _moves(x, on_diag):
    k = np.where(on_diag, np.searchsorted(_DIAG_THRESHOLDS, x, side="right"), np.minimum((4 * x).astype(int), 3))
    m = _OFF_MOVES[k]
    return m[:, 0], m[:, 1]


def sample_T(start, N, K, n_samples, rng, max_steps=None):
    """Samples of ``T = sum_n K(l) 1{X_n = (l, l)}`` for the absorbing kernel.

    Returns ``(samples, n_truncated)``; truncated walkers keep the partial sum.
    """
    K = np.asarray(K, dtype=float)
    if len(K) != N:
        raise ConfigurationError("K must have length N")
    max_steps = default_max_steps(N) if max_steps is None else max_steps
    i = np.full(n_samples, int(start[0]))
    j = np.full(n_samples, int(start[1]))
    total = np.zeros(n_samples)
    idx = np.arange(n_samples)
    steps = 0
    while True:
        inside = (i >= 1) & (i <= N) & (j >= 1) & (j <= N)
        idx, i, j = idx[inside], i[inside], j[inside]
        if len(idx) == 0 or steps >= max_steps:
            break
        diag = i == j
        np.add.at(total, idx[diag], K[i[diag] - 1])
        di, dj = _moves(rng.random(len(idx)), diag)
        i, j = i + di, j + dj
        steps += 1
    return total, len(idx)


def simulate_T(start, N, K, rng, max_steps=None) -> float:
    """A single sample of ``T`` (see :func:`sample_T`)."""
    return float(sample_T(start, N, K, 1, rng, max_steps)[0][0])


def estimate_R(start, N, alpha, n_samples, rng, max_steps=None) -> WalkEstimate:
    t, trunc = sample_T(start, N, source_K(N, alpha), n_samples, rng, max_steps)
    return WalkEstimate(
        int(start[0]), int(start[1]), float(t.mean()), float(t.std(ddof=1) / np.sqrt(n_samples)),
        n_samples, trunc / n_samples,
    )


def _check_diamond(N, start):
    if N < 1 or N % 2 == 0:
        raise ConfigurationError(f"the diamond walk needs odd N (absorption at |i-j| = N+1), got N = {N}")
    i, j = int(start[0]), int(start[1])
    if (i + j) % 2 or not 2 <= i + j <= 2 * N or abs(i - j) > N + 1:
        raise ConfigurationError(f"start {start} is not in the diamond for N = {N}")
    return (i + j) // 2, i - j


def diamond_step(state: DiamondWalkState, N: int, x: float) -> DiamondWalkState:
    """One transition of the diamond walk driven by the uniform ``x``."""
    a, z = _check_diamond(N, state.pos)
    if state.absorbed or abs(z) == N + 1:
        return DiamondWalkState(state.pos, True)
    da, dz = _diamond_moves(np.array([x]), np.array([z == 0]))
    a = (a + int(da[0]) - 1) % N + 1
    z += int(dz[0])
    return DiamondWalkState((a + z // 2, a - z // 2), abs(z) == N + 1)


def _diamond_moves(x, on_diag):
    # (di, dj) = (1, 1) -> a+1; (-1, -1) -> a-1; (1, -1) -> z+2; (-1, 1) -> z-2
    di, dj = _moves(x, on_diag)
    return (di + dj) // 2, di - dj


def run_diamond(start, N, n_walkers, rng, max_steps=None, record_transitions=False):
    """Run diamond walkers to absorption.

    Returns a dict with per-walker ``visits`` (steps spent on the diagonal),
    ``excursions`` (separate diagonal visits), the list of all diagonal
    ``sojourns``, ``truncated`` count and, if requested, ``transitions`` as
    an array of ``(z, z')`` pairs.
    """
    a0, z0 = _check_diamond(N, start)
    max_steps = default_max_steps(N) if max_steps is None else max_steps
    a = np.full(n_walkers, a0)
    z = np.full(n_walkers, z0)
    idx = np.arange(n_walkers)
    visits = np.zeros(n_walkers, dtype=np.int64)
    excursions = np.zeros(n_walkers, dtype=np.int64)
    run = np.zeros(n_walkers, dtype=np.int64)
    sojourns, trans = [], []
    steps = 0
    while True:
        live = np.abs(z) != N + 1
        idx, a, z, run_live = idx[live], a[live], z[live], run[idx[live]]
        if len(idx) == 0 or steps >= max_steps:
            break
        diag = z == 0
        visits[idx[diag]] += 1
        excursions[idx[diag & (run_live == 0)]] += 1
        run[idx] = np.where(diag, run_live + 1, 0)
        da, dz = _diamond_moves(rng.random(len(idx)), diag)
        znew = z + dz
        ended = diag & (znew != 0)
        sojourns.append(run[idx[ended]].copy())
        if record_transitions:
            trans.append(np.column_stack([z, znew]))
        a = (a + da - 1) % N + 1
        z = znew
        steps += 1
    out = {
        "visits": visits,
        "excursions": excursions,
        "sojourns": np.concatenate(sojourns) if sojourns else np.zeros(0, dtype=np.int64),
        "truncated": len(idx),
    }
    if record_transitions:
        out["transitions"] = np.concatenate(trans) if trans else np.zeros((0, 2), dtype=np.int64)
    return out


def sample_T_diamond(start, N, K_bar, n_samples, rng, max_steps=None):
    """Samples of the bound variable ``K_bar * (diagonal visits of the diamond walk)``."""
    res = run_diamond(start, N, n_samples, rng, max_steps)
    return K_bar * res["visits"].astype(float), res["truncated"]


def simulate_T_diamond(start, N, K_bar, rng, max_steps=None) -> float:
    return float(sample_T_diamond(start, N, K_bar, 1, rng, max_steps)[0][0])


def difference_kernel(N: int):
    """Transition probabilities ``p0(z, z')`` of the coordinate difference, as a dict."""
    p = {}
    for z in range(-(N + 1), N + 2, 2):
        if abs(z) == N + 1:
            p[z] = {z: 1.0}
        elif z == 0:
            p[z] = {0: 2 / 3, 2: 1 / 6, -2: 1 / 6}
        else:
            p[z] = {z: 0.5, z + 2: 0.25, z - 2: 0.25}
    return p


def expected_diagonal_visits(N: int) -> float:
    """``E S * E M = (N+1)/2 * 3`` for a start on the diagonal."""
    return 1.5 * (N + 1)


def expected_T_bound(N, alpha=0.0):
    """``(3/2 (N+1) min K, 3/2 (N+1) max K)``."""
    K = source_K(N, alpha)
    return 1.5 * (N + 1) * float(K.min()), 1.5 * (N + 1) * float(K.max())


def R_bracket(N, alpha=0.0):
    """Interval guaranteed to contain every ``R(i, j)``.

    Equals :func:`expected_T_bound` once ``min K < 0 < max K``; for small
    ``N`` where all ``K`` share a sign the near side is replaced by 0, since
    the diamond walk only bounds the number of diagonal visits from above.
    """
    lo, hi = expected_T_bound(N, alpha)
    return min(lo, 0.0), max(hi, 0.0)
