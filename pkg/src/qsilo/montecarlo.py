"""Monte Carlo estimates of the stationary silo law and coupling experiments."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, InsufficientDataError
from .model import SiloConfig, SiloState, mean_profile, sample_noise_block
from .rng import stream
from .stats import batch_means, ks_gamma2, lag1_autocorr

log = logging.getLogger(__name__)

BLOCK_UNIFORMS = 1 << 22  # uniforms drawn per noise block
MAX_LAG1 = 0.2
MIN_GAMMA_SAMPLES = 100


@dataclass(frozen=True)
class McPlan:
    cfg: SiloConfig
    samples: int
    burn_in: int | None = None
    thinning: int | None = None
    replicas: int = 1
    macro_r: float = 0.5
    window: int | None = 2

    def __post_init__(self):
        N = self.cfg.N
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", 20 * N * N)
        if self.thinning is None:
            object.__setattr__(self, "thinning", max(1, N // 2))
        if self.burn_in < 1 or self.samples < 1 or self.thinning < 1 or self.replicas < 1:
            raise ConfigurationError("burn_in, samples, thinning and replicas must be >= 1")
        if not 0.0 < self.macro_r < 1.0:
            raise ConfigurationError(f"macro_r must lie in (0, 1), got {self.macro_r}")
        if self.window is not None and self.window < 0:
            raise ConfigurationError("window must be nonnegative")

    @property
    def centre(self) -> int:
        """The macroscopic site ``[r N]``, kept inside ``1..N``."""
        return min(max(int(math.floor(self.macro_r * self.cfg.N)), 1), self.cfg.N)

    @property
    def sites(self) -> np.ndarray:
        N = self.cfg.N
        if self.window is None:
            return np.arange(1, N + 1)
        c = self.centre
        return np.arange(max(1, c - self.window), min(N, c + self.window) + 1)


@dataclass
class McSamples:
    plan: McPlan
    sites: np.ndarray
    data: np.ndarray  # (replicas, samples, len(sites))
    mass_error: float = 0.0

    def site(self, i) -> np.ndarray:
        """``(replicas, samples)`` series for 1-based site ``i``."""
        k = np.searchsorted(self.sites, i)
        if k >= len(self.sites) or self.sites[k] != i:
            raise KeyError(f"site {i} not in the sampled window")
        return self.data[:, :, k]


@numba.njit(cache=True)
def _advance(w, u, v, thin, phase, keep, out, pos):
    """Run the layers in ``(u, v)``; store ``w[keep]`` every ``thin`` layers.

    Returns the updated ``(phase, pos, worst relative mass-balance error)``.
    """
    n = w.shape[0]
    new = np.empty(n)
    worst = 0.0
    for t in range(u.shape[0]):
        mass_in = 0.0
        mass_out = 0.0
        for i in range(n):
            x = v[t, i]
            if i + 1 < n:
                x += w[i + 1] * u[t, i + 1]
            if i > 0:
                x += w[i - 1] * (1.0 - u[t, i - 1])
            new[i] = x
            mass_in += v[t, i] + w[i]
            mass_out += x
        lost = w[0] * u[t, 0] + w[n - 1] * (1.0 - u[t, n - 1])
        err = abs(mass_in - lost - mass_out) / max(1.0, mass_out)
        if err > worst:
            worst = err
        w[:] = new
        phase += 1
        if phase == thin:
            phase = 0
            if pos < out.shape[0]:
                for k in range(keep.shape[0]):
                    out[pos, k] = w[keep[k]]
                pos += 1
    return phase, pos, worst


def _run_layers(cfg, rng, w, layers, thin=0, keep=None, out=None):
    """Advance ``w`` in place through ``layers`` layers drawn from ``rng``."""
    keep = np.zeros(0, dtype=np.int64) if keep is None else keep
    out = np.zeros((0, len(keep))) if out is None else out
    block = max(1, BLOCK_UNIFORMS // (2 * cfg.N))
    phase, pos, worst = 0, 0, 0.0
    done = 0
    while done < layers:
        m = min(block, layers - done)
        u, v = sample_noise_block(cfg, rng, m)
        phase, pos, err = _advance(w, u, v, thin if thin else m + 1, phase, keep, out, pos)
        worst = max(worst, err)
        done += m
    return worst


def run_replica(plan: McPlan, replica: int):
    """One replica: profile start, burn-in, then ``samples`` thinned layers."""
    cfg = plan.cfg
    rng = stream(cfg.seed, "silo", replica)
    w = mean_profile(cfg.N)
    keep = plan.sites - 1
    out = np.empty((plan.samples, len(keep)))
    e1 = _run_layers(cfg, rng, w, plan.burn_in)
    e2 = _run_layers(cfg, rng, w, plan.samples * plan.thinning, plan.thinning, keep, out)
    return out, max(e1, e2)


def run_stationary(plan: McPlan) -> McSamples:
    """Sample the stationary law.  Replicas own independent streams, so the
    result does not depend on the order they are run in."""
    runs = []
    worst = 0.0
    for rep in range(plan.replicas):
        out, err = run_replica(plan, rep)
        runs.append(out)
        worst = max(worst, err)
        log.debug("replica %d done", rep)
    return McSamples(plan, plan.sites, np.stack(runs), worst)


@dataclass(frozen=True)
class SiteSummary:
    i: int
    mean: float
    var: float
    stderr: float

    def row(self):
        return self.i, self.mean, self.var, self.stderr


def site_summaries(mc: McSamples):
    """Per-site mean, variance and batch-means standard error of the mean."""
    out = []
    for i in mc.sites:
        x = mc.site(i)
        m, se = batch_means(x)
        out.append(SiteSummary(int(i), m, float(x.var()), se))
    return out


def covariance_estimate(mc: McSamples, i: int, j: int):
    """Sample covariance of sites ``i`` and ``j`` with a batch-means standard error."""
    x, y = mc.site(i), mc.site(j)
    prod = (x - x.mean()) * (y - y.mean())
    return batch_means(prod)


def scaled_site(mc: McSamples, i=None, scale="N+1") -> np.ndarray:
    """Site series divided by ``(N+1)**2`` (default) or ``N**2``."""
    N = mc.plan.cfg.N
    i = mc.plan.centre if i is None else i
    if scale not in ("N", "N+1"):
        raise ConfigurationError("scale must be 'N' or 'N+1'")
    denom = float(N + 1) ** 2 if scale == "N+1" else float(N) ** 2
    return mc.site(i) / denom


@dataclass(frozen=True)
class GammaReport:
    N: int
    r: float
    ks_stat: float
    p: float
    mean: float
    var: float
    target_mean: float
    target_var: float
    lag1: float
    n: int
    ess: float

    @property
    def beta(self) -> float:
        return 2.0 / (self.r * (1.0 - self.r))

    def passed(self, p_min=0.01, mean_tol=0.02, var_tol=0.10) -> bool:
        return (
            not math.isnan(self.p)
            and self.p > p_min
            and abs(self.mean / self.target_mean - 1) <= mean_tol
            and abs(self.var / self.target_var - 1) <= var_tol
        )

    def row(self):
        return self.N, self.r, self.ks_stat, self.p, self.mean, self.var


def gamma_fit_test(samples, r: float, N: int) -> GammaReport:
    """Compare scaled weights with Gamma(2, rate 2/(r(1-r))).

    ``samples`` is ``(replicas, time)`` or 1-D.  The p-value is withheld
    (NaN) when the lag-1 autocorrelation exceeds 0.2.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n = x.size
    if n < MIN_GAMMA_SAMPLES:
        raise InsufficientDataError(f"gamma test needs at least {MIN_GAMMA_SAMPLES} samples, got {n}")
    rho = r * (1.0 - r)
    lag1 = lag1_autocorr(x) if x.shape[1] > 1 else 0.0
    try:
        m, se = batch_means(x)
        ess = float(x.var() / se**2) if se > 0 else float(n)
    except InsufficientDataError:
        m, ess = float(x.mean()), float("nan")
    stat, p = ks_gamma2(x, 2.0 / rho)
    if lag1 > MAX_LAG1:
        log.warning("lag-1 autocorrelation %.3f > %.1f: p-value withheld", lag1, MAX_LAG1)
        p = float("nan")
    return GammaReport(N, r, stat, p, m, float(x.var()), rho, rho * rho / 2.0, lag1, n, ess)


@dataclass
class CoupledPair:
    x: SiloState
    y: SiloState
    d_history: list = field(default_factory=list)


class CouplingViolation(AssertionError):
    pass


@numba.njit(cache=True)
def _coupled(x, y, u, v, d_out, start, slack):
    n = x.shape[0]
    nx = np.empty(n)
    ny = np.empty(n)
    for t in range(u.shape[0]):
        for i in range(n):
            a = v[t, i]
            b = v[t, i]
            if i + 1 < n:
                a += x[i + 1] * u[t, i + 1]
                b += y[i + 1] * u[t, i + 1]
            if i > 0:
                a += x[i - 1] * (1.0 - u[t, i - 1])
                b += y[i - 1] * (1.0 - u[t, i - 1])
            nx[i] = a
            ny[i] = b
        x[:] = nx
        y[:] = ny
        s = 0.0
        for i in range(n):
            if x[i] < y[i]:
                return start + t + 1
            s += x[i] - y[i]
        d_out[start + t + 1] = s / n
        if d_out[start + t + 1] > d_out[start + t] + slack:
            return start + t + 1
    return -1


def run_coupled(cfg: SiloConfig, layers: int, x0, y0, replica: int = 0) -> CoupledPair:
    """Evolve two states with identical noise and record ``D(t) = mean(x - y)``.

    Ordering ``x >= y`` and monotone ``D`` are exact properties of the
    dynamics; any violation raises :class:`CouplingViolation`.  Ordering is
    checked exactly (rounding is monotone and both copies use the same
    operations); ``D`` may only rise by summation rounding, bounded by
    ``1e-12 * max(1, D(0))``.
    """
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float)
    if x.shape != (cfg.N,) or y.shape != (cfg.N,):
        raise ConfigurationError("initial states must have length N")
    if np.any(x < y):
        raise ConfigurationError("run_coupled needs x0 >= y0 componentwise")
    rng = stream(cfg.seed, "coupling", replica)
    d = np.empty(layers + 1)
    d[0] = (x - y).mean()
    slack = 1e-12 * max(1.0, d[0])
    block = max(1, BLOCK_UNIFORMS // (2 * cfg.N))
    done = 0
    while done < layers:
        m = min(block, layers - done)
        u, v = sample_noise_block(cfg, rng, m)
        bad = _coupled(x, y, u, v, d, done, slack)
        if bad >= 0:
            raise CouplingViolation(f"coupling broke at layer {bad}")
        done += m
    return CoupledPair(SiloState(layers, x), SiloState(layers, y), d.tolist())
