"""Infinite silo model on a ring of even length ``L``.

No grain weight is added: site ``k`` sends ``u(k) eta(k)`` to ``k+1`` and the
rest to ``k-1`` (indices mod ``L``), so total mass is conserved.  The product
of Gamma(2, rate 2/rho) marginals is invariant and reversible.

Gamma(2, rate 2/rho) variates are drawn as the sum of two inverse-CDF
exponentials of mean ``rho/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import ConfigurationError, InsufficientDataError
from .rng import stream
from .stats import TestResult, ks_exponential, ks_gamma2

P_MIN = 0.01


@dataclass(frozen=True)
class RingState:
    t: int
    eta: np.ndarray
    rho: float

    @property
    def L(self) -> int:
        return self.eta.shape[-1]


def _check_L(L):
    if L < 2 or L % 2:
        raise ConfigurationError(f"ring length must be even and >= 2, got {L}")


def sample_gamma2(rho, shape, rng) -> np.ndarray:
    """Gamma(2, rate 2/rho) as two exponentials of mean rho/2 (2 uniforms each)."""
    x = rng.random((2,) + tuple(np.atleast_1d(shape)))
    return -0.5 * rho * (np.log1p(-x[0]) + np.log1p(-x[1]))


def ism_update(eta: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One layer on the ring; works on the last axis, so batches are fine."""
    right = eta * u
    return np.roll(right, 1, axis=-1) + np.roll(eta - right, -1, axis=-1)


def ism_step(state: RingState, u) -> RingState:
    eta = np.asarray(state.eta, dtype=float)
    _check_L(eta.shape[-1])
    u = np.asarray(u, dtype=float)
    if u.shape != eta.shape:
        raise ConfigurationError("u must match the ring shape")
    return RingState(state.t + 1, ism_update(eta, u), state.rho)


def run_ring(eta0, steps, rng, check_mass=True):
    """Evolve a batch ``(replicas, L)`` for ``steps`` layers.

    Returns the final array and the worst relative mass drift seen.
    """
    eta = np.array(eta0, dtype=float)
    _check_L(eta.shape[-1])
    m0 = eta.sum(axis=-1)
    drift = 0.0
    for _ in range(steps):
        eta = ism_update(eta, rng.random(eta.shape))
        if check_mass:
            drift = max(drift, float(np.max(np.abs(eta.sum(axis=-1) - m0) / np.maximum(m0, 1e-300))))
    return eta, drift


@dataclass
class InvarianceReport:
    L: int
    rho: float
    steps: int
    n_configs: int
    mean: float
    var: float
    ks_stat: float
    p_value: float
    cov_nn: float
    cov_se: float
    cross_cov: float
    cross_se: float
    mass_drift: float

    def results(self, mean_tol=0.01, var_tol=0.05):
        return [
            TestResult("ism_mean", self.mean, abs(self.mean / self.rho - 1), abs(self.mean / self.rho - 1) <= mean_tol),
            TestResult(
                "ism_var", self.var, abs(self.var / (self.rho**2 / 2) - 1),
                abs(self.var / (self.rho**2 / 2) - 1) <= var_tol,
            ),
            TestResult("ism_ks_gamma", self.ks_stat, self.p_value, self.p_value > P_MIN),
            TestResult("ism_cov_same_parity", self.cov_nn, self.cov_se, abs(self.cov_nn) <= 3 * self.cov_se),
            TestResult("ism_cov_cross_parity", self.cross_cov, self.cross_se, abs(self.cross_cov) <= 3 * self.cross_se),
            TestResult("ism_mass", self.mass_drift, float("nan"), self.mass_drift <= 1e-9),
        ]


def _pooled_cov(eta, shift):
    a, b = eta, np.roll(eta, -shift, axis=-1)
    prod = (a - a.mean()) * (b - b.mean())
    per = prod.mean(axis=-1)  # one value per independent configuration
    return float(per.mean()), float(per.std(ddof=1) / np.sqrt(len(per)))


def gamma_invariance_test(L=256, rho=1.0, steps=1000, samples=1000, seed=0) -> InvarianceReport:
    """Start ``samples`` independent rings from the Gamma product, run ``steps``
    layers and test the final marginals against Gamma(2, rate 2/rho)."""
    _check_L(L)
    if samples < 2:
        raise InsufficientDataError("need at least two configurations")
    eta0 = sample_gamma2(rho, (samples, L), stream(seed, "ism-init", L))
    eta, drift = run_ring(eta0, steps, stream(seed, "ism-noise", L))
    ks, p = ks_gamma2(eta, 2.0 / rho)
    c2, s2 = _pooled_cov(eta, 2)
    c1, s1 = _pooled_cov(eta, 1)
    return InvarianceReport(
        L, rho, steps, samples, float(eta.mean()), float(eta.var()), ks, p, c2, s2, c1, s1, drift
    )


# Cylinder observables; each maps (..., L) -> (...,).
OBSERVABLES = {
    "site0": lambda e, rho: e[..., 0],
    "site2": lambda e, rho: e[..., 2],
    "above_rho_2": lambda e, rho: (e[..., 2] > rho).astype(float),
    "prod13": lambda e, rho: e[..., 1] * e[..., 3],
}

BUILTIN_PAIRS = (("site0", "site2"), ("site0", "above_rho_2"), ("site0", "prod13"))


@dataclass(frozen=True)
class ReversibilityReport:
    f: str
    g: str
    forward: float
    backward: float
    diff: float
    stderr: float

    @property
    def passed(self) -> bool:
        return abs(self.diff) <= 3 * self.stderr

    def result(self):
        return TestResult(f"reversibility_{self.f}_{self.g}", self.diff, self.stderr, self.passed)


def reversibility_test(L=8, rho=1.0, pairs=BUILTIN_PAIRS, n_pairs=1_000_000, seed=0, chunk=200_000):
    """Estimate ``E f(eta0) g(eta1)`` and ``E g(eta0) f(eta1)`` under the Gamma product.

    Each configuration contributes the average over all ``L`` translations of
    the observables; configurations are independent, which gives the
    standard error.
    """
    _check_L(L)
    rng_init = stream(seed, "reversibility", L, 0)
    rng_u = stream(seed, "reversibility", L, 1)
    sums = {pair: [] for pair in pairs}
    done = 0
    while done < n_pairs:
        m = min(chunk, n_pairs - done)
        eta0 = sample_gamma2(rho, (m, L), rng_init)
        eta1 = ism_update(eta0, rng_u.random((m, L)))
        shifts0 = [np.roll(eta0, -k, axis=-1) for k in range(L)]
        shifts1 = [np.roll(eta1, -k, axis=-1) for k in range(L)]
        for f, g in pairs:
            F, G = OBSERVABLES[f], OBSERVABLES[g]
            d = np.zeros(m)
            for a, b in zip(shifts0, shifts1):
                d += F(a, rho) * G(b, rho) - G(a, rho) * F(b, rho)
            fwd = np.zeros(m)
            for a, b in zip(shifts0, shifts1):
                fwd += F(a, rho) * G(b, rho)
            sums[(f, g)].append((d / L, fwd / L))
        done += m
    out = []
    for f, g in pairs:
        d = np.concatenate([x[0] for x in sums[(f, g)]])
        fwd = np.concatenate([x[1] for x in sums[(f, g)]])
        se = float(d.std(ddof=1) / np.sqrt(len(d))) if len(d) > 1 else 0.0
        out.append(ReversibilityReport(f, g, float(fwd.mean()), float((fwd - d).mean()), float(d.mean()), se))
    return out


@dataclass
class SplittingReport:
    rho: float
    n: int
    ks_left: tuple
    ks_right: tuple
    corr: float
    corr_se: float
    chi2: float
    chi2_p: float
    mean_left: float
    mean_product: float

    def results(self):
        return [
            TestResult("split_ks_left", self.ks_left[0], self.ks_left[1], self.ks_left[1] > P_MIN),
            TestResult("split_ks_right", self.ks_right[0], self.ks_right[1], self.ks_right[1] > P_MIN),
            TestResult("split_corr", self.corr, self.corr_se, abs(self.corr) <= 3 * self.corr_se),
            TestResult("split_chi2_independence", self.chi2, self.chi2_p, self.chi2_p > P_MIN),
        ]


def splitting_lemma_test(rho=2.0, n_samples=1_000_000, seed=0, bins=10) -> SplittingReport:
    """Check that ``U W`` and ``(1-U) W`` are independent exponentials of mean ``rho/2``."""
    if n_samples < 100 * bins:
        raise InsufficientDataError("too few samples for the binned independence test")
    rng = stream(seed, "splitting", bins, int(round(rho * 1e6)))
    w = sample_gamma2(rho, n_samples, rng)
    u = rng.random(n_samples)
    a, b = u * w, (1.0 - u) * w
    mean = rho / 2.0
    corr = float(np.corrcoef(a, b)[0, 1])
    edges = sps.expon(scale=mean).ppf(np.linspace(0.0, 1.0, bins + 1))
    ia = np.clip(np.searchsorted(edges, a, side="right") - 1, 0, bins - 1)
    ib = np.clip(np.searchsorted(edges, b, side="right") - 1, 0, bins - 1)
    table = np.zeros((bins, bins))
    np.add.at(table, (ia, ib), 1.0)
    chi2, p, _, _ = sps.chi2_contingency(table)
    return SplittingReport(
        rho, n_samples, ks_exponential(a, mean), ks_exponential(b, mean), corr, float(1.0 / np.sqrt(n_samples)),
        float(chi2), float(p), float(a.mean()), float((a * b).mean()),
    )
