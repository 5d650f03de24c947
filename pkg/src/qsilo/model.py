"""Finite silo q-model: configuration, noise and the one-layer update.

Site ``i`` of layer ``t`` carries ``w(i)``.  Going down one layer, grain ``i``
hands the fraction ``u(i)`` of its load to site ``i-1`` and ``1-u(i)`` to
site ``i+1``, and every site receives a fresh grain weight ``v(i)``.  Sites
``0`` and ``N+1`` are walls: they read as zero and anything sent to them is
lost.

Noise consumption is fixed.  Each layer takes ``2N`` consecutive uniforms
from the stream: the first ``N`` are the splits ``u(1..N)``, the next ``N``
are mapped through the inverse CDF of the grain-weight law to give
``v(1..N)``.  The constant law still consumes its ``N`` uniforms, so streams
stay aligned across weight laws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigurationError

WEIGHT_DISTS = ("const", "exp", "uniform", "gamma")


def parse_weight_dist(tag):
    """Split a tag such as ``"gamma:4"`` into ``("gamma", 4.0)``."""
    name, _, arg = str(tag).partition(":")
    name = name.strip().lower()
    if name not in WEIGHT_DISTS:
        raise ConfigurationError(f"unknown weight distribution {tag!r}")
    if name == "gamma":
        try:
            shape = float(arg)
        except ValueError:
            raise ConfigurationError("gamma weights need a shape, e.g. gamma:4") from None
        if not shape > 0:
            raise ConfigurationError("gamma shape must be positive")
        return name, shape
    if arg:
        raise ConfigurationError(f"{name} weights take no parameter")
    return name, None


def weight_variance(tag) -> float:
    """Variance of the grain weight law (all laws have mean 1)."""
    name, shape = parse_weight_dist(tag)
    if name == "gamma":
        return 1.0 / shape
    return {"const": 0.0, "exp": 1.0, "uniform": 1.0 / 3.0}[name]


@dataclass(frozen=True)
class SiloConfig:
    N: int
    weight_dist: str = "exp"
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"silo width must be a positive integer, got {self.N!r}")
        parse_weight_dist(self.weight_dist)
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")

    @property
    def alpha(self) -> float:
        return weight_variance(self.weight_dist)


@dataclass(frozen=True)
class SiloState:
    t: int
    w: np.ndarray

    @property
    def N(self) -> int:
        return len(self.w)


@dataclass(frozen=True)
class NoiseDraw:
    u: np.ndarray
    v: np.ndarray


def mean_profile(N: int) -> np.ndarray:
    """Stationary mean load ``i(N+1-i)`` for ``i = 1..N``."""
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    i = np.arange(1, N + 1, dtype=float)
    return i * (N + 1 - i)


def profile_state(N: int) -> SiloState:
    return SiloState(0, mean_profile(N))


def weights_from_uniforms(tag, x: np.ndarray) -> np.ndarray:
    """Map uniforms on [0, 1) to grain weights with mean 1."""
    name, shape = parse_weight_dist(tag)
    if name == "const":
        return np.ones_like(x)
    if name == "exp":
        return -np.log1p(-x)
    if name == "uniform":
        return 2.0 * x
    return special.gammaincinv(shape, x) / shape


def sample_noise(cfg: SiloConfig, rng: np.random.Generator) -> NoiseDraw:
    """Draw one layer of noise: ``N`` splits then ``N`` grain weights."""
    x = rng.random(2 * cfg.N)
    return NoiseDraw(x[: cfg.N], weights_from_uniforms(cfg.weight_dist, x[cfg.N:]))


def sample_noise_block(cfg: SiloConfig, rng: np.random.Generator, layers: int):
    """Noise for ``layers`` consecutive layers as ``(u, v)``, each ``(layers, N)``.

    Consumes the stream exactly as ``layers`` calls of :func:`sample_noise`.
    """
    x = rng.random((layers, 2, cfg.N))
    return x[:, 0, :], weights_from_uniforms(cfg.weight_dist, x[:, 1, :])


def step(state: SiloState, noise: NoiseDraw) -> SiloState:
    """Advance one layer."""
    w = np.asarray(state.w, dtype=float)
    u = np.asarray(noise.u, dtype=float)
    v = np.asarray(noise.v, dtype=float)
    n = len(w)
    if len(u) != n or len(v) != n:
        raise ConfigurationError(f"noise length ({len(u)}, {len(v)}) does not match state length {n}")
    left = w * u
    new = v.copy()
    new[:-1] += left[1:]
    new[1:] += (w - left)[:-1]
    return SiloState(state.t + 1, new)


def lost_to_walls(w: np.ndarray, u: np.ndarray) -> float:
    """Load handed to the two walls during one update."""
    return w[0] * u[0] + w[-1] * (1.0 - u[-1])
