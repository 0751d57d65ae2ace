"""Scalar Gaussian primitives: density, CDF, truncated moments, quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# below this z the Mills ratio switches to the continued fraction
_CF_SWITCH = -8.0
_CF_TERMS = 200
MAX_HERMITE_NODES = 256


class GaussError(ValueError):
    """Raised on invalid Gaussian inputs or failed quadrature evaluations."""


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    sd: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)) or self.sd <= 0:
            raise GaussError(f"need finite mean and sd > 0, got ({self.mean}, {self.sd})")


STANDARD = GaussianSpec(0.0, 1.0)


def std_pdf_cdf(z: float) -> Tuple[float, float]:
    """Standard normal density and distribution function at z."""
    z = float(z)
    if not math.isfinite(z):
        raise GaussError(f"non-finite argument {z!r}")
    return math.exp(-0.5 * z * z - LOG_SQRT_2PI), float(special.ndtr(z))


def pdf(x: float, mean: float = 0.0, sd: float = 1.0) -> float:
    z = (x - mean) / sd
    return math.exp(-0.5 * z * z - LOG_SQRT_2PI) / sd


def cdf(x: float, mean: float = 0.0, sd: float = 1.0) -> float:
    """Distribution function; accepts +-inf for x."""
    if x == math.inf:
        return 1.0
    if x == -math.inf:
        return 0.0
    return float(special.ndtr((x - mean) / sd))


def _tail_cf(x: float, start: int) -> float:
    # 1/(x + start/(x + (start+1)/(x + ...))), evaluated bottom-up
    acc = x
    for k in range(_CF_TERMS + start - 1, start - 1, -1):
        acc = x + k / acc
    return 1.0 / acc


def _mills_parts(z: float) -> Tuple[float, float]:
    """Return (lam, 1 - z*lam - lam**2) with lam = phi(z)/Phi(z).

    For very negative z both quantities suffer cancellation, so they come from
    the continued fraction of the Gaussian tail instead.
    """
    if z < _CF_SWITCH:
        x = -z
        lam = 1.0 / _tail_cf(x, 1)
        # lam + z = lam - x equals 1/(x + 2/(x + 3/...))
        shift = _tail_cf(x, 2)
        return lam, 1.0 - lam * shift
    log_lam = -0.5 * z * z - LOG_SQRT_2PI - float(special.log_ndtr(z))
    lam = math.exp(log_lam)
    return lam, 1.0 - z * lam - lam * lam


def mills_ratio(z: float) -> float:
    """Inverse Mills ratio phi(z)/Phi(z); zero at z = +inf."""
    if z == math.inf:
        return 0.0
    if not math.isfinite(z):
        raise GaussError(f"mills ratio undefined at {z!r}")
    return _mills_parts(float(z))[0]


def truncated_lower_moments(g: GaussianSpec, c: float) -> Tuple[float, float]:
    """Mean and variance of X given X <= c, X ~ N(g.mean, g.sd^2)."""
    if c == math.inf:
        return g.mean, g.sd * g.sd
    if not math.isfinite(c):
        raise GaussError(f"lower truncation point must be finite or +inf, got {c!r}")
    lam, vfac = _mills_parts((c - g.mean) / g.sd)
    return g.mean - g.sd * lam, g.sd * g.sd * vfac


def truncated_upper_moments(g: GaussianSpec, c: float) -> Tuple[float, float]:
    """Mean and variance of X given X >= c (reflection of the lower case)."""
    if c == -math.inf:
        return g.mean, g.sd * g.sd
    if not math.isfinite(c):
        raise GaussError(f"upper truncation point must be finite or -inf, got {c!r}")
    m, v = truncated_lower_moments(GaussianSpec(-g.mean, g.sd), -c)
    return -m, v


def lower_mean(mean: float, sd: float, c: float) -> float:
    return truncated_lower_moments(GaussianSpec(mean, sd), c)[0]


def expected_max(k: float, m: float, s: float) -> float:
    """E[max(k, X)] for X ~ N(m, s^2)."""
    d = (k - m) / s
    return k * float(special.ndtr(d)) + m * float(special.ndtr(-d)) + s * pdf(d)


@lru_cache(maxsize=32)
def hermite_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes with weights normalised to sum to one."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=32)
def legendre_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _check_nodes(nodes: int) -> None:
    # numpy's Hermite weights overflow somewhere past 300 nodes
    if not 8 <= nodes <= MAX_HERMITE_NODES:
        raise GaussError(f"node count must lie in [8, {MAX_HERMITE_NODES}], got {nodes}")


def gauss_expectation(f: Callable[[float], float], g: GaussianSpec, nodes: int = 64) -> float:
    """Quadrature estimate of E[f(X)], X ~ g; exact for polynomials below degree 2*nodes."""
    _check_nodes(nodes)
    x, w = hermite_rule(int(nodes))
    total = 0.0
    for xi, wi in zip(x, w):
        a = g.mean + g.sd * float(xi)
        v = float(f(a))
        if not math.isfinite(v):
            raise GaussError(f"integrand not finite at abscissa {a!r}")
        total += wi * v
    return total


def gauss_expectation_vec(f: Callable[[np.ndarray], np.ndarray], g: GaussianSpec, nodes: int = 64) -> float:
    """Vectorised variant: f receives the whole node array."""
    _check_nodes(nodes)
    x, w = hermite_rule(int(nodes))
    a = g.mean + g.sd * x
    v = np.asarray(f(a), dtype=float)
    bad = ~np.isfinite(v)
    if bad.any():
        raise GaussError(f"integrand not finite at abscissa {float(a[bad][0])!r}")
    return float(np.dot(w, v))


def integrate_interval(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, nodes: int = 128) -> float:
    """Fixed Gauss-Legendre rule on [lo, hi] for a vectorised integrand."""
    x, w = legendre_rule(int(nodes))
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return float(half * np.dot(w, f(mid + half * x)))
