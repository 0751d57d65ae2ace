"""Finite-sample experiments: censored datasets, flat-prior MAP, outcome histories, and the urn model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import log_ndtr

from . import gauss
from .inference import InferenceError, PseudoTrueEstimate
from .sequential import PosteriorGrid
from .stage_game import TrueModel


class MonteCarloError(ValueError):
    pass


def _generator(seed: int, rep: int = 0) -> np.random.Generator:
    # counter-based stream keyed by (seed, rep)
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(rep)))


def _draw_pairs(true_model: TrueModel, z1, z2):
    x1 = true_model.mu1_true + true_model.sd * z1
    x2 = true_model.mu2_true - true_model.gamma_true * (x1 - true_model.mu1_true) + true_model.sd * z2
    return x1, x2


@dataclass
class SampledDataset:
    x1: np.ndarray
    x2: np.ndarray  # nan where censored
    cutoff: float
    seed: int

    @property
    def histories(self):
        return [(a, None if math.isnan(b) else b) for a, b in zip(self.x1.tolist(), self.x2.tolist())]

    @property
    def n_uncensored(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.x2)))


def sample_histories(true_model: TrueModel, c: float, N: int, seed: int) -> SampledDataset:
    """N draws from the truth; x2 is kept iff x1 <= c."""
    if N < 1:
        raise MonteCarloError("N must be >= 1")
    z = _generator(seed).standard_normal((2, N))
    x1, x2 = _draw_pairs(true_model, z[0], z[1])
    x2 = np.where(x1 <= c, x2, np.nan)
    return SampledDataset(x1, x2, float(c), int(seed))


def map_estimate(dataset: SampledDataset, gamma: float, unknowns: str = "means") -> PseudoTrueEstimate:
    """Flat-prior posterior mode, in closed form."""
    if unknowns not in ("means", "means_and_vars"):
        raise MonteCarloError(f"unknowns must be 'means' or 'means_and_vars', got {unknowns!r}")
    x1 = dataset.x1
    keep = ~np.isnan(dataset.x2)
    if not keep.any():
        raise InferenceError("no uncensored histories; the second-period mean is not identified")
    m1 = float(x1.mean())
    adj = dataset.x2[keep] + gamma * (x1[keep] - m1)
    m2 = float(adj.mean())
    if unknowns == "means":
        return PseudoTrueEstimate(m1, m2)
    v1 = float(np.mean((x1 - m1) ** 2))
    v2 = float(np.mean((adj - m2) ** 2))
    return PseudoTrueEstimate(m1, m2, v1, v2)


def mc_pessimism_experiment(
    N: int, reps: int, true_model: TrueModel, c: float, gamma: float, seed: int, chunk: int = 2000
) -> Tuple[float, float]:
    """Fractions of replications with mu2_hat < mu2_true and var2_hat > sd^2.

    Each replication has its own stream keyed by (seed, rep); the estimators
    are evaluated in vectorised chunks.
    """
    if reps < 1 or N < 1:
        raise MonteCarloError("N and reps must be >= 1")
    below = above = 0
    for start in range(0, reps, chunk):
        k = min(chunk, reps - start)
        z = np.empty((k, 2, N))
        for r in range(k):
            z[r] = _generator(seed, start + r).standard_normal((2, N))
        x1, x2 = _draw_pairs(true_model, z[:, 0], z[:, 1])
        keep = x1 <= c
        n2 = keep.sum(axis=1)
        m1 = x1.mean(axis=1, keepdims=True)
        adj = np.where(keep, x2 + gamma * (x1 - m1), 0.0)
        ok = n2 > 0
        m2 = adj.sum(axis=1) / np.maximum(n2, 1)
        v2 = np.where(keep, (adj - m2[:, None]) ** 2, 0.0).sum(axis=1) / np.maximum(n2, 1)
        # replications without second-period data count as neither
        below += int(np.count_nonzero(ok & (m2 < true_model.mu2_true)))
        above += int(np.count_nonzero(ok & (v2 > true_model.sd**2)))
    return below / reps, above / reps


# --------------------------------------------------------------------------
# outcome histories: x1 is seen on stopping, x2 on continuing


def outcome_loglik(x2, mu2, mu1: float, sd: float, gamma: float, c: float):
    """log of the integral over x1 <= c of phi(x1; mu1, sd^2) phi(x2; mu2 - gamma (x1 - mu1), sd^2).

    Closed form: X2 ~ N(mu2, sd^2 (1 + gamma^2)) and X1 - mu1 | x2 is Gaussian
    with mean -gamma a / (1 + gamma^2) and variance sd^2 / (1 + gamma^2).
    """
    a = np.asarray(x2, float) - mu2
    k = 1.0 + gamma * gamma
    s2 = sd * math.sqrt(k)
    lp = -0.5 * (a / s2) ** 2 - gauss.LOG_SQRT_2PI - math.log(s2)
    z = (c - mu1 + gamma * a / k) * math.sqrt(k) / sd
    return lp + log_ndtr(z)


def outcome_loglik_quadrature(x2: float, mu2: float, mu1: float, sd: float, gamma: float, c: float, nodes: int = 128):
    """Same integral by Gauss-Legendre on [mu1 - 8 sd, c]; cross-check only."""
    def f(x1):
        m = mu2 - gamma * (x1 - mu1)
        return np.exp(-0.5 * ((x1 - mu1) / sd) ** 2 - 0.5 * ((x2 - m) / sd) ** 2) / (2 * math.pi * sd * sd)

    return math.log(gauss.integrate_interval(f, mu1 - 8 * sd, c, nodes))


def _concave_grid_mode(f, axis: np.ndarray) -> float:
    """Mode of a concave function sampled on an increasing grid, refined by a parabola."""
    cache = {}

    def val(i):
        if i not in cache:
            cache[i] = f(axis[i])
        return cache[i]

    lo, hi = 0, axis.size - 1
    while hi - lo > 2:
        m = (lo + hi) // 2
        if val(m) < val(m + 1):
            lo = m + 1
        else:
            hi = m + 1
    i = max(range(lo, hi + 1), key=val)
    if i == 0 or i == axis.size - 1:
        return float(axis[i])
    y0, y1, y2 = val(i - 1), val(i), val(i + 1)
    h = axis[i + 1] - axis[i]
    den = y0 - 2 * y1 + y2
    if den >= 0:
        return float(axis[i])
    return float(axis[i] + 0.5 * h * (y0 - y2) / den)


def outcome_history_inference(
    true_model: TrueModel, c: float, N: int, grid: PosteriorGrid, reps: int, seed: int, gamma: float
) -> Tuple[float, np.ndarray]:
    """Average posterior mode of mu2 under a flat prior on the grid's mu2 axis.

    mu1 is known. Stopped histories do not depend on mu2 and drop out; each
    continued history contributes the closed-form outcome log-likelihood,
    which is concave in mu2, so the grid mode is found by bisection.
    Returns (mean mode, per-replication modes).
    """
    if grid.is_2d:
        raise MonteCarloError("outcome-history inference uses a mu2-only grid")
    mu1, sd = true_model.mu1_true, true_model.sd
    modes = np.empty(reps)
    for r in range(reps):
        z = _generator(seed, r).standard_normal((2, N))
        x1, x2 = _draw_pairs(true_model, z[0], z[1])
        seen = x2[x1 < c]
        if seen.size == 0:
            raise InferenceError("no continued histories in a replication; mu2 is not identified")
        prior = grid.log_weights
        f_idx = lambda m: float(np.sum(outcome_loglik(seen, m, mu1, sd, gamma, c)))
        if np.all(prior == prior[0]):
            modes[r] = _concave_grid_mode(f_idx, grid.axis2)
        else:
            post = np.array([f_idx(m) for m in grid.axis2]) + prior
            modes[r] = float(grid.axis2[int(np.argmax(post))])
    return float(modes.mean()), modes


# --------------------------------------------------------------------------
# urn model

SIGNALS = ("aa", "ab", "ba", "bb", "b_")
THETAS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))


@dataclass(frozen=True)
class UrnSpec:
    N: int = 4
    censor_on_first_b: bool = True

    def __post_init__(self):
        if self.N < 4 or self.N % 4:
            raise MonteCarloError("urn size N must be a positive multiple of 4")


def _urn_row(theta: Fraction, N: int) -> Dict[str, Fraction]:
    a = theta * N
    b = N - a
    return {
        "aa": Fraction(a, N) * Fraction(a - 1, N - 1),
        "ab": Fraction(a, N) * Fraction(b, N - 1),
        "ba": Fraction(b, N) * Fraction(a, N - 1),
        "bb": Fraction(b, N) * Fraction(b - 1, N - 1),
        "b_": Fraction(b, N),
    }


def _q_star(kappa: Fraction) -> Fraction:
    # P(b_) = 2 P(aa) at the interior optimum; capped at kappa
    return min(Fraction(1, 9) + Fraction(7, 18) * kappa, kappa)


def urn_mixture_probs(q, kappa):
    """4-ball urn, share q of theta=3/4, kappa - q of theta=1/4, 1 - kappa of theta=1/2."""
    aa = q / 2 + (1 - kappa) / 6
    ab = kappa / 4 + (1 - kappa) / 3
    b_ = Fraction(1, 2) + kappa / 4 - q / 2
    return aa, ab, b_


def urn_mixture_loglik(q, kappa) -> float:
    aa, ab, b_ = urn_mixture_probs(q, kappa)
    if aa <= 0 or b_ <= 0:
        return -math.inf
    return 0.25 * math.log(aa) + 0.25 * math.log(ab) + 0.5 * math.log(b_)


def freddy_urn(spec: UrnSpec, kappa: Optional[float] = None):
    """Exact signal likelihoods, expected log-likelihoods under the 25/25/50 objective mix, and q_a*.

    Returns (table, loglik_by_theta, q_a_star); q_a_star is None unless kappa is given.
    """
    table = {th: _urn_row(th, spec.N) for th in THETAS}
    for th, row in table.items():
        total = row["aa"] + row["ab"] + row["ba"] + row["bb"]
        assert total == 1 and row["b_"] == row["ba"] + row["bb"]
    ll = {}
    for th, row in table.items():
        terms = [(Fraction(1, 4), row["aa"]), (Fraction(1, 4), row["ab"]), (Fraction(1, 2), row["b_"])]
        ll[th] = -math.inf if any(p == 0 for _, p in terms) else sum(float(w) * math.log(p) for w, p in terms)
    q = None
    if kappa is not None:
        if spec.N != 4:
            raise MonteCarloError("q_a* is only derived for the 4-ball urn")
        k = Fraction(kappa).limit_denominator(10**12) if not isinstance(kappa, Fraction) else kappa
        if not 0 < k <= 1:
            raise MonteCarloError("kappa must lie in (0, 1]")
        q = _q_star(k)
    return table, ll, q
