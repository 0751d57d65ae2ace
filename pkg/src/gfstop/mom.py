"""Method-of-moments inference for non-Gaussian feasible families.

Each family is indexed by (theta1, theta2). The first moment pins theta1
through the X1 mean; the second matches the mean of the uncensored X2 draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from . import gauss
from .dynamics import GenerationTrace
from .inference import CensoringSpec
from .stage_game import BENEFIT, StageGame


class MomError(ValueError):
    pass


@dataclass(frozen=True)
class TrueMoments:
    m1: float
    m2: float


class FeasibleFamily:
    """Base class. Subclasses fill in the moment maps and supports."""

    I1: Tuple[float, float] = (-math.inf, math.inf)
    I2: Tuple[float, float] = (-math.inf, math.inf)
    positive_theta2 = False

    def marginal1_mean(self, theta1: float) -> float:
        raise NotImplementedError

    def theta1_from_mean(self, m1: float) -> float:
        raise NotImplementedError

    def prob_continue(self, theta1: float, c: float) -> float:
        raise NotImplementedError

    def conditional2_mean(self, theta1: float, theta2: float, x1: float) -> float:
        raise NotImplementedError

    def censored2_mean(self, theta1: float, theta2: float, c: float) -> float:
        raise NotImplementedError

    def _probe(self, theta1s: Sequence[float], theta2s: Sequence[float], xs: Sequence[float]) -> None:
        m = [self.marginal1_mean(t) for t in theta1s]
        if not np.all(np.diff(m) > 0):
            raise MomError(f"{type(self).__name__}: X1 mean not strictly increasing in theta1")
        for t1 in theta1s:
            grid = np.array([[self.conditional2_mean(t1, t2, x) for x in xs] for t2 in theta2s])
            if not np.all(np.diff(grid, axis=0) > 0):
                raise MomError(f"{type(self).__name__}: conditional X2 mean not increasing in theta2")
            if not np.all(np.diff(grid, axis=1) < 0):
                raise MomError(f"{type(self).__name__}: conditional X2 mean not decreasing in x1")


@dataclass(frozen=True)
class GaussianFamily(FeasibleFamily):
    sd: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        if not self.sd > 0:
            raise MomError("sd must be positive")
        if not self.gamma > 0:
            raise MomError("gamma must be positive")
        self._probe([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0])

    def marginal1_mean(self, theta1):
        return theta1

    def theta1_from_mean(self, m1):
        return m1

    def prob_continue(self, theta1, c):
        return gauss.cdf(c, theta1, self.sd)

    def conditional2_mean(self, theta1, theta2, x1):
        return theta2 - self.gamma * (x1 - theta1)

    def censored2_mean(self, theta1, theta2, c):
        e = gauss.truncated_lower_moments(gauss.GaussianSpec(theta1, self.sd), c)[0]
        return theta2 - self.gamma * (e - theta1)


@dataclass(frozen=True)
class GumbelBivariateExponential(FeasibleFamily):
    """X1 = theta1 * E1, X2 = theta2 * E2 with (E1, E2) Gumbel type-I exponential."""

    alpha: float = -0.5
    I1 = (0.0, math.inf)
    I2 = (0.0, math.inf)
    positive_theta2 = True

    def __post_init__(self):
        if not -1.0 <= self.alpha < 0.0:
            raise MomError("Gumbel alpha must lie in [-1, 0)")
        self._probe([0.5, 1.0, 2.0], [0.5, 1.0, 2.0], [0.0, 0.5, 1.5, 4.0])

    def marginal1_mean(self, theta1):
        return theta1

    def theta1_from_mean(self, m1):
        return m1

    def prob_continue(self, theta1, c):
        if c <= 0:
            return 0.0
        return -math.expm1(-c / theta1)

    def conditional2_mean(self, theta1, theta2, x1):
        a = self.alpha
        return theta2 * (1 - a / 2 - a * math.exp(-x1 / theta1))

    def censored2_mean(self, theta1, theta2, c):
        a = self.alpha
        # E[exp(-X1/theta1) | X1 <= c] = (1 + exp(-c/theta1)) / 2 for the exponential marginal
        e = 0.5 * (1 + math.exp(-c / theta1)) if c < math.inf else 0.5
        return theta2 * (1 - a / 2 - a * e)


@dataclass(frozen=True)
class BetaFamily(FeasibleFamily):
    """X1 ~ Beta(theta1, 1), X2 | x1 ~ Beta((1 - x1) theta2, 1)."""

    I1 = (0.0, 1.0)
    I2 = (0.0, 1.0)
    positive_theta2 = True

    def __post_init__(self):
        self._probe([0.5, 1.0, 3.0], [0.5, 1.0, 3.0], [0.05, 0.3, 0.6, 0.95])

    def marginal1_mean(self, theta1):
        return theta1 / (theta1 + 1)

    def theta1_from_mean(self, m1):
        return m1 / (1 - m1)

    def prob_continue(self, theta1, c):
        if c <= 0:
            return 0.0
        return min(c, 1.0) ** theta1

    def conditional2_mean(self, theta1, theta2, x1):
        k = (1 - x1) * theta2
        return k / (k + 1)

    def censored2_mean(self, theta1, theta2, c):
        c = min(c, 1.0)
        # X1 | X1 <= c has the law of c * V**(1/theta1), V uniform
        f = lambda v: self.conditional2_mean(theta1, theta2, c * v ** (1 / theta1))
        val, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10, limit=200)
        return val


def _interior(x, lo, hi):
    return lo < x < hi


def _mixture_m2(family, theta1, theta2, cutoffs, weights):
    num = den = 0.0
    for c, w in zip(cutoffs, weights):
        p = family.prob_continue(theta1, c)
        if p > 0:
            num += w * p * family.censored2_mean(theta1, theta2, c)
            den += w * p
    return num / den


def mom_estimate(family: FeasibleFamily, true_moments: TrueMoments, spec) -> Tuple[float, float]:
    """(theta1, theta2) matching the X1 mean and the uncensored X2 mean.

    spec is a CensoringSpec or a single cutoff.
    """
    if not isinstance(spec, CensoringSpec):
        spec = CensoringSpec((float(spec),))
    m1, m2 = true_moments.m1, true_moments.m2
    if not _interior(m1, *family.I1):
        raise MomError(f"no solution: m1={m1} is outside the range {family.I1} of the X1 mean map")
    if not _interior(m2, *family.I2):
        raise MomError(f"no solution: m2={m2} is outside the range {family.I2} of the conditional X2 mean")
    theta1 = family.theta1_from_mean(m1)
    cutoffs, weights = spec.cutoffs, spec.weights
    if all(family.prob_continue(theta1, c) == 0.0 for c in cutoffs):
        raise MomError("no solution: every cutoff stops with probability one, so X2 is never observed")

    def excess(t2):
        return _mixture_m2(family, theta1, t2, cutoffs, weights) - m2

    theta2 = _monotone_root(excess, family.positive_theta2)
    return theta1, theta2


def _monotone_root(f, positive: bool) -> float:
    """Root of an increasing function on (0, inf) or the real line."""
    if positive:
        lo, hi = 1.0, 1.0
        while f(lo) > 0:
            lo /= 2
            if lo < 1e-300:
                raise MomError("no solution: moment not attainable as theta2 -> 0")
        while f(hi) < 0:
            hi *= 2
            if hi > 1e300:
                raise MomError("no solution: moment not attainable as theta2 -> inf")
    else:
        lo, hi = -1.0, 1.0
        while f(lo) > 0:
            lo *= 2
            if lo < -1e300:
                raise MomError("no solution: moment not attainable")
        while f(hi) < 0:
            hi *= 2
            if hi > 1e300:
                raise MomError("no solution: moment not attainable")
    if f(lo) == 0:
        return lo
    if f(hi) == 0:
        return hi
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _check_linear_u2(game: StageGame) -> None:
    if game.direction != BENEFIT:
        raise MomError("MOM dynamics support benefit-direction games only")
    for x1 in (-1.0, 0.0, 0.5, 2.0):
        a, b, m = float(game.u2(x1, 0.0)), float(game.u2(x1, 2.0)), float(game.u2(x1, 1.0))
        if abs(m - 0.5 * (a + b)) > 1e-12 * (1 + abs(a) + abs(b)):
            raise MomError("u2 must be linear in x2")


@dataclass
class MomTrace(GenerationTrace):
    diagnostics: List[str] = field(default_factory=list)


def mom_cutoff(family: FeasibleFamily, game: StageGame, theta1: float, theta2: float) -> Tuple[float, str]:
    """Indifference point of u1(x) against u2(x, E[X2 | x]) on the X1 support.

    Returns (cutoff, diagnostic); the cutoff is clamped to the support edge
    when the agent strictly prefers one action everywhere.
    """
    lo, hi = family.I1

    def d(x):
        return float(game.u1(x)) - float(game.u2(x, family.conditional2_mean(theta1, theta2, x)))

    a = lo if math.isfinite(lo) else -1.0
    b = hi if math.isfinite(hi) else 1.0
    while not math.isfinite(lo) and d(a) > 0:
        a = 2 * a - 1
        if a < -1e12:
            return lo, "stop everywhere: cutoff clamped to inf(I1)"
    while not math.isfinite(hi) and d(b) < 0:
        b = 2 * b + 1
        if b > 1e12:
            return hi, "continue everywhere: cutoff clamped to sup(I1)"
    if d(a) >= 0:
        return lo, "stop everywhere: cutoff clamped to inf(I1)"
    if d(b) <= 0:
        return hi, "continue everywhere: cutoff clamped to sup(I1)"
    return optimize.brentq(d, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500), ""


def mom_dynamics(
    family: FeasibleFamily, game: StageGame, true_moments: TrueMoments, c0: float, T: int
) -> MomTrace:
    """Generation t estimates from all cutoffs c0..c[t-1] with equal weights, then best-responds.

    welfare_loss is nan: only two moments of the truth are known.
    """
    if T < 1:
        raise MomError("T must be >= 1")
    _check_linear_u2(game)
    if not _interior(c0, *family.I1):
        raise MomError(f"c0={c0} must lie in the interior of {family.I1}")
    trace = MomTrace(f"mom_{type(family).__name__}")
    cuts = [float(c0)]
    for t in range(1, T + 1):
        th1, th2 = mom_estimate(family, true_moments, CensoringSpec(tuple(cuts)))
        c, diag = mom_cutoff(family, game, th1, th2)
        trace.append(t, th1, th2, c, math.nan)
        trace.diagnostics.append(diag)
        cuts.append(c)
    return trace
