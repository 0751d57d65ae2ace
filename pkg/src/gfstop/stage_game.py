"""Two-period stopping games, subjective continuation values and cutoff solvers.

Benefit-direction games stop when the first draw is high (x1 > c). Cost-direction
games stop when it is low (x1 < c) and are solved by reflecting x -> -x, which
turns them into benefit games with the same bias parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

from . import gauss

BENEFIT = "benefit"
COST = "cost"

ROOT_XTOL = 1e-12
BRACKET_SPAN = 50.0  # in units of sd around the model means
_TAIL = 14.0  # integration half-width in sd for strategy values
_LEG_NODES = 160


class StageGameError(ValueError):
    """Invalid game definition or a failed cutoff search."""


@dataclass(frozen=True)
class SubjectiveModel:
    """Feasible model: X1 ~ N(mu1, var1), X2 | x1 ~ N(mu2 - gamma (x1 - mu1), var2)."""

    mu1: float
    mu2: float
    var1: float = 1.0
    var2: float = 1.0
    gamma: float = 0.5

    def cond_mean(self, x1):
        return self.mu2 - self.gamma * (x1 - self.mu1)

    @property
    def sd1(self) -> float:
        return math.sqrt(self.var1)

    @property
    def sd2(self) -> float:
        return math.sqrt(self.var2)

    def reflected(self) -> "SubjectiveModel":
        return replace(self, mu1=-self.mu1, mu2=-self.mu2)


@dataclass(frozen=True)
class TrueModel:
    mu1_true: float = 0.0
    mu2_true: float = 0.0
    sd: float = 1.0
    gamma_true: float = 0.0

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise StageGameError(f"true sd must be positive, got {self.sd}")

    def as_model(self) -> SubjectiveModel:
        v = self.sd * self.sd
        return SubjectiveModel(self.mu1_true, self.mu2_true, v, v, self.gamma_true)

    @property
    def x1_law(self) -> gauss.GaussianSpec:
        return gauss.GaussianSpec(self.mu1_true, self.sd)


class StageGame:
    """Common interface. Concrete games supply u1, u2 and, when cheap, a closed-form
    continuation value. All payoff callables accept numpy arrays."""

    direction: str = BENEFIT

    def u1(self, x1):
        raise NotImplementedError

    def u2(self, x1, x2):
        raise NotImplementedError

    def continuation(self, x1, model: SubjectiveModel, nodes: int = 64):
        """E[u2(x1, X2)] under the model's conditional law; vectorised over x1."""
        x1 = np.asarray(x1, dtype=float)
        xs, ws = gauss.hermite_rule(nodes)
        m = np.asarray(model.cond_mean(x1), dtype=float)
        grid = m[..., None] + model.sd2 * xs
        vals = np.asarray(self.u2(x1[..., None], grid), dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = grid[~np.isfinite(vals)].ravel()[0]
            raise gauss.GaussError(f"u2 not finite at abscissa {bad!r}")
        return vals @ ws

    def linear_shift(self) -> Optional[float]:
        """If u1(x) = x and u2(x1, x2) = x2 - k, return k; otherwise None."""
        return None

    def reflected(self) -> "StageGame":
        """Benefit-direction twin of a cost-direction game."""
        if self.direction == BENEFIT:
            return self
        return _Reflected(self)


@dataclass(frozen=True)
class SearchWithRecall(StageGame):
    """Hire now for x1, or search again and keep the first candidate with probability q."""

    q: float = 0.0
    direction: str = field(default=BENEFIT, init=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.q < 1.0:
            raise StageGameError(f"recall probability must lie in [0, 1), got {self.q}")

    def u1(self, x1):
        return x1

    def u2(self, x1, x2):
        return self.q * np.maximum(x1, x2) + (1.0 - self.q) * x2

    def continuation(self, x1, model, nodes=64):
        x1 = np.asarray(x1, dtype=float)
        m = model.cond_mean(x1)
        if self.q == 0.0:
            return m
        s = model.sd2
        d = (x1 - m) / s
        emax = x1 * special.ndtr(d) + m * special.ndtr(-d) + s * np.exp(-0.5 * d * d) / math.sqrt(2 * math.pi)
        return self.q * emax + (1.0 - self.q) * m

    def linear_shift(self):
        return 0.0 if self.q == 0.0 else None


@dataclass(frozen=True)
class WaitCost(StageGame):
    """Benefit game with an extra cost kappa charged for continuing."""

    base: StageGame = field(default_factory=SearchWithRecall)
    kappa: float = 0.0
    direction: str = field(default=BENEFIT, init=False)

    def __post_init__(self) -> None:
        if self.base.direction != BENEFIT:
            raise StageGameError("waiting cost wraps benefit-direction games only")
        if self.kappa < 0:
            raise StageGameError(f"kappa must be >= 0, got {self.kappa}")

    def u1(self, x1):
        return self.base.u1(x1)

    def u2(self, x1, x2):
        return self.base.u2(x1, x2) - self.kappa

    def continuation(self, x1, model, nodes=64):
        return self.base.continuation(x1, model, nodes) - self.kappa

    def linear_shift(self):
        k = self.base.linear_shift()
        return None if k is None else k + self.kappa


@dataclass(frozen=True)
class CostDraws(StageGame):
    """Draws are costs: pay x1 now or x2 later."""

    direction: str = field(default=COST, init=False)

    def u1(self, x1):
        return -np.asarray(x1, dtype=float)

    def u2(self, x1, x2):
        return -np.asarray(x2, dtype=float) + 0.0 * np.asarray(x1, dtype=float)

    def continuation(self, x1, model, nodes=64):
        return -np.asarray(model.cond_mean(np.asarray(x1, dtype=float)), dtype=float)

    def reflected(self):
        return SearchWithRecall(0.0)


@dataclass(frozen=True)
class _Reflected(StageGame):
    inner: StageGame
    direction: str = field(default=BENEFIT, init=False)

    def u1(self, x1):
        return self.inner.u1(-np.asarray(x1, dtype=float))

    def u2(self, x1, x2):
        return self.inner.u2(-np.asarray(x1, dtype=float), -np.asarray(x2, dtype=float))


@dataclass(frozen=True)
class Tabulated(StageGame):
    """User-supplied payoffs, checked against the regularity conditions on a grid."""

    f1: Callable = None
    f2: Callable = None
    direction: str = BENEFIT
    probe: bool = True
    probe_center: float = 0.0
    probe_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.direction not in (BENEFIT, COST):
            raise StageGameError(f"direction must be '{BENEFIT}' or '{COST}'")
        if self.f1 is None or self.f2 is None:
            raise StageGameError("tabulated game needs both payoff functions")
        if self.probe:
            probe_regularity(self)

    def u1(self, x1):
        return np.vectorize(self.f1, otypes=[float])(x1)

    def u2(self, x1, x2):
        return np.vectorize(self.f2, otypes=[float])(x1, x2)


def probe_regularity(game: StageGame, n: int = 41, span: float = 5.0) -> None:
    """Grid check of monotonicity and the u1-dominates-u2 slope condition.

    Cost games are checked through their reflection. Integrability of u2 is only
    probed by finiteness at the grid points.
    """
    g = game.reflected()
    c = getattr(game, "probe_center", 0.0)
    s = getattr(game, "probe_scale", 1.0)
    if game.direction == COST:
        c = -c
    x = c + s * np.linspace(-span, span, n)
    u1 = np.asarray(g.u1(x), dtype=float)
    u2 = np.asarray(g.u2(x[:, None], x[None, :]), dtype=float)  # rows x1, cols x2
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
        raise StageGameError("regularity probe: payoffs not finite on the probe grid")
    if not np.all(np.diff(u1) > 0):
        i = int(np.argmin(np.diff(u1) > 0))
        raise StageGameError(f"regularity probe: u1 not strictly increasing near x1={x[i]:.4g}")
    if not np.all(np.diff(u2, axis=1) > 0):
        i, j = np.argwhere(~(np.diff(u2, axis=1) > 0))[0]
        raise StageGameError(f"regularity probe: u2 not strictly increasing in x2 at x1={x[i]:.4g}, x2={x[j]:.4g}")
    du1 = u1[:, None] - u1[None, :]
    for k in range(n):
        du2 = np.abs(u2[:, k][:, None] - u2[:, k][None, :])
        upper = np.triu_indices(n, 1)
        # pairs (i < j): x1 at j exceeds x1 at i
        if not np.all(-du1[upper] > du2[upper]):
            raise StageGameError(
                f"regularity probe: u1 increment does not dominate |u2 increment| at x2={x[k]:.4g}"
            )


# --------------------------------------------------------------------------
# cutoffs


def _benefit(game: StageGame, model: SubjectiveModel):
    if game.direction == COST:
        return game.reflected(), model.reflected(), -1.0
    return game, model, 1.0


def indifference_gap(game: StageGame, x1, model: SubjectiveModel):
    """D(x1) = u1(x1) - E[u2(x1, X2)] in the game's own direction."""
    return np.asarray(game.u1(x1), dtype=float) - game.continuation(x1, model)


def _find_root(fn: Callable[[float], float], center: float, scale: float) -> Optional[float]:
    """Root of an increasing function by geometric bracket expansion plus Brent.

    Returns None when there is no sign change within BRACKET_SPAN * scale of center.
    """
    f0 = fn(center)
    if f0 == 0.0:
        return center
    direction = 1.0 if f0 < 0 else -1.0
    limit = BRACKET_SPAN * scale
    prev, d = 0.0, 0.25 * scale
    while True:
        x = center + direction * d
        fx = fn(x)
        if (fx > 0) if direction > 0 else (fx < 0):
            a, b = sorted((center + direction * prev, x))
            return optimize.brentq(fn, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)
        if fx == 0.0:
            return x
        if d >= limit:
            return None
        prev, d = d, min(2.0 * d, limit)


def optimal_cutoff(game: StageGame, model: SubjectiveModel) -> float:
    """Subjectively optimal cutoff C(mu1, mu2; gamma).

    Benefit games stop iff x1 > C; cost games stop iff x1 < C.
    """
    if not model.var2 > 0:
        raise StageGameError("optimal_cutoff needs var2 > 0")
    g, m, sign = _benefit(game, model)
    k = g.linear_shift()
    if k is not None and 1.0 + m.gamma > 0:
        return sign * (m.mu2 + m.gamma * m.mu1 - k) / (1.0 + m.gamma)
    scale = max(math.sqrt(m.var1), math.sqrt(m.var2))
    center = 0.5 * (m.mu1 + m.mu2)
    root = _find_root(lambda x: float(indifference_gap(g, x, m)), center, scale)
    if root is None:
        raise StageGameError(
            f"no indifference point within {BRACKET_SPAN:g} sd of the model means; payoffs may violate the crossing condition"
        )
    return sign * root


def objective_cutoff(game: StageGame, true_model: TrueModel) -> float:
    """Cutoff that is optimal under the true law; +-inf when one action always wins."""
    m = true_model.as_model()
    g, m, sign = _benefit(game, m)
    k = g.linear_shift()
    if k is not None and 1.0 + m.gamma > 0:
        return sign * (m.mu2 + m.gamma * m.mu1 - k) / (1.0 + m.gamma)
    center = 0.5 * (m.mu1 + m.mu2)
    fn = lambda x: float(indifference_gap(g, x, m))
    root = _find_root(fn, center, true_model.sd)
    if root is None:
        # benefit view: gap > 0 everywhere means stopping always wins
        root = -math.inf if fn(center) > 0 else math.inf
    return sign * root


def strategy_value(c: float, game: StageGame, model: SubjectiveModel) -> float:
    """Expected payoff of the cutoff strategy with threshold c under the model."""
    if not (model.var1 > 0 and model.var2 > 0):
        raise StageGameError("strategy_value needs positive variances")
    g, m, sign = _benefit(game, model)
    c = sign * c
    mu, s = m.mu1, m.sd1
    k = g.linear_shift()
    if k is not None:
        # stop payoff x1, continue payoff mu2 - gamma (x1 - mu1) - k
        if c == math.inf:
            return m.mu2 - k
        if c == -math.inf:
            return mu
        z = (c - mu) / s
        p_lo, p_hi = float(special.ndtr(z)), float(special.ndtr(-z))
        # E[X 1{X>c}] = mu P(X>c) + s phi(z), E[X 1{X<=c}] = mu P(X<=c) - s phi(z)
        stop_part = mu * p_hi + s * gauss.pdf(z)
        ex_lo = mu * p_lo - s * gauss.pdf(z)
        return stop_part + (m.mu2 - k + m.gamma * mu) * p_lo - m.gamma * ex_lo
    law = gauss.GaussianSpec(mu, s)
    if c == math.inf:
        return gauss.gauss_expectation_vec(lambda x: g.continuation(x, m), law)
    if c == -math.inf:
        return gauss.gauss_expectation_vec(lambda x: g.u1(x), law)
    lo, hi = mu - _TAIL * s, mu + _TAIL * s
    dens = lambda x: np.exp(-0.5 * ((x - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))
    total = 0.0
    if c < hi:
        a = max(c, lo)
        total += gauss.integrate_interval(lambda x: np.asarray(g.u1(x), dtype=float) * dens(x), a, hi, _LEG_NODES)
    if c > lo:
        b = min(c, hi)
        total += gauss.integrate_interval(lambda x: g.continuation(x, m) * dens(x), lo, b, _LEG_NODES)
    return total


def objective_value(c: float, game: StageGame, true_model: TrueModel) -> float:
    return strategy_value(c, game, true_model.as_model())
