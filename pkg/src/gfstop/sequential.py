"""Agents arriving one at a time, each updating a grid posterior over fundamentals.

Round t draws (X1, X2) from the truth, the agent stops or continues at the
myopically optimal cutoff under the current posterior, and the censored
history is folded into the posterior for round t + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from . import gauss
from .stage_game import (
    COST,
    StageGame,
    StageGameError,
    SubjectiveModel,
    TrueModel,
    _find_root,
)


class SequentialError(ValueError):
    pass


@dataclass(frozen=True)
class PosteriorGrid:
    """Log-weights over mu2 nodes (mu1 known) or over an (mu1, mu2) product grid.

    With axis1=None the weights are 1-D and mu1 is the fixed value `mu1`.
    Otherwise log_weights has shape (len(axis1), len(axis2)); masked cells hold -inf.
    """

    axis2: np.ndarray
    log_weights: np.ndarray
    axis1: Optional[np.ndarray] = None
    mu1: float = 0.0

    def __post_init__(self):
        a2 = np.asarray(self.axis2, dtype=float)
        if a2.ndim != 1 or a2.size < 1 or np.any(np.diff(a2) <= 0):
            raise SequentialError("axis2 must be a strictly increasing 1-D grid")
        lw = np.asarray(self.log_weights, dtype=float)
        if self.axis1 is None:
            shape = (a2.size,)
        else:
            a1 = np.asarray(self.axis1, dtype=float)
            if a1.ndim != 1 or a1.size < 1 or np.any(np.diff(a1) <= 0):
                raise SequentialError("axis1 must be a strictly increasing 1-D grid")
            object.__setattr__(self, "axis1", a1)
            shape = (a1.size, a2.size)
        if lw.shape != shape:
            raise SequentialError(f"log_weights shape {lw.shape} does not match grid {shape}")
        if not np.any(np.isfinite(lw)) or np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise SequentialError("log_weights need at least one finite entry and no nan/+inf")
        object.__setattr__(self, "axis2", a2)
        object.__setattr__(self, "log_weights", lw - logsumexp(lw))

    @classmethod
    def flat(cls, lo: float, hi: float, n: int = 401, mu1: float = 0.0) -> "PosteriorGrid":
        return cls(np.linspace(lo, hi, n), np.zeros(n), None, mu1)

    @classmethod
    def flat_2d(
        cls, axis1, axis2, gamma: Optional[float] = None, band: Optional[Tuple[float, float]] = None
    ) -> "PosteriorGrid":
        """Flat over a rectangle, optionally masked to lo <= mu2 + gamma mu1 <= hi."""
        a1, a2 = np.asarray(axis1, float), np.asarray(axis2, float)
        lw = np.zeros((a1.size, a2.size))
        if band is not None:
            if gamma is None:
                raise SequentialError("a masked grid needs gamma")
            s = a2[None, :] + gamma * a1[:, None]
            lw[(s < band[0]) | (s > band[1])] = -np.inf
        return cls(a2, lw, a1)

    @property
    def is_2d(self) -> bool:
        return self.axis1 is not None

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def marginal2(self) -> np.ndarray:
        w = self.weights()
        return w.sum(axis=0) if self.is_2d else w

    def mean2(self) -> float:
        return float(self.marginal2() @ self.axis2)

    def mean1(self) -> float:
        if not self.is_2d:
            return self.mu1
        return float(self.weights().sum(axis=1) @ self.axis1)

    def mode2(self) -> float:
        return float(self.axis2[np.argmax(self.marginal2())])

    def nodes(self, tol: float = 1e-15):
        """(mu1, mu2, weight) for cells with non-negligible weight."""
        w = self.weights()
        if self.is_2d:
            i, j = np.nonzero(w > tol)
            return self.axis1[i], self.axis2[j], w[i, j]
        j = np.nonzero(w > tol)[0]
        return np.full(j.size, self.mu1), self.axis2[j], w[j]


def _log_phi(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - gauss.LOG_SQRT_2PI - math.log(sd)


def posterior_update(grid: PosteriorGrid, history, gamma: float, sd: float) -> PosteriorGrid:
    """Fold one (x1, x2-or-None) history into the grid."""
    if not sd > 0:
        raise SequentialError("sd must be positive")
    x1, x2 = history
    if grid.is_2d:
        m1 = grid.axis1[:, None]
        ll = _log_phi(x1, m1, sd) + np.zeros_like(grid.log_weights)
        if x2 is not None:
            ll = ll + _log_phi(x2, grid.axis2[None, :] - gamma * (x1 - m1), sd)
    else:
        if x2 is None:
            return grid
        ll = _log_phi(x2, grid.axis2 - gamma * (x1 - grid.mu1), sd)
    return replace(grid, log_weights=grid.log_weights + ll)


def myopic_cutoff(grid: PosteriorGrid, game: StageGame, gamma: float, sd: float) -> float:
    """Cutoff that is optimal against the posterior mixture of models."""
    sign = 1.0
    m1, m2, w = grid.nodes()
    g = game
    if game.direction == COST:
        g, m1, m2, sign = game.reflected(), -m1, -m2, -1.0
    k = g.linear_shift()
    if k is not None:
        return sign * (float(w @ m2) + gamma * float(w @ m1) - k) / (1.0 + gamma)
    v = sd * sd
    models = [SubjectiveModel(a, b, v, v, gamma) for a, b in zip(m1, m2)]
    w = w / w.sum()

    def gap(x):
        cont = sum(wi * float(g.continuation(x, mi)) for wi, mi in zip(w, models))
        return float(g.u1(x)) - cont

    center = float(w @ (0.5 * (m1 + m2)))
    root = _find_root(gap, center, sd)
    if root is None:
        raise StageGameError("no indifference point for the posterior mixture")
    return sign * root


@dataclass
class SequentialRun:
    seed: int
    scenario: str
    cutoff: np.ndarray
    posterior_mean2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray  # nan where censored
    final: PosteriorGrid
    flags: List[str] = field(default_factory=list)

    def rows(self):
        for t in range(self.cutoff.size):
            x2 = self.x2[t]
            yield {
                "t": t + 1,
                "cutoff": float(self.cutoff[t]),
                "posterior_mean2": float(self.posterior_mean2[t]),
                "x1": float(self.x1[t]),
                "x2": None if math.isnan(x2) else float(x2),
            }


def round_draws(seed: int, T: int) -> np.ndarray:
    """Standard normal pairs for rounds 1..T. Row t-1 belongs to round t whatever T is."""
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    return gen.standard_normal((T, 2))


def _observed(game: StageGame, x1: float, c: float) -> bool:
    # the agent continues (and sees x2) iff the first draw is on the continue side
    return x1 >= c if game.direction == COST else x1 <= c


def simulate_sequential(
    game: StageGame,
    true_model: TrueModel,
    gamma: float,
    prior: PosteriorGrid,
    T: int,
    seed: int,
    scenario: str = "",
) -> SequentialRun:
    if T < 1:
        raise SequentialError("T must be >= 1")
    z = round_draws(seed, T)
    sd = true_model.sd
    x1 = true_model.mu1_true + sd * z[:, 0]
    x2 = true_model.mu2_true - true_model.gamma_true * (x1 - true_model.mu1_true) + sd * z[:, 1]
    cut = np.empty(T)
    pm = np.empty(T)
    seen = np.full(T, np.nan)
    grid = prior
    for t in range(T):
        c = myopic_cutoff(grid, game, gamma, sd)
        cut[t] = c
        if _observed(game, x1[t], c):
            seen[t] = x2[t]
            grid = posterior_update(grid, (x1[t], x2[t]), gamma, sd)
        elif grid.is_2d:
            grid = posterior_update(grid, (x1[t], None), gamma, sd)
        pm[t] = grid.mean2()
    flags = []
    marg = grid.marginal2()
    if marg[0] + marg[-1] > 0.05:
        flags.append("posterior mass piles up at the edge of the mu2 grid; the steady state may lie outside it")
    return SequentialRun(int(seed), scenario, cut, pm, x1, seen, grid, flags)
