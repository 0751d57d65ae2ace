"""L-period pseudo-true fundamentals for constant cutoff vectors.

Agents continue past period j while x_j <= c_j. With constant cutoffs the
continuation region is a rectangle, so the conditional mean of X_j given
that period i was reached is just the truncated mean E[X_j | X_j <= c_j].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence

import numpy as np

from . import gauss

ALL_PESSIMISTIC = "all_pessimistic"
OPTIMISM_POSSIBLE = "optimism_possible"
BOUNDARY = "boundary"


class MultiPeriodError(ValueError):
    pass


def alpha_delta_gamma(alpha: float, delta: float, L: int) -> np.ndarray:
    """gamma[i, j] = alpha * delta**(i - j - 1) below the diagonal (0-based)."""
    g = np.zeros((L, L))
    for i in range(L):
        for j in range(i):
            g[i, j] = alpha * delta ** (i - j - 1)
    return g


@dataclass(frozen=True)
class MultiPeriodSpec:
    L: int
    gamma: np.ndarray
    mu_true: np.ndarray
    sd: float
    cutoffs: tuple = field(default=())

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise MultiPeriodError("L must be an integer >= 2")
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (self.L, self.L):
            raise MultiPeriodError(f"gamma must be {self.L}x{self.L}, got {g.shape}")
        if np.any(np.triu(g) != 0):
            raise MultiPeriodError("gamma must be strictly lower triangular")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise MultiPeriodError("gamma entries must be finite and >= 0")
        mu = np.asarray(self.mu_true, dtype=float)
        if mu.shape != (self.L,):
            raise MultiPeriodError(f"mu_true must have length {self.L}")
        if not (self.sd > 0 and math.isfinite(self.sd)):
            raise MultiPeriodError("sd must be positive")
        cs = tuple(self.cutoffs)
        if any(callable(c) for c in cs):
            raise MultiPeriodError(
                "history-dependent cutoffs are not supported; the conditional means they need have no "
                "closed form. Pass one constant threshold per period."
            )
        if len(cs) != self.L - 1:
            raise MultiPeriodError(f"need {self.L - 1} cutoffs, got {len(cs)}")
        cs = tuple(float(c) for c in cs)
        if any(c == -math.inf or math.isnan(c) for c in cs):
            raise MultiPeriodError("cutoff -inf (or nan) leaves later periods unobserved")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "mu_true", mu)
        object.__setattr__(self, "cutoffs", cs)


def _path_sums(gamma) -> list:
    """S[i][j] for all j < i. Works on floats or Fractions."""
    L = len(gamma)
    S = [[0] * L for _ in range(L)]
    for i in range(L):
        for j in range(i):
            s = -gamma[i][j]
            for k in range(j + 1, i):
                s += -gamma[i][k] * S[k][j]
            S[i][j] = s
    return S


def path_weight_sum(spec: MultiPeriodSpec, i: int, j: int) -> float:
    """Sum of path weights from period i down to period j (1-based, j < i)."""
    if not 1 <= j < i <= spec.L:
        raise MultiPeriodError(f"need 1 <= j < i <= {spec.L}, got i={i}, j={j}")
    return float(_path_sums(spec.gamma.tolist())[i - 1][j - 1])


def _gaps(spec: MultiPeriodSpec) -> np.ndarray:
    """mu_j - E[X_j | X_j <= c_j] for the first L-1 periods."""
    out = np.empty(spec.L - 1)
    for j, c in enumerate(spec.cutoffs):
        law = gauss.GaussianSpec(spec.mu_true[j], spec.sd)
        out[j] = spec.mu_true[j] - gauss.truncated_lower_moments(law, c)[0]
    return out


def pseudo_true_L(spec: MultiPeriodSpec, method: str = "iterative") -> np.ndarray:
    gaps = _gaps(spec)
    mu = spec.mu_true
    g = spec.gamma
    L = spec.L
    out = np.empty(L)
    if method == "iterative":
        trunc = mu[:-1] - gaps
        out[0] = mu[0]
        for i in range(1, L):
            out[i] = mu[i] - sum(g[i, j] * (out[j] - trunc[j]) for j in range(i))
    elif method == "paths":
        S = _path_sums(g.tolist())
        out[0] = mu[0]
        for i in range(1, L):
            out[i] = mu[i] + sum(S[i][j] * gaps[j] for j in range(i))
    else:
        raise MultiPeriodError(f"unknown method {method!r}")
    return out


def alpha_delta_classify(alpha: float, delta: float, L: int) -> str:
    """Sign pattern of the path sums for the alpha-delta family.

    Computed in exact rational arithmetic so delta == alpha gives true zeros.
    """
    if not alpha > 0:
        raise MultiPeriodError("alpha must be > 0")
    if not 0 <= delta <= 1:
        raise MultiPeriodError("delta must lie in [0, 1]")
    if L < 2:
        raise MultiPeriodError("L must be >= 2")
    a, d = Fraction(alpha), Fraction(delta)
    gamma = [[a * d ** (i - j - 1) if j < i else Fraction(0) for j in range(L)] for i in range(L)]
    S = _path_sums(gamma)
    signs = [S[i][j] for i in range(L) for j in range(i)]
    if all(s < 0 for s in signs):
        return ALL_PESSIMISTIC
    if any(s > 0 for s in signs):
        return OPTIMISM_POSSIBLE
    return BOUNDARY


def path_sums_matrix(spec: MultiPeriodSpec) -> List[List[float]]:
    S = _path_sums(spec.gamma.tolist())
    return [[float(S[i][j]) if j < i else 0.0 for j in range(spec.L)] for i in range(spec.L)]


def make_spec(
    L: int, cutoffs: Sequence[float], gamma=None, mu_true=None, sd: float = 1.0, alpha=None, delta=None
) -> MultiPeriodSpec:
    """Convenience builder: either a full gamma matrix or (alpha, delta)."""
    if gamma is None:
        if alpha is None or delta is None:
            raise MultiPeriodError("give gamma or both alpha and delta")
        gamma = alpha_delta_gamma(alpha, delta, L)
    if mu_true is None:
        mu_true = np.zeros(L)
    return MultiPeriodSpec(L, np.asarray(gamma, dtype=float), np.asarray(mu_true, dtype=float), sd, tuple(cutoffs))
