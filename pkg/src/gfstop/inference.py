"""Pseudo-true parameters from censored histories.

Every closed form here has a numeric twin in ``kl_oracle_minimize``, which
minimises the censored-history KL divergence directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from . import gauss
from .stage_game import StageGame, SubjectiveModel, TrueModel, optimal_cutoff


class InferenceError(ValueError):
    """Precondition failure or an unidentified parameter."""


class OracleError(RuntimeError):
    def __init__(self, message: str, best_x: Sequence[float], best_f: float):
        super().__init__(f"{message}; best point {list(best_x)} with KL {best_f:.3e}")
        self.best_x = list(best_x)
        self.best_f = best_f


@dataclass(frozen=True)
class PseudoTrueEstimate:
    mu1_star: float
    mu2_star: float
    var1_star: Optional[float] = None
    var2_star: Optional[float] = None
    gamma_star: Optional[float] = None


@dataclass(frozen=True)
class CensoringSpec:
    """Mixture of datasets censored at different cutoffs, with mixing weights."""

    cutoffs: Tuple[float, ...]
    weights: Tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        cs = tuple(float(c) for c in self.cutoffs)
        if not cs:
            raise InferenceError("censoring spec needs at least one cutoff")
        ws = tuple(float(w) for w in self.weights) or tuple(1.0 for _ in cs)
        if len(ws) != len(cs):
            raise InferenceError(f"{len(cs)} cutoffs but {len(ws)} weights")
        if any(w < 0 or not math.isfinite(w) for w in ws):
            raise InferenceError("weights must be finite and non-negative")
        total = sum(ws)
        if total <= 0:
            raise InferenceError("weights sum to zero")
        object.__setattr__(self, "cutoffs", cs)
        object.__setattr__(self, "weights", tuple(w / total for w in ws))


def _censored_mean(true_model: TrueModel, c: float) -> float:
    if c == -math.inf:
        raise InferenceError("cutoff -inf leaves no second-period observations; mu2 is not identified")
    return gauss.truncated_lower_moments(true_model.x1_law, c)[0]


def _pass_prob(true_model: TrueModel, c: float) -> float:
    return gauss.cdf(c, true_model.mu1_true, true_model.sd)


def _require_positive_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise InferenceError(f"gamma must be positive, got {gamma}")


def mu2_star(true_model: TrueModel, c: float, gamma: float) -> float:
    """mu2* = mu2 - (gamma - gamma_true)(mu1 - E[X1 | X1 <= c])."""
    e = _censored_mean(true_model, c)
    return true_model.mu2_true - (gamma - true_model.gamma_true) * (true_model.mu1_true - e)


def pseudo_true(true_model: TrueModel, c: float, gamma: float) -> PseudoTrueEstimate:
    _require_positive_gamma(gamma)
    return PseudoTrueEstimate(true_model.mu1_true, mu2_star(true_model, c, gamma))


def observation_weights(true_model: TrueModel, spec: CensoringSpec) -> np.ndarray:
    """Share of uncensored second draws contributed by each cutoff."""
    w = np.array([wt * _pass_prob(true_model, c) for c, wt in zip(spec.cutoffs, spec.weights)])
    if w.sum() <= 0:
        raise InferenceError("no cutoff admits second-period observations; mu2 is not identified")
    return w / w.sum()


def pseudo_true_multi(true_model: TrueModel, spec: CensoringSpec, gamma: float) -> PseudoTrueEstimate:
    _require_positive_gamma(gamma)
    w = observation_weights(true_model, spec)
    vals = [mu2_star(true_model, c, gamma) if wi > 0 else 0.0 for c, wi in zip(spec.cutoffs, w)]
    return PseudoTrueEstimate(true_model.mu1_true, float(np.dot(w, vals)))


def pseudo_true_mean_var(true_model: TrueModel, c: float, gamma: float) -> PseudoTrueEstimate:
    """Means plus both variances; the second-period variance picks up fictitious variation."""
    if gamma < 0:
        raise InferenceError(f"gamma must be non-negative, got {gamma}")
    if c == -math.inf:
        raise InferenceError("cutoff -inf leaves no second-period observations")
    _, v = gauss.truncated_lower_moments(true_model.x1_law, c)
    s2 = true_model.sd**2
    dg = gamma - true_model.gamma_true
    e = _censored_mean(true_model, c)
    mu2 = true_model.mu2_true - dg * (true_model.mu1_true - e)
    return PseudoTrueEstimate(true_model.mu1_true, mu2, s2, s2 + dg * dg * v)


def pseudo_true_constrained(mu_common_true: float, sd: float, c: float, gamma: float) -> PseudoTrueEstimate:
    """Single common fundamental for both periods; returned in both mean slots."""
    _require_positive_gamma(gamma)
    law = gauss.GaussianSpec(mu_common_true, sd)
    p = gauss.cdf(c, mu_common_true, sd)
    if p == 0.0:
        return PseudoTrueEstimate(mu_common_true, mu_common_true)
    e = gauss.truncated_lower_moments(law, c)[0]
    mu2o = mu_common_true - gamma / (1.0 + gamma) * (mu_common_true - e)
    k = p * (1.0 + gamma) ** 2
    w2 = k / (1.0 + k)
    mu = (1.0 - w2) * mu_common_true + w2 * mu2o
    return PseudoTrueEstimate(mu, mu)


def constrained_parts(mu_common_true: float, sd: float, c: float, gamma: float) -> Tuple[float, float]:
    """(second-period component, its weight) of the common-fundamental estimate."""
    p = gauss.cdf(c, mu_common_true, sd)
    e = gauss.truncated_lower_moments(gauss.GaussianSpec(mu_common_true, sd), c)[0] if p > 0 else mu_common_true
    k = p * (1.0 + gamma) ** 2
    return mu_common_true - gamma / (1.0 + gamma) * (mu_common_true - e), k / (1.0 + k)


def pseudo_true_gamma_range(true_model: TrueModel, c: float, gamma_lo: float, gamma_hi: float) -> PseudoTrueEstimate:
    """Bias known only up to an interval that excludes the true serial correlation."""
    if gamma_lo > gamma_hi:
        raise InferenceError(f"empty gamma range [{gamma_lo}, {gamma_hi}]")
    gt = true_model.gamma_true
    if gamma_lo <= gt <= gamma_hi:
        raise InferenceError(
            f"true gamma {gt} lies inside [{gamma_lo}, {gamma_hi}]; this case is not characterised"
        )
    g = gamma_lo if gt < gamma_lo else gamma_hi
    return PseudoTrueEstimate(true_model.mu1_true, mu2_star(true_model, c, g), gamma_star=g)


def pseudo_true_cost(true_model: TrueModel, c: float, gamma: float) -> PseudoTrueEstimate:
    """Cost draws: the second draw is seen only when X1 >= c."""
    _require_positive_gamma(gamma)
    if c == math.inf:
        raise InferenceError("cutoff +inf leaves no second-period observations")
    e = gauss.truncated_upper_moments(true_model.x1_law, c)[0]
    dg = gamma - true_model.gamma_true
    return PseudoTrueEstimate(true_model.mu1_true, true_model.mu2_true - dg * (true_model.mu1_true - e))


def neglecter_cutoff(true_model: TrueModel, gamma: float, game: StageGame) -> float:
    v = true_model.sd**2
    return optimal_cutoff(game, SubjectiveModel(true_model.mu1_true, true_model.mu2_true, v, v, gamma))


def pseudo_true_selection_mix(
    true_model: TrueModel, c_baseline: float, alpha: float, gamma: float, game: StageGame
) -> PseudoTrueEstimate:
    """Share alpha of the data comes from selection neglecters, who use C(mu1, mu2; gamma)."""
    if not 0.0 <= alpha < 1.0:
        raise InferenceError(f"alpha must lie in [0, 1), got {alpha}")
    cn = neglecter_cutoff(true_model, gamma, game)
    return pseudo_true_multi(true_model, CensoringSpec((cn, c_baseline), (alpha, 1.0 - alpha)), gamma)


def pseudo_true_ref_dependence(
    true_model: TrueModel, prior_beliefs: Tuple[float, float], eta: float, c: float, gamma: float
) -> PseudoTrueEstimate:
    """Draws encoded with an elation/disappointment term of size eta relative to prior beliefs."""
    if eta < 0:
        raise InferenceError(f"eta must be non-negative, got {eta}")
    if gamma < 0:
        raise InferenceError(f"gamma must be non-negative, got {gamma}")
    m1o, m2o = prior_beliefs
    m1, m2 = true_model.mu1_true, true_model.mu2_true
    mu1 = (1.0 + eta) * m1 - eta * m1o
    if gamma == 0.0:
        return PseudoTrueEstimate(mu1, (1.0 + eta) * m2 - eta * m2o)
    e = _censored_mean(true_model, c)
    mu2 = (1.0 + eta) * m2 - eta * m2o - gamma * ((1.0 + eta) * (m1 - e) + eta * (m1o - e))
    return PseudoTrueEstimate(mu1, mu2)


def sufficient_statistics(true_model: TrueModel, spec: CensoringSpec, gamma: float) -> Tuple[float, float]:
    """Population values of mean(h1) and mean(h2 + gamma h1 | h2 observed)."""
    w = observation_weights(true_model, spec)
    m1, m2, gt = true_model.mu1_true, true_model.mu2_true, true_model.gamma_true
    lam2 = 0.0
    for c, wi in zip(spec.cutoffs, w):
        if wi == 0:
            continue
        e = _censored_mean(true_model, c)
        lam2 += wi * (m2 - gt * (e - m1) + gamma * e)
    return m1, lam2


# --------------------------------------------------------------------------
# KL divergence and its brute-force minimiser

_KL_NODES = 160
_KL_TAIL = 12.0


def _gauss_kl(mt, st2, mm, sm2):
    """KL(N(mt, st2) || N(mm, sm2))."""
    return 0.5 * np.log(sm2 / st2) + (st2 + (mt - mm) ** 2) / (2.0 * sm2) - 0.5


def kl_divergence(true_model: TrueModel, subj: SubjectiveModel, c: float) -> float:
    """KL divergence from the true censored-history law to the subjective one.

    The first-draw term is the closed-form Gaussian KL; the censored second-draw
    term is integrated numerically over x1 <= c.
    """
    if not (subj.var1 > 0 and subj.var2 > 0):
        raise InferenceError("subjective variances must be positive")
    s2 = true_model.sd**2
    first = float(_gauss_kl(true_model.mu1_true, s2, subj.mu1, subj.var1))
    lo = true_model.mu1_true - _KL_TAIL * true_model.sd
    hi = min(c, true_model.mu1_true + _KL_TAIL * true_model.sd)
    if hi <= lo:
        return max(first, 0.0)

    def integrand(x):
        dens = np.exp(-0.5 * ((x - true_model.mu1_true) / true_model.sd) ** 2) / (true_model.sd * math.sqrt(2 * math.pi))
        mt = true_model.mu2_true - true_model.gamma_true * (x - true_model.mu1_true)
        return dens * _gauss_kl(mt, s2, subj.cond_mean(x), subj.var2)

    second = gauss.integrate_interval(integrand, lo, hi, _KL_NODES)
    return max(first + second, 0.0)


def _nelder_mead(fun, starts, bounds=None, xatol=1e-9, fatol=1e-13, maxiter=20000):
    best = None
    for x0 in starts:
        r = optimize.minimize(
            fun,
            np.asarray(x0, dtype=float),
            method="Nelder-Mead",
            bounds=bounds,
            options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter, "maxfev": 4 * maxiter},
        )
        key = (round(float(r.fun), 14), tuple(np.round(r.x, 12)))
        if best is None or key < best[0]:
            best = (key, r)
    r = best[1]
    if not r.success:
        raise OracleError(f"Nelder-Mead did not converge: {r.message}", r.x, float(r.fun))
    return r


def kl_oracle_minimize(
    true_model: TrueModel,
    c: float,
    gamma: float,
    parameter_set: str = "means",
    gamma_range: Optional[Tuple[float, float]] = None,
) -> PseudoTrueEstimate:
    """Direct numeric KL minimisation over one of the parameter families.

    parameter_set: 'means', 'means_and_vars', 'diagonal' (common mean) or
    'with_gamma' (means plus gamma within gamma_range).
    """
    s2 = true_model.sd**2
    m1, m2 = true_model.mu1_true, true_model.mu2_true
    sd = true_model.sd
    offsets = (-0.5 * sd, 0.5 * sd)

    if parameter_set == "means":
        f = lambda p: kl_divergence(true_model, SubjectiveModel(p[0], p[1], s2, s2, gamma), c)
        starts = [(m1 + a, m2 + b) for a in offsets for b in offsets]
        r = _nelder_mead(f, starts)
        return PseudoTrueEstimate(float(r.x[0]), float(r.x[1]))

    if parameter_set == "means_and_vars":
        f = lambda p: kl_divergence(
            true_model, SubjectiveModel(p[0], p[1], math.exp(p[2]), math.exp(p[3]), gamma), c
        )
        ls = math.log(s2)
        starts = [(m1 + a, m2 + b, ls, ls + d) for a in offsets for b in offsets for d in (-0.3, 0.3)]
        r = _nelder_mead(f, starts)
        return PseudoTrueEstimate(float(r.x[0]), float(r.x[1]), math.exp(r.x[2]), math.exp(r.x[3]))

    if parameter_set == "diagonal":
        f = lambda p: kl_divergence(true_model, SubjectiveModel(p[0], p[0], s2, s2, gamma), c)
        r = _nelder_mead(f, [(m1 - 0.5 * sd,), (m1 + 0.5 * sd,)])
        return PseudoTrueEstimate(float(r.x[0]), float(r.x[0]))

    if parameter_set == "with_gamma":
        if gamma_range is None:
            raise InferenceError("with_gamma needs gamma_range")
        lo, hi = gamma_range
        f = lambda p: kl_divergence(true_model, SubjectiveModel(p[0], p[1], s2, s2, p[2]), c)
        gs = (lo, hi) if hi > lo else (lo,)
        starts = [(m1 + a, m2 + b, g) for a in offsets for b in offsets for g in gs]
        bounds = [(None, None), (None, None), (lo, hi)]
        r = _nelder_mead(f, starts, bounds=bounds)
        return PseudoTrueEstimate(float(r.x[0]), float(r.x[1]), gamma_star=float(r.x[2]))

    raise InferenceError(f"unknown parameter set {parameter_set!r}")
