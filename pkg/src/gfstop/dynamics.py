"""Generation-by-generation learning: iteration map, steady states, traces, welfare."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import gauss
from .inference import InferenceError, mu2_star, neglecter_cutoff, pseudo_true_mean_var
from .stage_game import (
    COST,
    StageGame,
    SubjectiveModel,
    TrueModel,
    objective_cutoff,
    objective_value,
    optimal_cutoff,
)

AUXILIARY = "auxiliary"
BASELINE = "baseline"


class NonContractionError(RuntimeError):
    """Fixed-point iteration failed; the contraction condition is likely violated."""


@dataclass
class GenerationTrace:
    env: str
    t: List[int] = field(default_factory=list)
    mu1: List[float] = field(default_factory=list)
    mu2: List[float] = field(default_factory=list)
    var2: List[Optional[float]] = field(default_factory=list)
    cutoff: List[float] = field(default_factory=list)
    welfare_loss: List[float] = field(default_factory=list)

    def append(self, t, mu1, mu2, cutoff, loss, var2=None):
        self.t.append(t)
        self.mu1.append(mu1)
        self.mu2.append(mu2)
        self.var2.append(var2)
        self.cutoff.append(cutoff)
        self.welfare_loss.append(loss)

    def __len__(self) -> int:
        return len(self.t)

    def rows(self):
        for i in range(len(self)):
            yield {
                "t": self.t[i],
                "env": self.env,
                "mu1": self.mu1[i],
                "mu2": self.mu2[i],
                "var2": self.var2[i],
                "cutoff": self.cutoff[i],
                "welfare_loss": self.welfare_loss[i],
            }


@dataclass(frozen=True)
class SteadyState:
    mu2_inf: float
    c_inf: float
    iterations: int
    residual: float


def _belief_model(true_model: TrueModel, mu2: float, gamma: float, var2: Optional[float] = None) -> SubjectiveModel:
    v = true_model.sd**2
    return SubjectiveModel(true_model.mu1_true, mu2, v, v if var2 is None else var2, gamma)


def _mu2_from_cutoff(game: StageGame, true_model: TrueModel, c: float, gamma: float) -> float:
    if game.direction == COST:
        e = gauss.truncated_upper_moments(true_model.x1_law, c)[0]
        return true_model.mu2_true - (gamma - true_model.gamma_true) * (true_model.mu1_true - e)
    return mu2_star(true_model, c, gamma)


def _pass_prob(game: StageGame, true_model: TrueModel, c: float) -> float:
    p = gauss.cdf(c, true_model.mu1_true, true_model.sd)
    return 1.0 - p if game.direction == COST else p


def cutoff_for(game: StageGame, true_model: TrueModel, mu2: float, gamma: float, var2: Optional[float] = None) -> float:
    return optimal_cutoff(game, _belief_model(true_model, mu2, gamma, var2))


def iteration_map(mu2: float, game: StageGame, true_model: TrueModel, gamma: float) -> float:
    """One generation of learning: belief -> induced cutoff -> censored inference."""
    if not gamma > 0:
        raise InferenceError(f"gamma must be positive, got {gamma}")
    return _mu2_from_cutoff(game, true_model, cutoff_for(game, true_model, mu2, gamma), gamma)


def _iterate(fn, x0: float, tol: float, max_iter: int) -> Tuple[float, int, float]:
    x = x0
    theta = 1.0
    prev_res = math.inf
    for k in range(1, max_iter + 1):
        fx = fn(x)
        res = abs(fx - x)
        if not math.isfinite(fx):
            raise NonContractionError(f"iteration produced a non-finite value from {x!r}")
        if res <= tol:
            return fx, k, abs(fn(fx) - fx)
        if res > prev_res:
            # oscillation or growth: fall back to damped steps
            theta *= 0.5
            if theta < 1e-6:
                raise NonContractionError("residuals keep growing even with heavy damping")
        prev_res = res
        x = x + theta * (fx - x)
    raise NonContractionError(f"no convergence after {max_iter} iterations (residual {prev_res:.3e})")


def steady_state(
    game: StageGame, true_model: TrueModel, gamma: float, tol: float = 1e-10, max_iter: int = 10000
) -> SteadyState:
    fn = lambda m: iteration_map(m, game, true_model, gamma)
    m0 = true_model.mu2_true
    mu, it, res = _iterate(fn, m0, tol, max_iter)
    for start in (m0 - 5 * true_model.sd, m0 + 5 * true_model.sd):
        other, _, _ = _iterate(fn, start, tol, max_iter)
        if abs(other - mu) > 10 * tol:
            raise NonContractionError(
                f"fixed points from different starts disagree ({mu!r} vs {other!r}); contraction condition likely fails"
            )
    return SteadyState(mu, cutoff_for(game, true_model, mu, gamma), it, res)


def welfare_loss(c: float, game: StageGame, true_model: TrueModel) -> float:
    """Objective payoff shortfall of cutoff c relative to the objectively optimal cutoff."""
    return _loss_fn(game, true_model)(c)


def _loss_fn(game: StageGame, true_model: TrueModel):
    c_obj = objective_cutoff(game, true_model)
    best = objective_value(c_obj, game, true_model)

    def loss(c: float) -> float:
        if c == c_obj:
            return 0.0
        return max(best - objective_value(c, game, true_model), 0.0)

    return loss


def run_generations(
    env: str,
    game: StageGame,
    true_model: TrueModel,
    gamma: float,
    c0: float,
    T: int,
    mix: Optional[Tuple[float, float]] = None,
) -> GenerationTrace:
    """Deterministic large-generation dynamics starting from generation-0 cutoff c0.

    auxiliary: each generation learns from its immediate predecessors only.
    baseline: each generation pools all earlier generations with equal weights.
    mix=(alpha, c_extra) makes an alpha share of every predecessor generation from
    generation 1 on use the fixed cutoff c_extra (selection neglecters); auxiliary only.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if env not in (AUXILIARY, BASELINE):
        raise ValueError(f"unknown environment {env!r}")
    if mix is not None and env != AUXILIARY:
        raise ValueError("population mixes are supported in the auxiliary environment only")
    trace = GenerationTrace(env)
    loss = _loss_fn(game, true_model)
    m1 = true_model.mu1_true
    # per past generation: (observation probability, mu2* from its cutoff)
    pooled_w: List[float] = []
    pooled_v: List[float] = []

    def record(c):
        p = _pass_prob(game, true_model, c)
        pooled_w.append(p)
        pooled_v.append(_mu2_from_cutoff(game, true_model, c, gamma) if p > 0 else 0.0)

    record(c0)
    for t in range(1, T + 1):
        if env == AUXILIARY:
            p, v = pooled_w[-1], pooled_v[-1]
            if p == 0:
                raise InferenceError("predecessor cutoff admits no second-period observations")
            ws, vs = [p], [v]
        else:
            ws, vs = pooled_w, pooled_v
        num = sum(w * v for w, v in zip(ws, vs))
        den = sum(ws)
        if mix is not None and t >= 2:
            alpha, c_extra = mix
            pe = _pass_prob(game, true_model, c_extra)
            num = (1.0 - alpha) * num + alpha * pe * _mu2_from_cutoff(game, true_model, c_extra, gamma)
            den = (1.0 - alpha) * den + alpha * pe
        if den <= 0:
            raise InferenceError("no second-period observations in the pooled data")
        mu2 = num / den
        c = cutoff_for(game, true_model, mu2, gamma)
        trace.append(t, m1, mu2, c, loss(c))
        record(c)
    return trace


def run_generations_mean_var(game: StageGame, true_model: TrueModel, gamma: float, c0: float, T: int) -> GenerationTrace:
    """Auxiliary dynamics when agents also estimate the second-period variance."""
    if game.direction == COST:
        raise ValueError("mean-variance dynamics are implemented for benefit games")
    trace = GenerationTrace("unknown_var")
    loss = _loss_fn(game, true_model)
    c = c0
    for t in range(1, T + 1):
        est = pseudo_true_mean_var(true_model, c, gamma)
        c = cutoff_for(game, true_model, est.mu2_star, gamma, est.var2_star)
        trace.append(t, est.mu1_star, est.mu2_star, c, loss(c), est.var2_star)
    return trace


# --------------------------------------------------------------------------
# society comparisons


@dataclass(frozen=True)
class SocietySpec:
    """kind: known_var | unknown_var | payoff_variant | selection_mix."""

    kind: str
    game: StageGame
    alpha: float = 0.0


@dataclass
class Comparison:
    a: GenerationTrace
    b: GenerationTrace
    checks: Dict[str, List[bool]]


def _society_trace(spec: SocietySpec, true_model: TrueModel, gamma: float, c0: float, T: int) -> GenerationTrace:
    if spec.kind in ("known_var", "payoff_variant"):
        tr = run_generations(AUXILIARY, spec.game, true_model, gamma, c0, T)
    elif spec.kind == "unknown_var":
        tr = run_generations_mean_var(spec.game, true_model, gamma, c0, T)
    elif spec.kind == "selection_mix":
        mix = None
        if spec.alpha > 0:
            mix = (spec.alpha, neglecter_cutoff(true_model, gamma, spec.game))
        tr = run_generations(AUXILIARY, spec.game, true_model, gamma, c0, T, mix=mix)
    else:
        raise ValueError(f"unknown society kind {spec.kind!r}")
    tr.env = spec.kind
    return tr


def compare_societies(
    spec_a: SocietySpec, spec_b: SocietySpec, true_model: TrueModel, gamma: float, c0: float, T: int
) -> Comparison:
    """Paired auxiliary traces with per-generation ordering checks (B above A)."""
    a = _society_trace(spec_a, true_model, gamma, c0, T)
    b = _society_trace(spec_b, true_model, gamma, c0, T)
    checks = {
        "mu2_b_gt_a": [mb > ma for ma, mb in zip(a.mu2, b.mu2)],
        "cutoff_b_gt_a": [cb > ca for ca, cb in zip(a.cutoff, b.cutoff)],
        "mu2_equal": [abs(mb - ma) <= 1e-12 for ma, mb in zip(a.mu2, b.mu2)],
    }
    return Comparison(a, b, checks)


# --------------------------------------------------------------------------
# misattributed reference dependence


@dataclass(frozen=True)
class RefDependenceSteadyState:
    mu1_inf: float
    mu2_inf: float
    c_inf: float
    iterations: int
    factor: float  # (mu2_true - mu2_inf) / (gamma (mu1_true - E[X1 | X1 <= c_inf]))


def ref_dependence_step(
    beliefs: Tuple[float, float], game: StageGame, true_model: TrueModel, gamma: float, eta: float
) -> Tuple[float, float]:
    """Beliefs mu° -> next generation's pseudo-true mu*, with the cutoff set by mu°."""
    from .inference import pseudo_true_ref_dependence

    m1o, m2o = beliefs
    v = true_model.sd**2
    c = optimal_cutoff(game, SubjectiveModel(m1o, m2o, v, v, gamma))
    est = pseudo_true_ref_dependence(true_model, (m1o, m2o), eta, c, gamma)
    return est.mu1_star, est.mu2_star


def steady_state_ref_dependence(
    game: StageGame, true_model: TrueModel, gamma: float, eta: float, tol: float = 1e-12, max_iter: int = 20000
) -> RefDependenceSteadyState:
    """Self-consistent beliefs mu° = mu* of the reference-dependence society.

    The raw update flips sign through the -eta mu° term, so the iteration uses
    mu° <- (mu* + eta mu°)/(1 + eta), which has the same fixed points.
    """
    b = (true_model.mu1_true, true_model.mu2_true)
    for k in range(1, max_iter + 1):
        s = ref_dependence_step(b, game, true_model, gamma, eta)
        nb = tuple((si + eta * bi) / (1.0 + eta) for si, bi in zip(s, b))
        if max(abs(nb[0] - b[0]), abs(nb[1] - b[1])) <= tol:
            b = nb
            break
        b = nb
    else:
        raise NonContractionError("reference-dependence steady state did not converge")
    v = true_model.sd**2
    c = optimal_cutoff(game, SubjectiveModel(b[0], b[1], v, v, gamma))
    e = gauss.truncated_lower_moments(true_model.x1_law, c)[0]
    factor = (true_model.mu2_true - b[1]) / (gamma * (true_model.mu1_true - e))
    return RefDependenceSteadyState(b[0], b[1], c, k, factor)


def welfare_ratio(game: StageGame, true_model: TrueModel, gamma: float) -> float:
    """First-generation loss over long-run loss, starting from the objective cutoff."""
    c_obj = objective_cutoff(game, true_model)
    first = cutoff_for(game, true_model, _mu2_from_cutoff(game, true_model, c_obj, gamma), gamma)
    ss = steady_state(game, true_model, gamma)
    return welfare_loss(first, game, true_model) / welfare_loss(ss.c_inf, game, true_model)
