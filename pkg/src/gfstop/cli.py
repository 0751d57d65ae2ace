"""Command-line scenario runner.

    gfstop <command> [flags] [--config file.json] [--out dir] [--seed n]

Every run writes <out>/<name>.csv and <out>/<name>.meta.json. The sidecar holds
the fully resolved config, so `gfstop <command> --config <name>.meta.json`
reproduces the CSV byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from . import dynamics as dyn
from . import inference as inf
from . import montecarlo as mc
from . import multiperiod as mp
from . import mom
from . import sequential as seq
from .stage_game import (
    CostDraws,
    SearchWithRecall,
    StageGame,
    TrueModel,
    WaitCost,
    objective_cutoff,
)

USAGE_EXIT = 2
FAILURE_EXIT = 1


class UsageError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


# --------------------------------------------------------------------------
# value coercion


def real(v) -> float:
    if isinstance(v, bool):
        raise ValueError("expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    s = str(v).strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    x = float(s)
    if math.isnan(x):
        raise ValueError("nan is not allowed")
    return x


def integer(v) -> int:
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError("expected an integer")
        return int(v)
    return int(str(v).strip())


def text(v) -> str:
    return str(v)


def real_or_tag(*tags: str) -> Callable:
    def conv(v):
        if isinstance(v, str) and v.strip().lower() in tags:
            return v.strip().lower()
        return real(v)

    conv.__name__ = "real_or_tag"
    return conv


def matrix(v):
    if v is None:
        return None
    if isinstance(v, str):
        v = json.loads(v)
    return [[real(x) for x in row] for row in v]


# Param(name, convert, default, help, is_list, choices)
class Param:
    def __init__(self, name, conv, default, help="", many=False, choices=None):
        self.name, self.conv, self.default, self.help = name, conv, default, help
        self.many, self.choices = many, choices

    def coerce(self, v):
        if v is None:
            return None
        if self.many:
            vals = v if isinstance(v, (list, tuple)) else [v]
            out = [self.conv(x) for x in vals]
            if not out:
                raise ValueError("needs at least one value")
        else:
            out = self.conv(v)
        if self.choices:
            for x in out if self.many else [out]:
                if x not in self.choices:
                    raise ValueError(f"must be one of {', '.join(self.choices)}")
        return out


TRUTH = [
    Param("mu1_true", real, 0.0, "true first-period mean"),
    Param("mu2_true", real, 0.0, "true second-period mean"),
    Param("sd", real, 1.0, "true standard deviation"),
    Param("gamma_true", real, 0.0, "true serial correlation parameter"),
]
GAME = [
    Param("game", text, "search-recall", "stage game", choices=("search-recall", "wait-cost", "cost-draws")),
    Param("q", real, 0.0, "recall weight for search-recall"),
    Param("wait_cost", real, 0.0, "waiting cost for wait-cost"),
]
GRID = [
    Param("grid_lo", real, -3.0, "lower end of the mu2 grid"),
    Param("grid_hi", real, 1.0, "upper end of the mu2 grid"),
    Param("grid_n", integer, 401, "mu2 grid nodes"),
]

COMMANDS: Dict[str, List[Param]] = {
    "pseudo-true": TRUTH
    + [
        Param("gamma", real, 0.5, "subjective gamma"),
        Param("c", real, [1.0], "cutoff(s)", many=True),
        Param("variant", text, "basic", "estimator", choices=("basic", "mean-var", "cost")),
    ],
    "kl-oracle": TRUTH
    + [
        Param("gamma", real, 0.5, "subjective gamma"),
        Param("c", real, [1.0], "cutoff(s)", many=True),
        Param(
            "parameter_set",
            text,
            "means",
            "free parameters",
            choices=("means", "means_and_vars", "diagonal", "with_gamma"),
        ),
        Param("gamma_lo", real, None, "lower gamma bound for with_gamma"),
        Param("gamma_hi", real, None, "upper gamma bound for with_gamma"),
    ],
    "steady-state": TRUTH[:3]
    + [
        Param("game", text, "search-recall", "stage game", choices=("search-recall", "wait-cost", "cost-draws")),
        Param("q", real, [0.0], "recall weight(s)", many=True),
        Param("wait_cost", real, 0.0, "waiting cost for wait-cost"),
        Param("gamma", real, [0.5], "subjective gamma(s)", many=True),
        Param("eta", real, 0.0, "reference-dependence weight (0 = off)"),
    ],
    "dynamics": TRUTH[:3]
    + GAME
    + [
        Param("gamma", real, 0.5, "subjective gamma"),
        Param("c0", real_or_tag("objective"), "objective", "generation-0 cutoff or 'objective'"),
        Param("T", integer, 50, "generations"),
        Param("env", text, ["baseline", "auxiliary"], "environments", many=True,
              choices=("baseline", "auxiliary", "unknown_var")),
    ],
    "compare": TRUTH[:3]
    + [
        Param("game", text, "search-recall", "base stage game", choices=("search-recall", "cost-draws")),
        Param("q", real, 0.0, "recall weight"),
        Param("gamma", real, 0.5, "subjective gamma"),
        Param("c0", real_or_tag("objective"), "objective", "generation-0 cutoff or 'objective'"),
        Param("T", integer, 20, "generations"),
        Param("a_kind", text, "known_var", "society A",
              choices=("known_var", "unknown_var", "payoff_variant", "selection_mix")),
        Param("b_kind", text, "unknown_var", "society B",
              choices=("known_var", "unknown_var", "payoff_variant", "selection_mix")),
        Param("a_alpha", real, 0.0, "selection-neglect share for A"),
        Param("b_alpha", real, 0.0, "selection-neglect share for B"),
        Param("a_wait_cost", real, 0.0, "waiting cost added to A's game"),
        Param("b_wait_cost", real, 0.0, "waiting cost added to B's game"),
    ],
    "sequential": TRUTH
    + GAME
    + GRID
    + [
        Param("gamma", real, 0.5, "subjective gamma"),
        Param("T", integer, 5000, "rounds per run"),
        Param("runs", integer, 1, "independent runs; run r uses seed + r"),
        Param("record", text, "final", "output rows", choices=("final", "rounds")),
    ],
    "montecarlo": TRUTH
    + GRID
    + [
        Param("experiment", text, "pessimism", "experiment", choices=("pessimism", "outcome", "map")),
        Param("gamma", real, 0.5, "subjective gamma"),
        Param("c", real, [1.0], "cutoff(s)", many=True),
        Param("N", integer, [100], "dataset size(s)", many=True),
        Param("reps", integer, 1000, "replications"),
    ],
    "multiperiod": [
        Param("L", integer, 3, "periods"),
        Param("alpha", real, 0.5, "alpha of the alpha-delta family"),
        Param("delta", real, 0.0, "delta of the alpha-delta family"),
        Param("gamma_matrix", matrix, None, "full L x L gamma as JSON (overrides alpha, delta)"),
        Param("mu_true", real, None, "true means (default zeros)", many=True),
        Param("sd", real, 1.0, "standard deviation"),
        Param("cutoffs", real, [-2.0, 0.0], "constant cutoffs c_1..c_{L-1}", many=True),
    ],
    "mom": [
        Param("family", text, "gaussian", "feasible family", choices=("gaussian", "gumbel", "beta")),
        Param("family_sd", real, 1.0, "Gaussian family sd"),
        Param("family_gamma", real, 0.5, "Gaussian family gamma"),
        Param("gumbel_alpha", real, -0.5, "Gumbel dependence parameter"),
        Param("m1", real, None, "true X1 mean (family default if omitted)"),
        Param("m2", real, None, "true X2 mean (family default if omitted)"),
        Param("mode", text, "estimate", "what to run", choices=("estimate", "dynamics")),
        Param("c", real, [1.0], "cutoff(s) for estimate", many=True),
        Param("c0", real, 1.0, "generation-0 cutoff for dynamics"),
        Param("T", integer, 10, "generations for dynamics"),
        Param("q", real, 0.0, "recall weight of the stage game (must keep u2 linear)"),
    ],
    "freddy": [
        Param("n", integer, 4, "balls in the urn (multiple of 4)"),
        Param("kappa", real, None, "share of biased analysts; reports q_a* when given"),
    ],
}

COMMON = [
    Param("seed", integer, 0, "random seed"),
    Param("out", text, ".", "output directory"),
    Param("name", text, None, "output file stem (default: command)"),
]


# --------------------------------------------------------------------------
# formatting


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v)


def jsonable(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return jsonable(v.item())
    return v


def write_csv(path: Path, header: Sequence[str], rows: List[Dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r.get(h)) for h in header])


# --------------------------------------------------------------------------
# helpers


def threads() -> int:
    raw = os.environ.get("GFSTOP_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError("GFSTOP_THREADS", f"must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError("GFSTOP_THREADS", f"must be a positive integer, got {raw!r}")
    return n


def pmap(fn, items: list) -> list:
    """Ordered map over a process pool capped by GFSTOP_THREADS."""
    workers = min(threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _truth(cfg) -> TrueModel:
    return TrueModel(cfg["mu1_true"], cfg["mu2_true"], cfg["sd"], cfg.get("gamma_true", 0.0))


def _game(kind: str, q: float, wait: float) -> StageGame:
    if kind == "cost-draws":
        return CostDraws()
    base = SearchWithRecall(q)
    if kind == "wait-cost":
        return WaitCost(base, wait)
    return base


def _require(cond: bool, field: str, msg: str) -> None:
    if not cond:
        raise UsageError(field, msg)


def _check_common(cfg) -> None:
    if "sd" in cfg:
        _require(cfg["sd"] > 0 and math.isfinite(cfg["sd"]), "sd", "must be positive and finite")
    for k in ("mu1_true", "mu2_true", "gamma_true"):
        if k in cfg:
            _require(math.isfinite(cfg[k]), k, "must be finite")
    if "q" in cfg:
        for q in cfg["q"] if isinstance(cfg["q"], list) else [cfg["q"]]:
            _require(0.0 <= q < 1.0, "q", "must lie in [0, 1)")
    if "wait_cost" in cfg:
        _require(cfg["wait_cost"] >= 0, "wait_cost", "must be >= 0")
    if "T" in cfg:
        _require(cfg["T"] >= 1, "T", "must be >= 1")
    if "grid_n" in cfg:
        _require(cfg["grid_n"] >= 2, "grid_n", "must be >= 2")
        _require(cfg["grid_lo"] < cfg["grid_hi"], "grid_lo", "must be below grid_hi")


def _positive_gamma(cfg, field="gamma"):
    vals = cfg[field] if isinstance(cfg[field], list) else [cfg[field]]
    for g in vals:
        _require(g > 0 and math.isfinite(g), field, "must be positive and finite")


def _c0(cfg, game, truth) -> float:
    return objective_cutoff(game, truth) if cfg["c0"] == "objective" else cfg["c0"]


# --------------------------------------------------------------------------
# commands: each returns (header, rows, summary)


def cmd_pseudo_true(cfg):
    _positive_gamma(cfg)
    t = _truth(cfg)
    rows = []
    for c in cfg["c"]:
        if cfg["variant"] == "basic":
            e = inf.pseudo_true(t, c, cfg["gamma"])
        elif cfg["variant"] == "mean-var":
            e = inf.pseudo_true_mean_var(t, c, cfg["gamma"])
        else:
            e = inf.pseudo_true_cost(t, c, cfg["gamma"])
        rows.append({"c": c, "mu1_star": e.mu1_star, "mu2_star": e.mu2_star,
                     "var1_star": e.var1_star, "var2_star": e.var2_star})
    return ["c", "mu1_star", "mu2_star", "var1_star", "var2_star"], rows, {}


def _closed_form(t, c, cfg):
    ps, g = cfg["parameter_set"], cfg["gamma"]
    if ps == "means":
        return inf.pseudo_true(t, c, g)
    if ps == "means_and_vars":
        return inf.pseudo_true_mean_var(t, c, g)
    if ps == "diagonal":
        return inf.pseudo_true_constrained(t.mu1_true, t.sd, c, g)
    return inf.pseudo_true_gamma_range(t, c, cfg["gamma_lo"], cfg["gamma_hi"])


def cmd_kl_oracle(cfg):
    _positive_gamma(cfg)
    if cfg["parameter_set"] == "with_gamma":
        _require(cfg["gamma_lo"] is not None and cfg["gamma_hi"] is not None, "gamma_lo",
                 "with_gamma needs gamma_lo and gamma_hi")
        _require(0 <= cfg["gamma_lo"] <= cfg["gamma_hi"], "gamma_lo", "need 0 <= gamma_lo <= gamma_hi")
    if cfg["parameter_set"] == "diagonal":
        _require(cfg["mu1_true"] == cfg["mu2_true"], "mu2_true", "diagonal needs mu1_true == mu2_true")
    t = _truth(cfg)
    gr = (cfg["gamma_lo"], cfg["gamma_hi"]) if cfg["parameter_set"] == "with_gamma" else None
    rows = []
    for c in cfg["c"]:
        e = inf.kl_oracle_minimize(t, c, cfg["gamma"], cfg["parameter_set"], gr)
        ref = _closed_form(t, c, cfg)
        rows.append({"c": c, "parameter_set": cfg["parameter_set"], "mu1_star": e.mu1_star, "mu2_star": e.mu2_star,
                     "var1_star": e.var1_star, "var2_star": e.var2_star, "gamma_star": e.gamma_star,
                     "closed_mu2_star": ref.mu2_star, "closed_var2_star": ref.var2_star})
    header = ["c", "parameter_set", "mu1_star", "mu2_star", "var1_star", "var2_star", "gamma_star",
              "closed_mu2_star", "closed_var2_star"]
    return header, rows, {}


def _steady_cell(args):
    cfg, q, g = args
    t = _truth(cfg)
    game = _game(cfg["game"], q, cfg["wait_cost"])
    ss = dyn.steady_state(game, t, g)
    row = {"q": q, "gamma": g, "mu2_inf": ss.mu2_inf, "c_inf": ss.c_inf,
           "c_objective": objective_cutoff(game, t), "iterations": ss.iterations, "residual": ss.residual}
    if cfg["eta"] > 0:
        rd = dyn.steady_state_ref_dependence(game, t, g, cfg["eta"])
        row.update({"mu2_inf_eta": rd.mu2_inf, "c_inf_eta": rd.c_inf, "factor_eta": rd.factor})
    return row


def cmd_steady_state(cfg):
    _positive_gamma(cfg)
    _require(cfg["eta"] >= 0, "eta", "must be >= 0")
    cells = [(cfg, q, g) for q in cfg["q"] for g in cfg["gamma"]]
    rows = pmap(_steady_cell, cells)
    header = ["q", "gamma", "mu2_inf", "c_inf", "c_objective", "iterations", "residual",
              "mu2_inf_eta", "c_inf_eta", "factor_eta"]
    return header, rows, {}


def cmd_dynamics(cfg):
    _positive_gamma(cfg)
    t = _truth(cfg)
    game = _game(cfg["game"], cfg["q"], cfg["wait_cost"])
    c0 = _c0(cfg, game, t)
    rows = []
    for env in cfg["env"]:
        if env == "unknown_var":
            tr = dyn.run_generations_mean_var(game, t, cfg["gamma"], c0, cfg["T"])
        else:
            tr = dyn.run_generations(env, game, t, cfg["gamma"], c0, cfg["T"])
        rows.extend(tr.rows())
    ss = dyn.steady_state(game, t, cfg["gamma"])
    header = ["t", "env", "mu1", "mu2", "var2", "cutoff", "welfare_loss"]
    return header, rows, {"c0": c0, "mu2_inf": ss.mu2_inf, "c_inf": ss.c_inf}


def _society(kind, alpha, wait, cfg):
    g = _game(cfg["game"], cfg["q"], 0.0)
    if wait > 0:
        if cfg["game"] == "cost-draws":
            raise UsageError("a_wait_cost", "waiting cost wraps search-recall games only")
        g = WaitCost(g, wait)
    return dyn.SocietySpec(kind, g, alpha)


def cmd_compare(cfg):
    _positive_gamma(cfg)
    for k in ("a_alpha", "b_alpha"):
        _require(0 <= cfg[k] < 1, k, "must lie in [0, 1)")
    for k in ("a_wait_cost", "b_wait_cost"):
        _require(cfg[k] >= 0, k, "must be >= 0")
    t = _truth(cfg)
    a = _society(cfg["a_kind"], cfg["a_alpha"], cfg["a_wait_cost"], cfg)
    b = _society(cfg["b_kind"], cfg["b_alpha"], cfg["b_wait_cost"], cfg)
    c0 = _c0(cfg, _game(cfg["game"], cfg["q"], 0.0), t)
    cmp = dyn.compare_societies(a, b, t, cfg["gamma"], c0, cfg["T"])
    rows = []
    for i in range(len(cmp.a)):
        rows.append({"t": cmp.a.t[i], "a_mu2": cmp.a.mu2[i], "b_mu2": cmp.b.mu2[i],
                     "a_cutoff": cmp.a.cutoff[i], "b_cutoff": cmp.b.cutoff[i],
                     **{k: v[i] for k, v in cmp.checks.items()}})
    header = ["t", "a_mu2", "b_mu2", "a_cutoff", "b_cutoff", "mu2_b_gt_a", "cutoff_b_gt_a", "mu2_equal"]
    return header, rows, {"c0": c0}


def _sequential_run(args):
    cfg, seed = args
    t = _truth(cfg)
    game = _game(cfg["game"], cfg["q"], cfg["wait_cost"])
    prior = seq.PosteriorGrid.flat(cfg["grid_lo"], cfg["grid_hi"], cfg["grid_n"], t.mu1_true)
    return seq.simulate_sequential(game, t, cfg["gamma"], prior, cfg["T"], seed)


def cmd_sequential(cfg):
    _positive_gamma(cfg)
    _require(cfg["runs"] >= 1, "runs", "must be >= 1")
    t = _truth(cfg)
    game = _game(cfg["game"], cfg["q"], cfg["wait_cost"])
    ss = dyn.steady_state(game, t, cfg["gamma"])
    runs = pmap(_sequential_run, [(cfg, cfg["seed"] + r) for r in range(cfg["runs"])])
    rows = []
    if cfg["record"] == "rounds":
        for run in runs:
            for r in run.rows():
                rows.append({"seed": run.seed, **r})
        header = ["seed", "t", "cutoff", "posterior_mean2", "x1", "x2"]
    else:
        for run in runs:
            rows.append({"seed": run.seed, "T": cfg["T"], "cutoff_T": run.cutoff[-1],
                         "posterior_mean2_T": run.posterior_mean2[-1], "c_inf": ss.c_inf, "mu2_inf": ss.mu2_inf,
                         "abs_cutoff_gap": abs(run.cutoff[-1] - ss.c_inf),
                         "abs_mean_gap": abs(run.posterior_mean2[-1] - ss.mu2_inf),
                         "flags": "; ".join(run.flags)})
        header = ["seed", "T", "cutoff_T", "posterior_mean2_T", "c_inf", "mu2_inf", "abs_cutoff_gap",
                  "abs_mean_gap", "flags"]
    gaps_c = [abs(r.cutoff[-1] - ss.c_inf) for r in runs]
    gaps_m = [abs(r.posterior_mean2[-1] - ss.mu2_inf) for r in runs]
    summary = {"median_abs_cutoff_gap": float(np.median(gaps_c)), "median_abs_mean_gap": float(np.median(gaps_m)),
               "c_inf": ss.c_inf, "mu2_inf": ss.mu2_inf}
    return header, rows, summary


def _mc_cell(args):
    cfg, c, n = args
    t = _truth(cfg)
    if cfg["experiment"] == "pessimism":
        below, above = mc.mc_pessimism_experiment(n, cfg["reps"], t, c, cfg["gamma"], cfg["seed"])
        return {"c": c, "N": n, "reps": cfg["reps"], "frac_mu2_below": below, "frac_var2_above": above}
    if cfg["experiment"] == "map":
        e = mc.map_estimate(mc.sample_histories(t, c, n, cfg["seed"]), cfg["gamma"], "means_and_vars")
        return {"c": c, "N": n, "mu1_hat": e.mu1_star, "mu2_hat": e.mu2_star,
                "var1_hat": e.var1_star, "var2_hat": e.var2_star}
    grid = seq.PosteriorGrid.flat(cfg["grid_lo"], cfg["grid_hi"], cfg["grid_n"], t.mu1_true)
    m, modes = mc.outcome_history_inference(t, c, n, grid, cfg["reps"], cfg["seed"], cfg["gamma"])
    ref = inf.mu2_star(t, c, cfg["gamma"])
    return {"c": c, "N": n, "reps": cfg["reps"], "mean_mode": m, "sd_mode": float(np.std(modes)),
            "mu2_star": ref, "gap": m - ref}


def cmd_montecarlo(cfg):
    _require(cfg["gamma"] >= 0, "gamma", "must be >= 0")
    _require(cfg["reps"] >= 1, "reps", "must be >= 1")
    for n in cfg["N"]:
        _require(n >= 1, "N", "must be >= 1")
    rows = pmap(_mc_cell, [(cfg, c, n) for c in cfg["c"] for n in cfg["N"]])
    header = {
        "pessimism": ["c", "N", "reps", "frac_mu2_below", "frac_var2_above"],
        "map": ["c", "N", "mu1_hat", "mu2_hat", "var1_hat", "var2_hat"],
        "outcome": ["c", "N", "reps", "mean_mode", "sd_mode", "mu2_star", "gap"],
    }[cfg["experiment"]]
    return header, rows, {}


def cmd_multiperiod(cfg):
    L = cfg["L"]
    _require(L >= 2, "L", "must be >= 2")
    mu = cfg["mu_true"] if cfg["mu_true"] is not None else [0.0] * L
    _require(len(mu) == L, "mu_true", f"needs {L} values")
    _require(len(cfg["cutoffs"]) == L - 1, "cutoffs", f"needs {L - 1} values")
    verdict = None
    if cfg["gamma_matrix"] is None:
        _require(cfg["alpha"] > 0, "alpha", "must be > 0")
        _require(0 <= cfg["delta"] <= 1, "delta", "must lie in [0, 1]")
        spec = mp.make_spec(L, cfg["cutoffs"], mu_true=mu, sd=cfg["sd"], alpha=cfg["alpha"], delta=cfg["delta"])
        verdict = mp.alpha_delta_classify(cfg["alpha"], cfg["delta"], L)
    else:
        spec = mp.make_spec(L, cfg["cutoffs"], gamma=cfg["gamma_matrix"], mu_true=mu, sd=cfg["sd"])
    it = mp.pseudo_true_L(spec, "iterative")
    pa = mp.pseudo_true_L(spec, "paths")
    rows = [{"period": i + 1, "mu_true": mu[i], "mu_iterative": it[i], "mu_paths": pa[i],
             "path_sum_to_1": mp.path_weight_sum(spec, i + 1, 1) if i > 0 else None, "verdict": verdict}
            for i in range(L)]
    header = ["period", "mu_true", "mu_iterative", "mu_paths", "path_sum_to_1", "verdict"]
    return header, rows, {"verdict": verdict}


_MOM_DEFAULTS = {"gaussian": (0.0, 0.0), "gumbel": (1.0, 1.0), "beta": (0.5, 0.5)}


def cmd_mom(cfg):
    fam_name = cfg["family"]
    if fam_name == "gaussian":
        fam = mom.GaussianFamily(cfg["family_sd"], cfg["family_gamma"])
    elif fam_name == "gumbel":
        fam = mom.GumbelBivariateExponential(cfg["gumbel_alpha"])
    else:
        fam = mom.BetaFamily()
    d1, d2 = _MOM_DEFAULTS[fam_name]
    tm = mom.TrueMoments(d1 if cfg["m1"] is None else cfg["m1"], d2 if cfg["m2"] is None else cfg["m2"])
    if cfg["mode"] == "estimate":
        rows = []
        for c in cfg["c"]:
            t1, t2 = mom.mom_estimate(fam, tm, c)
            rows.append({"c": c, "theta1": t1, "theta2": t2})
        return ["c", "theta1", "theta2"], rows, {}
    tr = mom.mom_dynamics(fam, SearchWithRecall(cfg["q"]), tm, cfg["c0"], cfg["T"])
    rows = [{"t": tr.t[i], "theta1": tr.mu1[i], "theta2": tr.mu2[i], "cutoff": tr.cutoff[i],
             "diagnostic": tr.diagnostics[i]} for i in range(len(tr))]
    return ["t", "theta1", "theta2", "cutoff", "diagnostic"], rows, {}


def cmd_freddy(cfg):
    try:
        spec = mc.UrnSpec(cfg["n"])
    except mc.MonteCarloError as e:
        raise UsageError("n", str(e))
    kappa = cfg["kappa"]
    if kappa is not None:
        _require(0 < kappa <= 1, "kappa", "must lie in (0, 1]")
        _require(cfg["n"] == 4, "kappa", "q_a* is only derived for n = 4")
    table, ll, q = mc.freddy_urn(spec, kappa)
    rows = []
    for th, row in table.items():
        r = {"theta": th, "theta_float": float(th), "expected_loglik": ll[th]}
        for s in mc.SIGNALS:
            key = "b_empty" if s == "b_" else s
            r[key] = row[s]
            r[key + "_float"] = float(row[s])
        rows.append(r)
    header = ["theta", "theta_float"]
    for s in ("aa", "ab", "ba", "bb", "b_empty"):
        header += [s, s + "_float"]
    header.append("expected_loglik")
    summary = {} if q is None else {"q_a_star": q, "q_a_star_float": float(q)}
    return header, rows, summary


HANDLERS = {
    "pseudo-true": cmd_pseudo_true,
    "kl-oracle": cmd_kl_oracle,
    "steady-state": cmd_steady_state,
    "dynamics": cmd_dynamics,
    "compare": cmd_compare,
    "sequential": cmd_sequential,
    "montecarlo": cmd_montecarlo,
    "multiperiod": cmd_multiperiod,
    "mom": cmd_mom,
    "freddy": cmd_freddy,
}


# --------------------------------------------------------------------------
# parsing and dispatch


class _Parser(argparse.ArgumentParser):
    # negative values such as -1e-3 and -inf are values, not flags
    _NEG = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$|^-inf(inity)?$", re.IGNORECASE)

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self._negative_number_matcher = self._NEG

    def error(self, message):
        raise UsageError("argv", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gfstop", description="Gambler's-fallacy stopping-problem scenario runner.")
    p.add_argument("--version", action="version", version=f"gfstop {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, params in COMMANDS.items():
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON config or a .meta.json sidecar; flags override it")
        for prm in params + COMMON:
            flag = "--" + prm.name.replace("_", "-")
            kw = {"dest": prm.name, "help": f"{prm.help} (default: {jsonable(prm.default)})"}
            if prm.many:
                kw["nargs"] = "+"
            if prm.choices:
                kw["metavar"] = "{" + ",".join(prm.choices) + "}"
            sp.add_argument(flag, **kw)
    return p


def load_config(path: str, command: str) -> Dict[str, Any]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError("config", f"cannot read {path}: {e}")
    if not isinstance(data, dict):
        raise UsageError("config", "top level must be a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        if data.get("command") not in (None, command):
            raise UsageError("config", f"sidecar was written by '{data['command']}', not '{command}'")
        data = data["config"]
    data = dict(data)
    if data.pop("command", command) != command:
        raise UsageError("config", f"config is for another command, not '{command}'")
    return data


def resolve(command: str, flags: Dict[str, Any]) -> Dict[str, Any]:
    params = {p.name: p for p in COMMANDS[command] + COMMON}
    cfg = {name: p.default for name, p in params.items()}
    layers = []
    if flags.get("config"):
        layers.append(load_config(flags["config"], command))
    layers.append({k: v for k, v in flags.items() if k not in ("config", "command")})
    for layer in layers:
        for k, v in layer.items():
            key = k.replace("-", "_")
            if key not in params:
                raise UsageError(key, f"unknown field for '{command}'")
            try:
                cfg[key] = params[key].coerce(v)
            except (ValueError, TypeError, json.JSONDecodeError) as e:
                raise UsageError(key, f"invalid value {v!r}: {e}")
    if cfg["name"] is None:
        cfg["name"] = command
    return cfg


def _error(kind: str, message: str, field: Optional[str], command: Optional[str], module: Optional[str] = None):
    rec = {"status": "error", "error": kind, "message": message, "command": command}
    if field is not None:
        rec["field"] = field
    if module is not None:
        rec["module"] = module
    print(json.dumps(rec), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as e:
        _error("usage", str(e), e.field, None)
        return USAGE_EXIT
    except SystemExit as e:  # --help, --version
        return int(e.code) if e.code else 0
    flags = vars(ns)
    command = flags["command"]
    try:
        cfg = resolve(command, flags)
        _check_common(cfg)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        header, rows, summary = HANDLERS[command](cfg)
        wall = time.perf_counter() - t0
        csv_path = out / f"{cfg['name']}.csv"
        meta_path = out / f"{cfg['name']}.meta.json"
        write_csv(csv_path, header, rows)
        meta = {
            "command": command,
            "config": jsonable(cfg),
            "versions": {"gfstop": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_time_s": wall,
            "csv": csv_path.name,
            "rows": len(rows),
            "summary": jsonable(summary),
        }
        meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    except UsageError as e:
        _error("usage", str(e), e.field, command)
        return USAGE_EXIT
    except OSError as e:
        _error("io", str(e), None, command)
        return FAILURE_EXIT
    except (ValueError, ArithmeticError, RuntimeError) as e:
        _error("numerical", str(e), None, command, type(e).__module__)
        return FAILURE_EXIT
    print(json.dumps({"status": "ok", "command": command, "csv": str(csv_path), "meta": str(meta_path),
                      "rows": len(rows), "summary": jsonable(summary)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
