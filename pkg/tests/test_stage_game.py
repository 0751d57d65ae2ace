import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gfstop import gauss
from gfstop.stage_game import (
    CostDraws,
    SearchWithRecall,
    StageGameError,
    SubjectiveModel,
    Tabulated,
    TrueModel,
    WaitCost,
    objective_cutoff,
    optimal_cutoff,
    strategy_value,
)

M0 = SubjectiveModel(0.0, 0.0, 1.0, 1.0, 0.5)
PHI0 = 0.3989422804014327


def swr_tab(q):
    return Tabulated(lambda x: x, lambda a, b: q * max(a, b) + (1 - q) * b)


def test_continuation_linear_search():
    xs = np.linspace(-3, 3, 13)
    assert np.allclose(SearchWithRecall(0.0).continuation(xs, M0), -0.5 * xs)


def test_continuation_recall_symmetric_point():
    assert float(SearchWithRecall(0.5).continuation(0.0, M0)) == pytest.approx(0.5 * PHI0, abs=1e-12)


def test_continuation_cost_draws():
    assert float(CostDraws().continuation(1.3, M0)) == pytest.approx(0.65, abs=1e-15)


def test_continuation_closed_form_matches_quadrature():
    m = SubjectiveModel(0.2, -0.4, 1.3, 0.8, 0.7)
    xs = np.linspace(-2, 2, 9)
    closed = SearchWithRecall(0.4).continuation(xs, m)
    quad = swr_tab(0.4).continuation(xs, m, nodes=200)
    assert np.allclose(closed, quad, atol=5e-4)  # kinked integrand


@pytest.mark.parametrize("gamma", [0.1, 0.5, 2.0])
def test_cutoff_zero_at_symmetric_model(gamma):
    assert optimal_cutoff(SearchWithRecall(0.0), SubjectiveModel(0, 0, 1, 1, gamma)) == 0.0


def test_cutoff_linear_closed_form():
    c = optimal_cutoff(SearchWithRecall(0.0), SubjectiveModel(0, 1, 1, 1, 0.5))
    assert c == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_generic_solver_agrees_with_linear_shortcut():
    tab = Tabulated(lambda x: x, lambda a, b: b)
    for mu2 in (-1.0, 0.3, 2.0):
        m = SubjectiveModel(0.1, mu2, 1, 1, 0.5)
        assert optimal_cutoff(tab, m) == pytest.approx(optimal_cutoff(SearchWithRecall(0.0), m), abs=1e-9)


def test_cost_draws_cutoff():
    assert optimal_cutoff(CostDraws(), M0) == 0.0
    # cost games: raising mu2 raises the cutoff too
    assert optimal_cutoff(CostDraws(), SubjectiveModel(0, 1, 1, 1, 0.5)) > 0


def test_cost_reflection_identity():
    tab_cost = Tabulated(lambda x: -x, lambda a, b: -b, direction="cost")
    rng = np.random.default_rng(3)
    for mu1, mu2 in rng.normal(size=(10, 2)):
        m = SubjectiveModel(mu1, mu2, 1, 1, 0.5)
        ref = -optimal_cutoff(SearchWithRecall(0.0), m.reflected())
        assert optimal_cutoff(CostDraws(), m) == pytest.approx(ref, abs=1e-12)
        assert optimal_cutoff(tab_cost, m) == pytest.approx(ref, abs=1e-9)


def test_objective_cutoff_examples():
    assert objective_cutoff(SearchWithRecall(0.0), TrueModel()) == 0.0
    assert objective_cutoff(SearchWithRecall(0.0), TrueModel(0.0, -10.0)) == -10.0
    assert objective_cutoff(WaitCost(SearchWithRecall(0.0), 10.0), TrueModel()) == pytest.approx(-10.0)


def test_objective_cutoff_infinite_sentinels():
    always_stop = Tabulated(lambda x: x + 1000.0, lambda a, b: b, probe=False)
    never_stop = Tabulated(lambda x: x - 1000.0, lambda a, b: b, probe=False)
    assert objective_cutoff(always_stop, TrueModel()) == -math.inf
    assert objective_cutoff(never_stop, TrueModel()) == math.inf
    with pytest.raises(StageGameError, match="indifference"):
        optimal_cutoff(always_stop, M0)


def test_strategy_value_examples():
    g = SearchWithRecall(0.0)
    assert strategy_value(math.inf, g, M0) == 0.0
    assert strategy_value(-math.inf, g, M0) == 0.0
    expected = PHI0 + 0.5 * 0.5 * 0.7978845608028654
    assert strategy_value(0.0, g, M0) == pytest.approx(expected, abs=1e-12)


def test_strategy_value_quadrature_matches_closed_form():
    tab = Tabulated(lambda x: x, lambda a, b: b)
    m = SubjectiveModel(0.3, -0.2, 1.2, 0.9, 0.4)
    for c in (-2.0, 0.0, 0.7, math.inf, -math.inf):
        assert strategy_value(c, tab, m) == pytest.approx(strategy_value(c, SearchWithRecall(0.0), m), abs=1e-10)


def test_single_peaked_strategy_value():
    for game in (SearchWithRecall(0.0), SearchWithRecall(0.6), WaitCost(SearchWithRecall(0.3), 0.4)):
        m = SubjectiveModel(0.0, -0.3, 1, 1, 0.5)
        cstar = optimal_cutoff(game, m)
        left = np.linspace(cstar - 3, cstar - 0.01, 40)
        right = np.linspace(cstar + 0.01, cstar + 3, 40)
        vl = [strategy_value(c, game, m) for c in left]
        vr = [strategy_value(c, game, m) for c in right]
        assert np.all(np.diff(vl) > 0)
        assert np.all(np.diff(vr) < 0)
        assert strategy_value(cstar, game, m) >= max(vl[-1], vr[0])


def test_cost_strategy_value_reflects():
    m = SubjectiveModel(0.2, 0.1, 1, 1, 0.5)
    for c in (-1.0, 0.0, 0.5):
        assert strategy_value(c, CostDraws(), m) == pytest.approx(
            strategy_value(-c, SearchWithRecall(0.0), m.reflected()), abs=1e-12
        )


@pytest.mark.parametrize("q", [0.0, 0.3, 0.6, 0.9])
@pytest.mark.parametrize("gamma", [0.2, 0.5, 1.0, 3.0])
def test_cutoff_monotone_and_lipschitz(q, gamma):
    game = SearchWithRecall(q)
    mu2 = np.linspace(-3, 3, 61)
    cs = np.array([optimal_cutoff(game, SubjectiveModel(0, v, 1, 1, gamma)) for v in mu2])
    assert np.all(np.diff(cs) > 0)
    slope = np.diff(cs) / np.diff(mu2)
    assert np.all(slope <= 1.0 / gamma + 1e-8)
    assert np.all(slope <= 1.0 / (1.0 + gamma) + 1e-8)
    if q == 0.0:
        assert np.allclose(slope, 1.0 / (1.0 + gamma), atol=1e-10)


def test_tabulated_lipschitz_general_bound():
    game = Tabulated(lambda x: x + 0.2 * math.tanh(x), lambda a, b: b + 0.5 * math.atan(a))
    gamma = 0.4
    mu2 = np.linspace(-2, 2, 21)
    cs = np.array([optimal_cutoff(game, SubjectiveModel(0, v, 1, 1, gamma)) for v in mu2])
    assert np.all(np.diff(cs) > 0)
    assert np.all(np.diff(cs) / np.diff(mu2) <= 1.0 / gamma + 1e-8)


@settings(max_examples=60, derandomize=True, deadline=None)
@given(
    mu1=st.floats(-2, 2),
    mu2=st.floats(-2, 2),
    mu1_true=st.floats(-2, 2),
    gamma=st.floats(0.05, 2.0),
    q=st.sampled_from([0.0, 0.4, 0.8]),
)
def test_translation_identity(mu1, mu2, mu1_true, gamma, q):
    game = SearchWithRecall(q)
    lhs = optimal_cutoff(game, SubjectiveModel(mu1, mu2, 1, 1, gamma))
    rhs = optimal_cutoff(game, SubjectiveModel(mu1_true, mu2 + gamma * (mu1 - mu1_true), 1, 1, gamma))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_more_recall_raises_cutoff():
    m = SubjectiveModel(0.0, -0.4, 1, 1, 0.5)
    cs = [optimal_cutoff(SearchWithRecall(q), m) for q in (0.0, 0.2, 0.4, 0.6, 0.8)]
    assert np.all(np.diff(cs) > 0)


def test_wait_cost_lowers_cutoff():
    m = SubjectiveModel(0.0, 0.0, 1, 1, 0.5)
    assert optimal_cutoff(WaitCost(SearchWithRecall(0.3), 0.5), m) < optimal_cutoff(SearchWithRecall(0.3), m)


def test_validation_errors():
    with pytest.raises(StageGameError):
        SearchWithRecall(1.0)
    with pytest.raises(StageGameError):
        WaitCost(SearchWithRecall(0.0), -1.0)
    with pytest.raises(StageGameError):
        WaitCost(CostDraws(), 1.0)
    with pytest.raises(StageGameError):
        TrueModel(sd=0.0)
    with pytest.raises(StageGameError):
        optimal_cutoff(SearchWithRecall(0.0), SubjectiveModel(0, 0, 1, 0.0, 0.5))


def test_probe_rejects_bad_payoffs():
    with pytest.raises(StageGameError, match="u1 not strictly increasing"):
        Tabulated(lambda x: -x, lambda a, b: b)
    with pytest.raises(StageGameError, match="u2 not strictly increasing"):
        Tabulated(lambda x: x, lambda a, b: -b)
    with pytest.raises(StageGameError, match="dominate"):
        Tabulated(lambda x: x, lambda a, b: b + 2.0 * a)
    with pytest.raises(StageGameError, match="not finite"):
        Tabulated(lambda x: x, lambda a, b: b if b < 4 else math.inf)
    # cost-direction payoffs pass the reflected probe
    Tabulated(lambda x: -x, lambda a, b: -b, direction="cost")


def test_tabulated_quadrature_error_propagates():
    bad = Tabulated(lambda x: x, lambda a, b: b if b < 30 else math.nan, probe=False)
    with pytest.raises(gauss.GaussError, match="abscissa"):
        bad.continuation(0.0, SubjectiveModel(0, 25, 1, 1, 0.5))
