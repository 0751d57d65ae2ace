import itertools
import math

import numpy as np
import pytest

from gfstop.inference import mu2_star
from gfstop.multiperiod import (
    ALL_PESSIMISTIC,
    BOUNDARY,
    OPTIMISM_POSSIBLE,
    MultiPeriodError,
    alpha_delta_classify,
    alpha_delta_gamma,
    make_spec,
    path_weight_sum,
    pseudo_true_L,
)
from gfstop.stage_game import TrueModel

# 0.25 * (2.3732...) - 0.5 * (0.79788...), mpmath at 40 digits
MU3_OVEROPT = 0.1943616028042775388848


def enumerate_path_sum(gamma, i, j):
    """Brute force over every descending path i -> ... -> j (0-based)."""
    total = 0.0
    inner = range(j + 1, i)
    for r in range(len(inner) + 1):
        for mids in itertools.combinations(sorted(inner, reverse=True), r):
            nodes = (i,) + tuple(sorted(mids, reverse=True)) + (j,)
            w = 1.0
            for a, b in zip(nodes, nodes[1:]):
                w *= -gamma[a, b]
            total += w
    return total


def random_spec(rng, L=None):
    L = L or int(rng.integers(2, 9))
    g = np.tril(rng.uniform(0, 1, (L, L)), -1)
    return make_spec(L, rng.uniform(-2, 2, L - 1), gamma=g, mu_true=rng.normal(size=L), sd=rng.uniform(0.5, 2))


def test_direct_edge():
    s = make_spec(2, (0.3,), alpha=0.7, delta=0.5)
    assert path_weight_sum(s, 2, 1) == -0.7


def test_alpha_delta_two_step():
    a, d = 0.4, 0.8
    s = make_spec(3, (0, 0), alpha=a, delta=d)
    assert path_weight_sum(s, 3, 1) == pytest.approx(-a * d + a * a, abs=1e-15)
    s = make_spec(3, (0, 0), alpha=0.5, delta=1.0)
    assert path_weight_sum(s, 3, 1) == pytest.approx(-0.25, abs=1e-15)


def test_recursion_law():
    a, d, L = 0.3, 0.7, 8
    s = make_spec(L, [0.0] * (L - 1), alpha=a, delta=d)
    for S in range(2, L):
        assert path_weight_sum(s, S + 1, 1) == pytest.approx((d - a) * path_weight_sum(s, S, 1), abs=1e-15)


def test_dp_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = random_spec(rng)
        for i in range(1, s.L):
            for j in range(i):
                assert path_weight_sum(s, i + 1, j + 1) == pytest.approx(enumerate_path_sum(s.gamma, i, j), abs=1e-13)


def test_methods_agree_on_random_specs():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        s = random_spec(rng)
        assert np.max(np.abs(pseudo_true_L(s, "iterative") - pseudo_true_L(s, "paths"))) <= 1e-12


def test_two_periods_reduce_to_baseline():
    s = make_spec(2, (0.4,), gamma=[[0, 0], [0.6, 0]], mu_true=[0.2, -0.1], sd=1.3)
    expected = mu2_star(TrueModel(0.2, -0.1, 1.3), 0.4, 0.6)
    assert pseudo_true_L(s)[1] == pytest.approx(expected, abs=1e-14)


def test_zero_gamma_is_truth():
    mu = np.array([0.1, -0.3, 2.0, 0.5])
    s = make_spec(4, (0, 1, -1), gamma=np.zeros((4, 4)), mu_true=mu)
    assert np.array_equal(pseudo_true_L(s), mu)


def test_over_optimism_example():
    s = make_spec(3, (-2.0, 0.0), alpha=0.5, delta=0.0)
    mu = pseudo_true_L(s)
    assert mu[2] == pytest.approx(MU3_OVEROPT, abs=1e-12)
    assert mu[2] > 0


def test_classifier_verdicts():
    assert alpha_delta_classify(0.3, 0.9, 5) == ALL_PESSIMISTIC
    for L in (3, 4, 7):
        assert alpha_delta_classify(0.5, 0.0, L) == OPTIMISM_POSSIBLE
    assert alpha_delta_classify(0.4, 0.4, 5) == BOUNDARY
    assert alpha_delta_classify(0.9, 0.1, 2) == ALL_PESSIMISTIC


def test_classifier_matches_sign_enumeration():
    rng = np.random.default_rng(8)
    for _ in range(60):
        a, d, L = rng.uniform(0.05, 1), rng.uniform(0, 1), int(rng.integers(2, 8))
        g = alpha_delta_gamma(a, d, L)
        sums = [enumerate_path_sum(g, i, j) for i in range(L) for j in range(i)]
        want = ALL_PESSIMISTIC if all(x < 0 for x in sums) else OPTIMISM_POSSIBLE
        assert alpha_delta_classify(a, d, L) == want
        assert (want == ALL_PESSIMISTIC) == (d > a or L == 2)


def test_delta_above_alpha_gives_pessimism():
    rng = np.random.default_rng(13)
    for _ in range(40):
        a = rng.uniform(0.05, 0.5)
        d = rng.uniform(a + 0.01, 1)
        L = int(rng.integers(2, 8))
        s = make_spec(L, rng.uniform(-3, 3, L - 1), alpha=a, delta=d)
        assert np.all(pseudo_true_L(s)[1:] < 0)


def test_optimism_grows_as_first_cutoff_falls():
    vals = [pseudo_true_L(make_spec(3, (c, 0.0), alpha=0.5, delta=0.0))[2] for c in (-1, -2, -4, -8)]
    assert np.all(np.diff(vals) > 0)


def test_validation():
    with pytest.raises(MultiPeriodError, match="history-dependent"):
        make_spec(3, (0.0, lambda xs: xs[0]), alpha=0.5, delta=0.5)
    with pytest.raises(MultiPeriodError):
        make_spec(3, (0.0,), alpha=0.5, delta=0.5)
    with pytest.raises(MultiPeriodError):
        make_spec(2, (0.0,), gamma=[[0, 0], [-0.1, 0]])
    with pytest.raises(MultiPeriodError):
        make_spec(2, (0.0,), gamma=[[0, 0.2], [0.1, 0]])
    with pytest.raises(MultiPeriodError):
        make_spec(2, (-math.inf,), alpha=0.5, delta=0.5)
    with pytest.raises(MultiPeriodError):
        alpha_delta_classify(0.0, 0.5, 3)
    with pytest.raises(MultiPeriodError):
        path_weight_sum(make_spec(3, (0, 0), alpha=0.5, delta=0.5), 1, 2)


def test_infinite_cutoff_means_no_censoring():
    s = make_spec(3, (math.inf, math.inf), alpha=0.5, delta=0.5)
    assert np.allclose(pseudo_true_L(s), 0.0, atol=1e-15)
