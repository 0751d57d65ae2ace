import math

import numpy as np
import pytest

from gfstop import gauss
from gfstop.gauss import GaussError, GaussianSpec

# Reference values from 30-40 digit mpmath integration, frozen here.
PDF1 = 0.241970724519143349797830192936
CDF1 = 0.841344746068542948585232545632
LOWER = {
    1.0: (-0.287599970939178361228670127385, 0.629686285776605400861244494863),
    0.0: (-0.797884560802865355879892119869, 0.36338022763241865692446494651),
    -10.0: (-10.09809323396251196284364165369, 0.009445377825656261164136817629),
    -30.0: (-30.03325966743367703707112410001, 0.001103771511890091001136741386),
}
UPPER1_MEAN = 1.52513527616098120908909053639
EMAX_HALF = 0.697796557401306029593532746901


def test_std_pdf_cdf_reference_points():
    p, c = gauss.std_pdf_cdf(0.0)
    assert p == pytest.approx(0.3989422804014327, rel=1e-14)
    assert c == 0.5
    p, c = gauss.std_pdf_cdf(1.0)
    assert p == pytest.approx(PDF1, rel=1e-13)
    assert c == pytest.approx(CDF1, rel=1e-13)
    pm, cm = gauss.std_pdf_cdf(-1.0)
    assert pm == p
    assert cm == pytest.approx(1.0 - c, rel=1e-13)


def test_std_pdf_cdf_rejects_nonfinite():
    with pytest.raises(GaussError):
        gauss.std_pdf_cdf(math.inf)
    with pytest.raises(GaussError):
        gauss.std_pdf_cdf(math.nan)


def test_cdf_strictly_inside_unit_interval():
    for z in (-30.0, -5.0, 0.0, 5.0):
        c = gauss.std_pdf_cdf(z)[1]
        assert 0.0 < c <= 1.0
    assert gauss.std_pdf_cdf(-30.0)[1] > 0.0


@pytest.mark.parametrize("c", sorted(LOWER))
def test_truncated_lower_matches_oracle(c):
    m, v = gauss.truncated_lower_moments(gauss.STANDARD, c)
    em, ev = LOWER[c]
    assert m == pytest.approx(em, abs=1e-12)
    assert v == pytest.approx(ev, rel=1e-9)


def test_truncated_lower_untruncated():
    assert gauss.truncated_lower_moments(GaussianSpec(0.3, 2.0), math.inf) == (0.3, 4.0)


def test_truncated_lower_scales_and_shifts():
    m, v = gauss.truncated_lower_moments(GaussianSpec(2.0, 3.0), 2.0 + 3.0)
    assert m == pytest.approx(2.0 + 3.0 * LOWER[1.0][0], abs=1e-12)
    assert v == pytest.approx(9.0 * LOWER[1.0][1], rel=1e-12)


def test_truncated_upper_examples():
    assert gauss.truncated_upper_moments(gauss.STANDARD, -math.inf) == (0.0, 1.0)
    m, v = gauss.truncated_upper_moments(gauss.STANDARD, 0.0)
    assert m == pytest.approx(-LOWER[0.0][0], abs=1e-12)
    assert v == pytest.approx(LOWER[0.0][1], rel=1e-12)
    assert gauss.truncated_upper_moments(gauss.STANDARD, 1.0)[0] == pytest.approx(UPPER1_MEAN, abs=1e-12)


def test_truncation_rejects_wrong_infinity():
    with pytest.raises(GaussError):
        gauss.truncated_lower_moments(gauss.STANDARD, -math.inf)
    with pytest.raises(GaussError):
        gauss.truncated_upper_moments(gauss.STANDARD, math.inf)


def test_deep_truncation_branch_is_continuous():
    # both sides of the branch switch agree
    a = gauss.truncated_lower_moments(gauss.STANDARD, -8.0 + 1e-9)
    b = gauss.truncated_lower_moments(gauss.STANDARD, -8.0 - 1e-9)
    assert a[0] == pytest.approx(b[0], abs=1e-8)
    assert a[1] == pytest.approx(b[1], rel=1e-6)
    m, v = gauss.truncated_lower_moments(gauss.STANDARD, -1e6)
    assert math.isfinite(m) and 0.0 < v < 1e-11


def test_lower_mean_monotone_and_variance_bounds():
    cs = np.linspace(-12, 12, 481)
    ms = [gauss.truncated_lower_moments(gauss.STANDARD, c) for c in cs]
    means = np.array([m for m, _ in ms])
    vars_ = np.array([v for _, v in ms])
    assert np.all(np.diff(means) > 0)
    assert np.all(means < 0)
    assert np.all(vars_ > 0)
    # past c ~ 8 the deficit 1 - var drops below double precision
    assert np.all(vars_[cs <= 8] < 1)
    assert np.all(vars_ <= 1)
    assert vars_[-1] == pytest.approx(1.0, abs=1e-12)


def test_reflection_identity():
    rng = np.random.default_rng(7)
    for c in rng.uniform(-6, 6, 50):
        mu, vu = gauss.truncated_upper_moments(gauss.STANDARD, c)
        ml, vl = gauss.truncated_lower_moments(gauss.STANDARD, -c)
        assert mu == pytest.approx(-ml, abs=1e-14)
        assert vu == pytest.approx(vl, abs=1e-14)


def test_mills_ratio_slope_bounded_by_one():
    z = np.linspace(-10, 10, 20001)
    lam = np.array([gauss.mills_ratio(t) for t in z])
    slope = np.abs(np.diff(lam) / np.diff(z))
    assert slope.max() <= 1.0 + 1e-9


def test_gauss_expectation_polynomials():
    assert gauss.gauss_expectation(lambda x: x, gauss.STANDARD, 16) == pytest.approx(0.0, abs=1e-14)
    assert gauss.gauss_expectation(lambda x: x * x, gauss.STANDARD, 16) == pytest.approx(1.0, abs=1e-12)
    g = GaussianSpec(1.5, 0.7)
    assert gauss.gauss_expectation(lambda x: x**3, g, 16) == pytest.approx(1.5**3 + 3 * 1.5 * 0.49, rel=1e-12)


def test_gauss_expectation_kinked_integrand():
    # the kink limits Hermite accuracy to a few 1e-4 at 64 nodes
    val = gauss.gauss_expectation(lambda x: max(0.5, x), gauss.STANDARD, 64)
    assert val == pytest.approx(EMAX_HALF, abs=5e-4)
    assert gauss.expected_max(0.5, 0.0, 1.0) == pytest.approx(EMAX_HALF, abs=1e-14)


def test_gauss_expectation_errors():
    with pytest.raises(GaussError):
        gauss.gauss_expectation(lambda x: x, gauss.STANDARD, 4)
    with pytest.raises(GaussError):
        gauss.gauss_expectation(lambda x: x, gauss.STANDARD, 1000)
    with pytest.raises(GaussError, match="abscissa"):
        gauss.gauss_expectation(lambda x: math.inf if x > 1 else 0.0, gauss.STANDARD, 16)


def test_spec_validation():
    with pytest.raises(GaussError):
        GaussianSpec(0.0, 0.0)
    with pytest.raises(GaussError):
        GaussianSpec(math.nan, 1.0)


def test_integrate_interval():
    val = gauss.integrate_interval(lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi), -8.0, 1.0)
    assert val == pytest.approx(CDF1, abs=1e-12)
