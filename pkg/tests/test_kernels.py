import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonuniform_cs.errors import DomainError, NoSignChange, NonFinite
from nonuniform_cs.exponents import SparsityModel, _ext_parts, _ext_stationarity
from nonuniform_cs.kernels import (
    SQRT_PI,
    Bracket,
    entropy,
    erf_scaled,
    find_root,
    half_normal_density,
    log_erf_scaled,
    log_std_normal_pdf_cdf,
    mills_ratio,
    std_normal_pdf_cdf,
)

# 30-digit reference values from mpmath, frozen here
ERF_1 = 0.842700792949714869341220635083
PDF_1 = 0.241970724519143349797830192936
CDF_1 = 0.841344746068542948585232545632
CDF_M5 = 2.86651571879193911673752332875e-7
CDF_M30 = 4.90671392714818705953380925658e-198
H_QUARTER = 0.562335144618808350288030315224


class TestErfScaled:
    def test_zero(self):
        assert erf_scaled(0.0) == 0.0

    def test_infinity(self):
        assert erf_scaled(np.inf) == 1.0

    def test_oracle(self):
        np.testing.assert_allclose(erf_scaled(1.0), ERF_1, rtol=1e-14)

    def test_odd(self):
        x = np.linspace(0, 5, 41)
        np.testing.assert_array_equal(erf_scaled(-x), -erf_scaled(x))

    def test_log_form_matches(self):
        x = np.array([1e-8, 1e-3, 0.5, 1.0, 2.0, 4.0])
        np.testing.assert_allclose(log_erf_scaled(x), np.log(erf_scaled(x)), rtol=1e-13, atol=1e-16)

    def test_log_tail_is_not_rounded_to_zero(self):
        assert log_erf_scaled(6.0) < 0.0

    def test_monotone(self):
        x = np.linspace(0, 6, 2001)
        assert np.all(np.diff(erf_scaled(x)) >= 0)


class TestHalfNormalDensity:
    def test_values(self):
        assert half_normal_density(0.0) == pytest.approx(2 / SQRT_PI, rel=1e-15)
        assert half_normal_density(-1.0) == 0.0
        assert half_normal_density(1.0) == pytest.approx(2 / SQRT_PI * math.exp(-1), rel=1e-15)


class TestNormal:
    def test_zero(self):
        pdf, cdf = std_normal_pdf_cdf(0.0)
        assert pdf == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
        assert cdf == 0.5

    def test_infinity(self):
        assert std_normal_pdf_cdf(np.inf) == (0.0, 1.0)

    def test_oracle(self):
        pdf, cdf = std_normal_pdf_cdf(1.0)
        np.testing.assert_allclose(pdf, PDF_1, rtol=1e-14)
        np.testing.assert_allclose(cdf, CDF_1, rtol=1e-14)

    def test_lower_tail(self):
        np.testing.assert_allclose(std_normal_pdf_cdf(-5.0)[1], CDF_M5, rtol=1e-14)
        np.testing.assert_allclose(std_normal_pdf_cdf(-30.0)[1], CDF_M30, rtol=1e-13)

    def test_log_form(self):
        lp, lc = log_std_normal_pdf_cdf(np.array([-50.0, -5.0, 0.0, 3.0]))
        np.testing.assert_allclose(lc[1], math.log(CDF_M5), rtol=1e-14)
        assert np.all(np.isfinite(lc))

    def test_symmetry_and_monotone(self):
        x = np.linspace(0, 37, 1501)
        np.testing.assert_array_equal(std_normal_pdf_cdf(x)[0], std_normal_pdf_cdf(-x)[0])
        cdf = std_normal_pdf_cdf(np.concatenate([-x[::-1], x]))[1]
        assert np.all(np.diff(cdf) >= 0)

    def test_cross_consistency_with_g(self):
        x = np.linspace(0, 6, 601)
        np.testing.assert_allclose(erf_scaled(x), 2 * std_normal_pdf_cdf(x * math.sqrt(2))[1] - 1, atol=1e-12)

    def test_mills_ratio_far_tail(self):
        # phi/Phi behaves like -x for very negative x
        assert mills_ratio(-200.0) == pytest.approx(200.0, rel=1e-4)
        pdf, cdf = std_normal_pdf_cdf(0.3)
        assert mills_ratio(0.3) == pytest.approx(pdf / cdf, rel=1e-14)


class TestEntropy:
    def test_values(self):
        assert entropy(0.0) == 0.0
        assert entropy(1.0) == 0.0
        assert entropy(0.5) == pytest.approx(math.log(2), rel=1e-15)
        np.testing.assert_allclose(entropy(0.25), H_QUARTER, rtol=1e-14)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            entropy(bad)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_concave(self, a, b):
        assert entropy((a + b) / 2) >= (entropy(a) + entropy(b)) / 2 - 1e-12


class TestFindRoot:
    def test_linear(self):
        assert find_root(lambda x: x - 1, Bracket(0.0, 2.0), 1e-12) == pytest.approx(1.0, abs=1e-12)

    def test_sqrt2(self):
        assert find_root(lambda x: x * x - 2, Bracket(1.0, 2.0), 1e-12) == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_bracket_must_be_ordered(self):
        with pytest.raises(DomainError):
            Bracket(1.0, 1.0)

    def test_expansion(self):
        assert find_root(lambda x: x - 1e5, Bracket(0.0, 1.0), 1e-9) == pytest.approx(1e5, abs=1e-9)

    def test_expansion_respects_limit(self):
        # root at 1e-9 on (0, inf): the lower end halves towards 0
        root = find_root(lambda x: np.log(x / 1e-9), Bracket(0.5, 1.0), 1e-15, limits=(0.0, np.inf))
        assert root == pytest.approx(1e-9, rel=1e-5)

    def test_no_sign_change(self):
        with pytest.raises(NoSignChange):
            find_root(lambda x: x * x + 1, Bracket(-1.0, 1.0), 1e-12, max_expand=5)

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            find_root(lambda x: np.where(x > 0.5, np.nan, x - 0.7), Bracket(0.0, 1.0), 1e-12)

    def test_vectorised_matches_scalar(self):
        targets = np.array([0.1, 0.5, 3.0])
        vec = find_root(lambda x: x - targets, Bracket(np.zeros(3), np.ones(3)), 1e-12)
        for t, v in zip(targets, vec):
            assert v == find_root(lambda x: x - t, Bracket(0.0, 1.0), 1e-12)

    def test_idempotent(self):
        f = lambda x: np.cos(x) - x
        x, br = find_root(f, Bracket(0.0, 1.0), 1e-12, full_output=True)
        assert br.hi - br.lo <= 1e-12
        assert find_root(f, br, 1e-12) == pytest.approx(x, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-50, 50))
    def test_cubic(self, r):
        x = find_root(lambda x: (x - r) ** 3, Bracket(-1.0, 1.0), 1e-10)
        assert abs(x - r) <= 1e-10

    def test_external_stationarity_against_grid_scan(self):
        model = SparsityModel.two_class(0.5, 0.5, 0.4, 0.05, 2.5)
        t = np.array([[0.05], [0.1]])
        w, c, alpha = _ext_parts(model, t)
        f = lambda x: _ext_stationarity(x, w, c, alpha)
        root = find_root(f, Bracket(np.array([1e-6]), np.array([10.0])), 1e-12, limits=(0.0, np.inf))
        grid = np.linspace(0.1, 1.0, 900001)
        vals = f(grid)
        idx = np.flatnonzero(np.diff(np.sign(vals)))[0]
        assert grid[idx] <= root[0] <= grid[idx + 1]
