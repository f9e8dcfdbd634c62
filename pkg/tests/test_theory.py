import math

import mpmath
import numpy as np
import pytest
from scipy import optimize

from oracles import delta_method_variance

from probitkde.densities import catalog, get_density
from probitkde.errors import CapabilityError
from probitkde.loclik import fit_local
from probitkde.probcore import SeedSpec, std_normal_pdf, std_normal_quantile
from probitkde.theory import (INFLATION_T2, BoundarySequenceSpec, asymptotic_profile,
                              boundary_orders, fS_derivatives, local_bandwidth_equivalent,
                              midpoint_multipliers, probit_scale_bias)

SMOOTH = ["uniform", "beta44", "beta25", "bimodal", "gcc"]
mpmath.mp.dps = 30


def mp_fs(name):
    """f_S in multiprecision for the smooth catalogue entries."""
    if name == "uniform":
        return lambda s: mpmath.npdf(s)
    if name == "beta44":
        return lambda s: 140 * mpmath.ncdf(s) ** 3 * (1 - mpmath.ncdf(s)) ** 3 * mpmath.npdf(s)
    if name == "beta25":
        return lambda s: 30 * mpmath.ncdf(s) * (1 - mpmath.ncdf(s)) ** 4 * mpmath.npdf(s)
    if name == "bimodal":
        c = 1 / mpmath.beta(3, 9)
        return lambda s: c / 2 * (mpmath.ncdf(s) ** 2 * (1 - mpmath.ncdf(s)) ** 8
                                  + mpmath.ncdf(s) ** 8 * (1 - mpmath.ncdf(s)) ** 2) * mpmath.npdf(s)
    mu = 0.6 * mpmath.mpf(std_normal_quantile(0.8))
    return lambda s: mpmath.npdf(s, mu, mpmath.sqrt(1 - mpmath.mpf(0.36)))


class TestFsDerivatives:
    @pytest.mark.parametrize("name", SMOOTH)
    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_against_multiprecision_differences(self, name, order):
        d = get_density(name)
        f = mp_fs(name)
        for s in (-2.0, -0.7, 0.0, 0.4, 1.9):
            ref = float(mpmath.diff(f, s, order))
            assert fS_derivatives(d, s, order) == pytest.approx(ref, abs=1e-5)
            assert fS_derivatives(d, s, order) == pytest.approx(ref, rel=1e-7, abs=1e-12)

    def test_uniform_fourth_derivative_at_zero(self):
        assert fS_derivatives(get_density("uniform"), 0.0, 4) == pytest.approx(3 * std_normal_pdf(0.0), rel=1e-13)
        assert fS_derivatives(get_density("uniform"), 0.0, 2) == pytest.approx(-std_normal_pdf(0.0), rel=1e-13)

    def test_order_range(self):
        with pytest.raises(ValueError):
            fS_derivatives(get_density("beta44"), 0.0, 5)


class TestProfiles:
    @pytest.mark.parametrize("name", SMOOTH)
    @pytest.mark.parametrize("x", [0.1, 0.35, 0.5, 0.9])
    def test_naive_bias_is_probit_kde_bias_mapped_back(self, name, x):
        d = get_density(name)
        s = std_normal_quantile(x)
        ref = 0.5 * 0.2**2 * fS_derivatives(d, s, 2) / std_normal_pdf(s)
        assert asymptotic_profile("naive", d).leading_bias(x, 0.2) == pytest.approx(ref, rel=1e-10, abs=1e-14)

    @pytest.mark.parametrize("name", SMOOTH)
    def test_amended_drops_third_term(self, name):
        d = get_density(name)
        x, h = 0.2, 0.3
        q = std_normal_quantile(x)
        diff = asymptotic_profile("naive", d).leading_bias(x, h) - asymptotic_profile("amended", d).leading_bias(x, h)
        assert diff == pytest.approx(0.5 * h * h * (q * q - 1) * float(d.pdf(x)), rel=1e-12)

    @pytest.mark.parametrize("name", SMOOTH)
    @pytest.mark.parametrize("tag", ["t1", "t2"])
    @pytest.mark.parametrize("x", [0.05, 0.3, 0.5, 0.77])
    def test_local_fit_bias_two_routes(self, name, tag, x):
        d = get_density(name)
        a = asymptotic_profile(tag, d).leading_bias(x, 0.25)
        b = probit_scale_bias(tag, d, x, 0.25)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-13)

    def test_gc_is_twice_amended_at_midpoint(self):
        d = get_density("beta44")
        gc = asymptotic_profile("gc", d).leading_bias(0.5, 0.1)
        am = asymptotic_profile("amended", d).leading_bias(0.5, 0.1)
        assert gc == pytest.approx(2 * am, rel=1e-12)

    def test_uniform_special_cases(self):
        d = get_density("uniform")
        assert asymptotic_profile("t1", d).leading_bias(0.3, 0.2) == pytest.approx(-0.5 * 0.04)
        assert asymptotic_profile("t2", d).leading_bias(0.3, 0.2) == 0.0

    def test_variances(self):
        d = get_density("beta44")
        x, n, h = 0.35, 1000, 0.2
        base = float(d.pdf(x)) / (2 * n * h * std_normal_pdf(std_normal_quantile(x)) * math.sqrt(math.pi))
        for tag, c in (("naive", 1), ("amended", 1), ("t1", 1), ("t2", 27 / 16)):
            assert asymptotic_profile(tag, d).leading_variance(x, n, h) == pytest.approx(c * base, rel=1e-13)
        knn = float(d.pdf(x)) ** 2 / (n * 0.1 * math.sqrt(math.pi))
        assert asymptotic_profile("t1knn", d).leading_variance(x, n, 0.1) == pytest.approx(knn)
        assert asymptotic_profile("t2knn", d).leading_variance(x, n, 0.1) == pytest.approx(INFLATION_T2 * knn)

    def test_unavailable_pieces(self):
        d = get_density("beta44")
        with pytest.raises(CapabilityError):
            asymptotic_profile("gc", d).leading_variance(0.5, 100, 0.1)
        with pytest.raises(CapabilityError):
            asymptotic_profile("t2knn", d).leading_bias(0.5, 0.1)
        with pytest.raises(ValueError):
            asymptotic_profile("beta", d)

    def test_positive_variance(self):
        for d in catalog().values():
            x = np.linspace(0.01, 0.99, 30)
            for tag in ("naive", "t2", "t1knn"):
                v = [asymptotic_profile(tag, d).leading_variance(xi, 100, 0.2) for xi in x]
                assert np.all(np.array(v) > 0)


class TestMonteCarloLaws:
    @staticmethod
    def fits_at_midpoint(p, n, h, reps, seed):
        out = []
        for r in range(reps):
            s = std_normal_quantile(SeedSpec(seed, r).rng().uniform(size=n))
            out.append(fit_local(0.0, s, h, p).density / std_normal_pdf(0.0))
        return np.array(out)

    def test_t1_bias_on_uniform(self):
        vals = self.fits_at_midpoint(1, 50_000, 0.15, 400, 31)
        lead = asymptotic_profile("t1", get_density("uniform")).leading_bias(0.5, 0.15)
        assert abs((vals.mean() - 1.0) / lead - 1.0) <= 0.25

    def test_t2_unbiased_on_uniform(self):
        vals = self.fits_at_midpoint(2, 50_000, 0.3, 400, 32)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - 1.0) <= 3 * se


class TestVarianceInflation:
    def test_oracle_approaches_leading_laws(self):
        n, f = 2000, std_normal_pdf(0.0)
        for h in (0.01, 0.001):
            lead = f / (2 * n * h * math.sqrt(math.pi))
            # the O(1/n) term -f^2/n is the whole gap for the log-linear fit
            assert delta_method_variance(h, 1, n) == pytest.approx(lead - f * f / n, rel=1e-4)
        v1, v2 = delta_method_variance(0.001, 1, n), delta_method_variance(0.001, 2, n)
        assert v2 / v1 == pytest.approx(INFLATION_T2, rel=2e-3)

    def test_monte_carlo_matches_oracle_at_moderate_h(self):
        h, n, reps = 0.3, 2000, 1000
        fits = {1: [], 2: []}
        for r in range(reps):
            s = std_normal_quantile(SeedSpec(41, r).rng().uniform(size=n))
            for p in fits:
                fits[p].append(fit_local(0.0, s, h, p).density)
        for p, vals in fits.items():
            assert np.var(vals, ddof=1) == pytest.approx(delta_method_variance(h, p, n), rel=0.15)


class TestBoundaryAndMidpoint:
    def test_sequence_points(self):
        left = BoundarySequenceSpec("left", 2.0, 0.5)
        right = BoundarySequenceSpec("right", 2.0, 0.5)
        assert left.point(0.1) == pytest.approx(0.005)
        assert right.point(0.1) == pytest.approx(0.995)
        with pytest.raises(ValueError):
            BoundarySequenceSpec("top", 1.0, 1.0)
        with pytest.raises(ValueError):
            BoundarySequenceSpec("left", 0.0, 1.0)

    def test_boundary_orders(self):
        d = get_density("beta25")
        spec = BoundarySequenceSpec("left", 1.0, 0.5)
        bias, var = boundary_orders("naive", d, spec, 0.1, 1000)
        x = 0.05
        assert bias == pytest.approx(0.01 * math.log(10) * float(d.pdf(x)))
        assert var == pytest.approx(float(d.pdf(x)) / (1000 * 0.1**3 * math.sqrt(2) * 0.25))
        with pytest.raises(CapabilityError):
            boundary_orders("t1", d, spec, 0.1, 1000)
        with pytest.raises(ValueError):
            boundary_orders("naive", d, BoundarySequenceSpec("left", 1.0, 20.0), 0.1, 1000)

    def test_orders_scale_with_h(self):
        d = get_density("uniform")
        spec = BoundarySequenceSpec("right", 1.5, 2.0)
        b1, v1 = boundary_orders("naive", d, spec, 0.1, 100)
        b2, v2 = boundary_orders("naive", d, spec, 0.05, 100)
        assert v2 / v1 == pytest.approx(2.0 ** (1 + 2 * 1.5), rel=1e-12)
        assert b2 / b1 == pytest.approx(0.25 * math.log(20) / math.log(10), rel=1e-12)

    def test_midpoint_multipliers(self):
        m = midpoint_multipliers()
        assert m.bias_coefficient == pytest.approx(1 / (4 * math.pi), rel=1e-14)
        assert m.variance_coefficient == pytest.approx(1 / math.sqrt(2), rel=1e-14)
        assert m.mse_multiplier / 1.25 == pytest.approx((64 * math.pi**2) ** -0.2, rel=1e-12)
        b, v = m.bias_coefficient, m.variance_coefficient
        res = optimize.minimize_scalar(lambda h: (b * h * h) ** 2 + v / h, bounds=(0.1, 10), method="bounded",
                                       options={"xatol": 1e-12})
        assert m.optimal_h_constant == pytest.approx(res.x, rel=1e-6)
        assert m.exact_mse_constant == pytest.approx(res.fun, rel=1e-10)
        assert m.exact_mse_constant == pytest.approx(4**0.2 * m.mse_multiplier, rel=1e-12)

    def test_bandwidth_multipliers(self):
        m = midpoint_multipliers()
        assert m.h0_reference == 2.5679
        assert round(m.h0, 4) == m.h0_reference
        # doubling the bias coefficient, as the copula-kernel bias does at 1/2
        assert round((m.variance_coefficient / (2 * m.bias_coefficient) ** 2) ** 0.2, 3) == 1.946

    def test_local_bandwidth(self):
        assert local_bandwidth_equivalent(0.5, 0.2) == pytest.approx(0.2 * std_normal_pdf(0.0))
