import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langmix.errors import InvalidParameterError, NumericDomainError
from langmix.potential import (
    GrowthSpec,
    Potential,
    check_hypotheses,
    localize,
    make_ginzburg_landau,
    make_power_potential,
    scaling,
)


class TestPowerPotential:
    def test_degenerate_origin(self):
        p = make_power_potential(2.0)
        assert p.value(0.0) == 0.0
        assert p.deriv1(0.0) == 0.0
        assert p.deriv2(0.0) == 0.0

    def test_direct_values(self):
        p = make_power_potential(2.0)
        assert p.value(2.0) == pytest.approx(16.0, abs=0)
        assert p.deriv1(2.0) == pytest.approx(32.0, abs=0)

    def test_local_constant_is_scale_free(self):
        # the rescaled derivative at z=1 recovers the local constant exactly
        p = make_power_potential(2.0)
        for lam in (1.0, 0.1, 0.01):
            assert p.deriv1(lam * 1.0) / lam ** 3 == pytest.approx(4.0, rel=1e-12)
        assert p.c0_local == 4.0

    def test_invalid_alpha(self):
        with pytest.raises(InvalidParameterError):
            make_power_potential(0.0)
        with pytest.raises(InvalidParameterError):
            make_power_potential(-1.0)
        with pytest.raises(InvalidParameterError):
            make_power_potential(float("nan"))


class TestGinzburgLandau:
    def test_degenerate_origin(self, ginzburg_landau):
        gl = ginzburg_landau
        assert gl.value(0.0) == 0.0
        assert gl.deriv1(0.0) == 0.0
        assert gl.deriv2(0.0) == 0.0

    def test_taylor_remainder_of_scaled_derivative(self, ginzburg_landau):
        # sup_{|z|<=1} |(sinh(lam z) - lam z)/lam^3 - z^3/6| at lam = 0.01
        gl = ginzburg_landau
        z = np.linspace(-1.0, 1.0, 2001)
        lam = 0.01
        err = np.max(np.abs(gl.deriv1(lam * z) / lam ** 3 - z ** 3 / 6.0))
        assert err < 1e-4

    def test_second_derivative_nonnegative(self, ginzburg_landau):
        z = np.linspace(-10.0, 10.0, 4001)
        assert np.all(ginzburg_landau.deriv2(z) >= 0.0)

    def test_series_matches_direct_formula_at_crossover(self, ginzburg_landau):
        gl = ginzburg_landau
        for z in (0.2999, 0.3001, -0.2999, -0.3001):
            assert gl.deriv1(z) == pytest.approx(math.sinh(z) - z, rel=1e-12)
            assert gl.value(z) == pytest.approx(math.cosh(z) - 1 - z * z / 2, rel=1e-10)


class TestSymmetryInvariants:
    @pytest.mark.parametrize("maker", ["power", "gl", "localized"])
    def test_even_odd_convex_on_grid(self, maker, ginzburg_landau):
        if maker == "power":
            p = make_power_potential(2.0)
        elif maker == "gl":
            p = ginzburg_landau
        else:
            p = localize(ginzburg_landau, 3.0)
        z = np.linspace(-20.0, 20.0, 10 ** 4 + 1)
        v, d1, d2 = p.value(z), p.deriv1(z), p.deriv2(z)
        assert p.value(0.0) == 0.0
        assert np.all(np.abs(d1 + d1[::-1]) <= 1e-10 * (1 + np.abs(d1)))
        assert np.all(np.abs(d2 - d2[::-1]) <= 1e-10 * (1 + np.abs(d2)))
        assert np.all(d2 >= -1e-10)
        assert np.all(np.abs(v - v[::-1]) <= 1e-10 * (1 + np.abs(v)))


class TestCheckHypotheses:
    def test_power_exactness(self):
        rep = check_hypotheses(make_power_potential(2.0))
        assert rep.h1_ok and rep.h2_ok and rep.h3_ok
        # the sup-error vanishes identically for the pure power
        assert all(err < 1e-12 for _, err in rep.h2_sup_errors)
        assert rep.h3_witness == pytest.approx(4.0, rel=1e-12)

    def test_ginzburg_landau_rate(self, ginzburg_landau):
        rep = check_hypotheses(ginzburg_landau)
        assert rep.h1_ok and rep.h2_ok and rep.h3_ok
        errs = dict(rep.h2_sup_errors)
        # remainder is lam^2/120 * k^5 to leading order
        assert errs[0.1] == pytest.approx(0.01 / 120.0, rel=0.05)
        assert errs[0.1] < 1e-3

    def test_hyperbolic_potential_fails_h2(self, quadratic):
        # V' = z: the cubic rescaling z/lam^2 diverges, so alpha=2 is wrong
        rep = check_hypotheses(quadratic, z_max=5.0)
        probe = Potential(
            value=quadratic.value,
            deriv1=quadratic.deriv1,
            deriv2=quadratic.deriv2,
            alpha=2.0,
            c0_local=1.0,
            growth=quadratic.growth,
            label="quadratic-mislabeled",
        )
        rep = check_hypotheses(probe, z_max=5.0)
        assert not rep.h2_ok

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_evaluation_names_the_point(self):
        bad = Potential(
            value=lambda z: np.asarray(z, dtype=float) ** 4,
            deriv1=lambda z: np.exp(np.asarray(z, dtype=float) ** 2)
            * np.asarray(z, dtype=float),
            deriv2=lambda z: np.ones_like(np.asarray(z, dtype=float)),
            alpha=2.0,
            c0_local=1.0,
            growth=GrowthSpec(c0=1.0, beta=2.0, r0=1.0),
            label="overflowing",
        )
        with pytest.raises(NumericDomainError, match="z="):
            check_hypotheses(bad, z_max=40.0)

    def test_bad_lambda_seq(self, ginzburg_landau):
        with pytest.raises(InvalidParameterError):
            check_hypotheses(ginzburg_landau, lambda_seq=(1e-2, 1e-1))


class TestLocalize:
    def test_core_is_bitwise_identical(self, ginzburg_landau):
        for p in (make_power_potential(2.0), ginzburg_landau):
            loc = localize(p, 2.5)
            z = np.linspace(-2.5, 2.5, 801)
            assert np.array_equal(loc.value(z), p.value(z))
            assert np.max(np.abs(loc.deriv1(z) - p.deriv1(z))) == 0.0

    def test_pure_power_tail(self, ginzburg_landau):
        # the curvature is exactly |u|^alpha beyond sqrt(2) M
        loc = localize(ginzburg_landau, 3.0)
        assert loc.deriv2(5.0) == pytest.approx(25.0, rel=1e-12)
        assert loc.deriv2(-6.0) == pytest.approx(36.0, rel=1e-12)

    def test_convexity_everywhere(self, ginzburg_landau):
        loc = localize(ginzburg_landau, 3.0)
        z = np.linspace(-20.0, 20.0, 4001)
        assert np.all(loc.deriv2(z) >= 0.0)

    def test_growth_bound_holds(self, ginzburg_landau):
        loc = localize(ginzburg_landau, 3.0)
        g = loc.growth
        assert g.beta == loc.alpha
        z = np.linspace(g.r0, 40.0, 2001)
        assert np.all(loc.deriv1(z) >= g.c0 * z ** (1.0 + g.beta))

    def test_localized_passes_hypotheses(self, ginzburg_landau):
        rep = check_hypotheses(localize(ginzburg_landau, 3.0), z_max=30.0)
        assert rep.h1_ok and rep.h2_ok and rep.h3_ok

    def test_invalid_cut(self, ginzburg_landau):
        with pytest.raises(InvalidParameterError):
            localize(ginzburg_landau, 0.0)


class TestScaling:
    def test_unit_noise(self):
        s = scaling(1.0, 3.7)
        assert s.a_eps == 1.0 and s.b_eps == 1.0

    def test_closed_form(self):
        s = scaling(1e-4, 2.0)
        assert s.a_eps == pytest.approx(100.0, rel=1e-12)
        assert s.b_eps == pytest.approx(0.1, rel=1e-12)

    @given(
        eps=st.floats(min_value=1e-8, max_value=1.0),
        alpha=st.floats(min_value=0.05, max_value=8.0),
    )
    @settings(max_examples=100)
    def test_scaling_system_residuals(self, eps, alpha):
        s = scaling(eps, alpha)
        assert abs(s.a_eps * s.b_eps ** alpha - 1.0) < 1e-12
        assert abs(s.eps * s.a_eps - s.b_eps ** 2) < 1e-12 * s.b_eps ** 2

    def test_rejects_bad_eps(self):
        for bad in (0.0, -1.0, 1.5, float("nan")):
            with pytest.raises(InvalidParameterError):
                scaling(bad, 2.0)
