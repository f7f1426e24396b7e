import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from langmix._rng import side_generator
from langmix.density import (
    DensityGrid,
    FpConfig,
    delta_density,
    export_density_csv,
    fp_evolve,
    gaussian_density,
    invariant_density,
    limit_invariant_density,
    rescaled_invariant_density,
    sample_density,
    tv_density,
    tv_samples,
)
from langmix.errors import (
    DomainTooSmallError,
    IncompatibleGridError,
    InvalidInputError,
    InvalidParameterError,
    LangmixError,
)
from langmix.potential import scaling
from langmix.sde import DriftField


def ou_field():
    return DriftField(f=lambda z: -np.asarray(z, dtype=float), kind="original")


class TestInvariantDensity:
    def test_gaussian_normalizer(self, quadratic):
        d = invariant_density(quadratic, 1.0, (-8, 8, 2001))
        assert d.norm_constant == pytest.approx(math.sqrt(math.pi), abs=1e-8)
        z = d.z
        assert np.trapezoid(z * z * d.values, z) == pytest.approx(0.5, abs=1e-6)

    def test_even_symmetry_exact(self, power2):
        d = invariant_density(power2, 1e-1, (-4, 4, 1001))
        assert np.array_equal(d.values, d.values[::-1])

    @pytest.mark.parametrize("eps", [1e-1, 1e-2])
    def test_normalized_mass(self, power2, eps):
        d = invariant_density(power2, eps, (-4, 4, 2001))
        assert abs(np.trapezoid(d.values, d.z) - 1.0) < 1e-8
        assert d.tail_bound < 1e-10

    def test_domain_too_small(self, quadratic):
        with pytest.raises(DomainTooSmallError) as err:
            invariant_density(quadratic, 1.0, (-1.5, 1.5, 201))
        assert err.value.suggested_z_max > 1.5


class TestLimitInvariantDensity:
    def test_quartic_normalizer(self):
        d = limit_invariant_density(2.0, 1.0, (-4, 4, 2001))
        exact = 2 ** 1.25 * gamma(1.25)  # integral of exp(-z^4/2)
        assert d.norm_constant == pytest.approx(exact, rel=1e-10)

    def test_mode_at_origin(self):
        d = limit_invariant_density(2.0, 1.0, (-4, 4, 2001))
        i0 = d.n // 2
        assert np.argmax(d.values) == i0
        assert d.values[i0] == pytest.approx(1.0 / d.norm_constant, rel=1e-8)

    def test_even(self):
        d = limit_invariant_density(2.0, 1.0, (-4, 4, 2001))
        assert np.array_equal(d.values, d.values[::-1])


class TestRescaledInvariantDensity:
    def test_power_is_exactly_the_limit(self, power2):
        grid = (-4, 4, 2001)
        lim = limit_invariant_density(2.0, 4.0, grid)
        for eps in (1e-1, 1e-2, 1e-3):
            d = rescaled_invariant_density(power2, eps, grid)
            assert tv_density(d, lim) < 1e-14

    def test_gl_contracts_to_the_limit(self, ginzburg_landau):
        grid = (-6, 6, 2401)
        lim = limit_invariant_density(2.0, 1.0 / 6.0, grid)
        tvs = [
            tv_density(rescaled_invariant_density(ginzburg_landau, eps, grid), lim)
            for eps in (1e-1, 1e-2, 1e-3)
        ]
        assert tvs[0] > tvs[1] > tvs[2]
        assert tvs[2] < 0.05

    def test_pointwise_density_convergence(self, ginzburg_landau):
        # contracted density against the limit density at fixed points
        eps = 1e-3
        grid = (-6, 6, 2401)
        d = rescaled_invariant_density(ginzburg_landau, eps, grid)
        lim = limit_invariant_density(2.0, 1.0 / 6.0, grid)
        for z in (0.0, 1.0, 2.0):
            got = np.interp(z, d.z, d.values)
            want = np.interp(z, lim.z, lim.values)
            assert got == pytest.approx(want, rel=0.05)


class TestFpEvolve:
    def test_ou_transition(self):
        grid = (-8, 8, 2001)
        sol = fp_evolve(
            FpConfig(drift=ou_field(), grid=grid, dt=5e-3, t_end=2.0),
            gaussian_density(grid, 2.0, 0.04),
        )
        for t in (0.5, 1.0, 2.0):
            var = 0.04 * math.exp(-2 * t) + (1 - math.exp(-2 * t)) / 2
            exact = gaussian_density(grid, 2 * math.exp(-t), var)
            assert tv_density(sol(t), exact) < 1e-3

    def test_stationarity_of_the_invariant(self, quadratic, unit_quartic):
        grid = (-8, 8, 4001)
        inv = invariant_density(quadratic, 1.0, grid)
        sol = fp_evolve(FpConfig(drift=ou_field(), grid=grid, dt=5e-3, t_end=5.0), inv)
        assert tv_density(sol(5.0), inv) < 1e-6
        # quartic drift on a fine grid
        grid4 = (-3, 3, 12001)
        inv4 = invariant_density(unit_quartic, 1.0, grid4)
        quartic_field = DriftField(
            f=lambda z: -np.asarray(z, dtype=float) ** 3, kind="original"
        )
        sol4 = fp_evolve(FpConfig(drift=quartic_field, grid=grid4, dt=5e-3, t_end=5.0), inv4)
        assert tv_density(sol4(5.0), inv4) < 1e-6

    def test_free_diffusion_variance_growth(self):
        grid = (-10, 10, 2001)
        still = DriftField(f=lambda z: np.zeros_like(np.asarray(z, dtype=float)), kind="original")
        sol = fp_evolve(FpConfig(drift=still, grid=grid, dt=5e-3, t_end=1.0),
                        gaussian_density(grid, 0.0, 0.25))
        d = sol(1.0)
        var = np.trapezoid(d.z ** 2 * d.values, d.z)
        assert var == pytest.approx(1.25, abs=1e-4)

    def test_mass_conservation_at_checkpoints(self):
        grid = (-8, 8, 2001)
        sol = fp_evolve(FpConfig(drift=ou_field(), grid=grid, dt=5e-3, t_end=3.0),
                        gaussian_density(grid, 1.0, 0.09))
        for t in (0.5, 1.5, 3.0):
            d = sol(t)
            assert abs(np.trapezoid(d.values, d.z) - 1.0) < 1e-8
        assert sol.max_mass_drift < 1e-10

    def test_rho0_must_match_grid(self):
        rho0 = gaussian_density((-8, 8, 1001), 0.0, 1.0)
        with pytest.raises(IncompatibleGridError):
            fp_evolve(FpConfig(drift=ou_field(), grid=(-8, 8, 2001), dt=1e-3, t_end=1.0), rho0)

    def test_boundary_enum(self):
        rho0 = gaussian_density((-8, 8, 1001), 0.0, 1.0)
        with pytest.raises(InvalidParameterError):
            fp_evolve(
                FpConfig(drift=ou_field(), grid=(-8, 8, 1001), dt=1e-3, t_end=1.0,
                         boundary="dirichlet"),
                rho0,
            )

    def test_disintegration_inequality(self):
        # distance after r+s is at most the outer average of distances after s
        grid = (-6.0, 6.0, 1201)
        f3 = DriftField(f=lambda z: -np.asarray(z, dtype=float) ** 3, kind="limit")
        inv = limit_invariant_density(2.0, 1.0, grid)
        r = s = 0.25
        a = 1.0
        cfg = FpConfig(drift=f3, grid=grid, dt=5e-3, t_end=1.0)
        sol_a = fp_evolve(cfg, delta_density(grid, a))
        lhs = tv_density(sol_a(r + s), inv)

        outer = sol_a(r)
        nodes = np.linspace(-3.0, 3.0, 51)
        weights = np.interp(nodes, outer.z, outer.values)
        weights /= weights.sum()
        dz = grid[2]
        zs = np.linspace(grid[0], grid[1], grid[2])
        stack = np.column_stack(
            [delta_density(grid, x).values for x in nodes]
        )
        runner = fp_evolve(cfg, delta_density(grid, a))  # operator host
        evolved = runner.evolve_matrix(stack, s)
        rhs = 0.0
        for k in range(len(nodes)):
            col = np.clip(evolved[:, k], 0.0, None)
            col = col / np.trapezoid(col, zs)
            gridded = DensityGrid(grid[0], grid[1], grid[2], col, 1.0)
            rhs += weights[k] * tv_density(gridded, inv)
        assert lhs <= rhs + 1e-3


class TestTvDensity:
    def test_identical_is_zero(self):
        d = gaussian_density((-5, 5, 1001), 0.0, 1.0)
        assert tv_density(d, d) == 0.0

    def test_shifted_uniform_is_half(self):
        zs = np.linspace(-0.25, 1.75, 4001)
        u1 = ((zs >= 0.0) & (zs <= 1.0)).astype(float)
        u2 = ((zs >= 0.5) & (zs <= 1.5)).astype(float)
        from langmix.density import _normalized_grid

        g1 = _normalized_grid(-0.25, 1.75, u1)
        g2 = _normalized_grid(-0.25, 1.75, u2)
        assert tv_density(g1, g2) == pytest.approx(0.5, abs=2e-3)

    def test_disjoint_supports(self):
        g1 = gaussian_density((-40, 40, 4001), -20.0, 0.5)
        g2 = gaussian_density((-40, 40, 4001), 20.0, 0.5)
        assert tv_density(g1, g2) == pytest.approx(1.0, abs=1e-12)

    def test_grid_mismatch(self):
        g1 = gaussian_density((-5, 5, 1001), 0.0, 1.0)
        g2 = gaussian_density((-5, 5, 2001), 0.0, 1.0)
        with pytest.raises(IncompatibleGridError):
            tv_density(g1, g2)

    def test_unnormalized_input_detected(self):
        g = gaussian_density((-5, 5, 1001), 0.0, 1.0)
        bad = DensityGrid(-5.0, 5.0, 1001, 2.0 * g.values, 2.0)
        with pytest.raises(LangmixError):
            tv_density(g, bad)

    @given(
        m1=st.floats(-1.5, 1.5), m2=st.floats(-1.5, 1.5), m3=st.floats(-1.5, 1.5),
        v1=st.floats(0.2, 2.0), v2=st.floats(0.2, 2.0), v3=st.floats(0.2, 2.0),
    )
    def test_metric_properties(self, m1, m2, m3, v1, v2, v3):
        grid = (-12, 12, 1501)
        a = gaussian_density(grid, m1, v1)
        b = gaussian_density(grid, m2, v2)
        c = gaussian_density(grid, m3, v3)
        dab, dba = tv_density(a, b), tv_density(b, a)
        assert abs(dab - dba) < 1e-12
        assert 0.0 <= dab <= 1.0
        assert dab <= tv_density(a, c) + tv_density(c, b) + 1e-12


class TestTvSamples:
    def test_identical_samples(self):
        x = side_generator(1, 0).standard_normal(5000)
        assert tv_samples(x, x) == 0.0

    def test_null_distance_small(self):
        g = side_generator(2, 0)
        a, b = g.standard_normal(10 ** 5), g.standard_normal(10 ** 5)
        assert tv_samples(a, b) < 0.02

    def test_unit_shift_gaussians(self):
        g = side_generator(3, 0)
        a = g.standard_normal(10 ** 5)
        b = g.standard_normal(10 ** 5) + 1.0
        exact = 2.0 * (0.5 * (1 + math.erf(0.5 / math.sqrt(2)))) - 1.0
        assert tv_samples(a, b) == pytest.approx(exact, abs=0.02)

    def test_rejects_small_samples(self):
        with pytest.raises(InvalidInputError):
            tv_samples(np.zeros(50), np.zeros(200))

    def test_bin_rules(self):
        g = side_generator(4, 0)
        a, b = g.standard_normal(2000), g.standard_normal(2000)
        assert tv_samples(a, b, bin_rule=32) >= 0.0
        assert tv_samples(a, b, bin_rule="sturges") >= 0.0
        with pytest.raises(InvalidParameterError):
            tv_samples(a, b, bin_rule="nope")


class TestSampleDensity:
    def test_moments_match_quadrature(self):
        d = limit_invariant_density(2.0, 1.0, (-4, 4, 4001))
        s = sample_density(d, 10 ** 5, seed=11)
        var_exact = float(np.trapezoid(d.z ** 2 * d.values, d.z))
        assert s.mean() == pytest.approx(0.0, abs=4 * math.sqrt(var_exact / s.size))
        assert s.var() == pytest.approx(var_exact, rel=0.05)

    def test_deterministic(self):
        d = limit_invariant_density(2.0, 1.0, (-4, 4, 1001))
        assert np.array_equal(sample_density(d, 100, seed=5), sample_density(d, 100, seed=5))


def test_export_density_csv(tmp_path, power2):
    d = invariant_density(power2, 1e-1, (-3, 3, 101))
    path = tmp_path / "d.csv"
    export_density_csv(d, path, meta={"run": "test"})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# label=")
    assert any(line.startswith("# run=test") for line in lines)
    assert lines[4] == "z,rho"
    assert len(lines) == 5 + 101
