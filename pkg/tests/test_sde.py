import math
from dataclasses import replace

import numpy as np
import pytest

from langmix.density import tv_samples
from langmix.errors import InvalidInputError, InvalidParameterError
from langmix.flow import l2_envelope
from langmix.potential import localize, scaling
from langmix.sde import (
    DriftField,
    SdeConfig,
    export_ensemble_binary,
    export_ensemble_csv,
    limit_drift,
    make_drift,
    order_violation_fraction,
    read_ensemble_binary,
    rescale_ensemble,
    simulate,
    simulate_from_infinity,
    synchronous_couple,
)

SEED = 987654321


def ou_drift():
    return DriftField(
        f=lambda z: -np.asarray(z, dtype=float),
        kind="original",
        df=lambda z: -np.ones_like(np.asarray(z, dtype=float)),
    )


class TestMakeDrift:
    def test_power_rescaled_equals_limit_for_every_eps(self, power2):
        z = np.linspace(-5, 5, 101)
        lim = make_drift(power2, "limit")
        for eps in (1.0, 1e-2, 1e-4):
            resc = make_drift(power2, "rescaled", eps)
            assert np.allclose(resc.f(z), lim.f(z), rtol=1e-12)
        assert np.allclose(lim.f(z), -4.0 * np.abs(z) ** 3 * np.sign(z))

    def test_zero_at_origin(self, power2):
        assert make_drift(power2, "limit").f(0.0) == 0.0

    def test_gl_rescaled_value(self, ginzburg_landau):
        # b = 0.1 at eps = 1e-4: F(1) = -(sinh(0.1) - 0.1)/1e-3
        fe = make_drift(ginzburg_landau, "rescaled", 1e-4)
        assert fe.f(1.0) == pytest.approx(-(math.sinh(0.1) - 0.1) / 1e-3, rel=1e-12)

    def test_confining_and_odd(self, ginzburg_landau):
        z = np.linspace(-8, 8, 201)
        for dr in (
            make_drift(ginzburg_landau, "original"),
            make_drift(ginzburg_landau, "rescaled", 1e-2),
            make_drift(ginzburg_landau, "limit"),
        ):
            f = dr.f(z)
            assert np.all(np.sign(f[z != 0]) == -np.sign(z[z != 0]))
            assert np.allclose(f, -f[::-1], rtol=1e-12, atol=1e-300)

    def test_requires_eps(self, power2):
        with pytest.raises(InvalidParameterError):
            make_drift(power2, "rescaled")
        with pytest.raises(InvalidParameterError):
            make_drift(power2, "bogus")


class TestSimulate:
    def test_zero_noise_recovers_the_flow(self, power2):
        from langmix.flow import integrate_flow

        cfg = SdeConfig(
            drift=make_drift(power2, "original"), noise_scale=0.0,
            t_end=1.0, dt=1e-3, n_paths=1, seed=SEED, x0=1.0,
        )
        ens = simulate(cfg)
        flow = integrate_flow(power2, 1.0, 1.0, 1e-3)
        assert np.max(np.abs(ens.paths[0] - flow.states)) < 5e-3

    def test_pure_brownian_moments(self):
        still = DriftField(f=lambda z: np.zeros_like(np.asarray(z, dtype=float)), kind="original")
        cfg = SdeConfig(
            drift=still, noise_scale=1.0, t_end=1.0, dt=1e-3,
            n_paths=2 * 10 ** 4, seed=SEED, x0=0.0, record_times=(1.0,),
        )
        m = simulate(cfg).marginal(1.0)
        n = m.size
        assert abs(m.mean()) < 4.0 / math.sqrt(n)
        assert abs(m.var() - 1.0) < 4.0 * math.sqrt(2.0 / (n - 1))

    def test_ou_transition_moments(self):
        cfg = SdeConfig(
            drift=ou_drift(), noise_scale=1.0, t_end=1.0, dt=1e-3,
            n_paths=2 * 10 ** 4, seed=SEED, x0=2.0, record_times=(1.0,),
        )
        m = simulate(cfg).marginal(1.0)
        mean, var = 2 * math.exp(-1.0), (1 - math.exp(-2.0)) / 2.0
        n = m.size
        assert abs(m.mean() - mean) < 4.0 * math.sqrt(var / n)
        assert abs(m.var() - var) < 4.0 * var * math.sqrt(2.0 / (n - 1))

    def test_bit_for_bit_reproducible(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=500, seed=SEED, x0=0.3,
        )
        a, b = simulate(cfg), simulate(cfg)
        assert np.array_equal(a.paths, b.paths)
        assert np.array_equal(a.times, b.times)

    def test_path_prefix_stable_in_n_paths(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=400, seed=SEED, x0=0.3, record_every=50,
        )
        big = simulate(cfg)
        small = simulate(replace(cfg, n_paths=40))
        assert np.array_equal(small.paths, big.paths[:40])

    def test_infinite_start_rejected(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=10, seed=SEED, x0=math.inf,
        )
        with pytest.raises(InvalidParameterError, match="simulate_from_infinity"):
            simulate(cfg)

    def test_marginal_needs_recorded_time(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=10, seed=SEED, x0=0.0, record_times=(0.5,),
        )
        ens = simulate(cfg)
        with pytest.raises(InvalidInputError):
            ens.marginal(0.25)

    def test_config_validation(self, power2):
        dr = make_drift(power2, "limit")
        with pytest.raises(InvalidParameterError):
            SdeConfig(drift=dr, noise_scale=1.0, t_end=1.0, dt=0.2, n_paths=1, seed=1, x0=0.0)
        with pytest.raises(InvalidParameterError):
            SdeConfig(drift=dr, noise_scale=1.0, t_end=1.0, dt=1e-3, n_paths=0, seed=1, x0=0.0)


class TestFromInfinity:
    def test_starts_at_descent_state(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=16, seed=SEED, x0=math.inf, record_every=100,
        )
        ens = simulate_from_infinity(cfg, t0=1e-3)
        assert ens.times[0] == pytest.approx(1e-3)
        # dpsi/dt = -4 psi^3 from infinity: psi(t) = (8t)^(-1/2)
        assert np.all(ens.paths[:, 0] == pytest.approx((8e-3) ** -0.5, rel=1e-9))

    def test_bootstrap_time_self_consistency(self, power2):
        # halving t0 moves the law at t = 1 by less than the contract
        dr = make_drift(power2, "limit")
        mk = lambda: SdeConfig(
            drift=dr, noise_scale=1.0, t_end=1.0, dt=5e-4,
            n_paths=10 ** 5, seed=SEED, x0=math.inf, record_times=(1.0,),
        )
        a = simulate_from_infinity(mk(), t0=1e-3).marginal(1.0)
        b = simulate_from_infinity(mk(), t0=5e-4).marginal(1.0)
        assert tv_samples(a, b, bin_rule="sturges") < 0.01

    def test_mirror_exactness(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=300, seed=SEED, x0=-math.inf,
        )
        neg = simulate_from_infinity(cfg, t0=1e-3)
        pos = simulate_from_infinity(replace(cfg, x0=math.inf, mirror_noise=True), t0=1e-3)
        assert np.array_equal(neg.paths, -pos.paths)

    def test_domination_of_finite_start(self, power2):
        ens_fin, ens_inf = synchronous_couple(
            SdeConfig(
                drift=make_drift(power2, "limit"), noise_scale=1.0,
                t_end=0.5, dt=1e-3, n_paths=2000, seed=SEED, x0=5.0,
            ),
            [5.0, math.inf],
            t0=1e-3,
        )
        assert order_violation_fraction(ens_fin, ens_inf) < 1e-3

    def test_requires_limit_or_rescaled(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "original"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=10, seed=SEED, x0=math.inf,
        )
        with pytest.raises(InvalidParameterError):
            simulate_from_infinity(cfg)


class TestCoupling:
    def test_identical_starts_identical_paths(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=500, seed=SEED, x0=1.0,
        )
        a, b = synchronous_couple(cfg, [1.0, 1.0])
        assert np.array_equal(a.paths, b.paths)

    def test_order_preserved_tamed(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=1.0, dt=1e-3, n_paths=4000, seed=SEED, x0=0.0,
        )
        lo, hi = synchronous_couple(cfg, [0.0, 1.0])
        assert order_violation_fraction(lo, hi) < 1e-3

    def test_order_exact_backward(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=2000, seed=SEED, x0=0.0, drift_step="backward",
        )
        lo, hi = synchronous_couple(cfg, [0.0, 1.0])
        assert order_violation_fraction(lo, hi) == 0.0

    def test_localized_coupling_identical_until_exit(self, power2):
        # original vs localized drift share the core [-L, L]: non-exiting
        # paths agree bit for bit
        eps = 1e-2
        L = math.sqrt(2.0)
        loc = localize(power2, L)
        cfg = SdeConfig(
            drift=make_drift(power2, "original"), noise_scale=math.sqrt(eps),
            t_end=3.0, dt=1e-3, n_paths=800, seed=SEED, x0=1.0, record_times=(3.0,),
        )
        orig, repl = synchronous_couple(
            cfg, [1.0, 1.0],
            drifts=[make_drift(power2, "original"), make_drift(loc, "original")],
            track_sup=True,
        )
        never = (orig.sup_abs <= L) & (repl.sup_abs <= L)
        assert never.mean() > 0.5
        assert np.array_equal(orig.paths[never], repl.paths[never])

    def test_needs_two_starts(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=10, seed=SEED, x0=1.0,
        )
        with pytest.raises(InvalidInputError):
            synchronous_couple(cfg, [1.0])


class TestRescaleEnsemble:
    def test_identity_at_unit_noise(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=100, seed=SEED, x0=0.5,
        )
        ens = simulate(cfg)
        r = rescale_ensemble(ens, scaling(1.0, 2.0))
        assert np.array_equal(r.paths, ens.paths)
        assert np.array_equal(r.times, ens.times)

    def test_law_matches_direct_contracted_simulation(self, power2):
        # X(a t)/b from x has the law of the contracted process from x/b
        eps = 1e-2
        sc = scaling(eps, 2.0)
        t_resc = 0.5
        horizon = sc.a_eps * t_resc
        cfg_x = SdeConfig(
            drift=make_drift(power2, "original"), noise_scale=math.sqrt(eps),
            t_end=horizon, dt=1e-3, n_paths=4 * 10 ** 4, seed=SEED, x0=1.0,
            record_times=(horizon,),
        )
        resc = rescale_ensemble(simulate(cfg_x), sc)
        cfg_y = SdeConfig(
            drift=make_drift(power2, "rescaled", eps), noise_scale=1.0,
            t_end=t_resc, dt=1e-3, n_paths=4 * 10 ** 4, seed=SEED + 1,
            x0=1.0 / sc.b_eps, record_times=(t_resc,),
        )
        direct = simulate(cfg_y)
        tv = tv_samples(resc.paths[:, -1], direct.marginal(t_resc), bin_rule="sturges")
        assert tv < 0.02

    def test_brownian_variance_is_rescaled_time(self):
        # with the drift off, var(X(a t)/b) = eps a t / b^2 = t
        still = DriftField(f=lambda z: np.zeros_like(np.asarray(z, dtype=float)), kind="original")
        eps = 1e-2
        sc = scaling(eps, 2.0)
        cfg = SdeConfig(
            drift=still, noise_scale=math.sqrt(eps), t_end=sc.a_eps * 1.0, dt=1e-3,
            n_paths=2 * 10 ** 4, seed=SEED, x0=0.0, record_times=(sc.a_eps * 1.0,),
        )
        r = rescale_ensemble(simulate(cfg), sc)
        var = r.paths[:, -1].var()
        n = r.paths.shape[0]
        assert abs(var - 1.0) < 4.0 * math.sqrt(2.0 / (n - 1))

    def test_horizon_error(self, power2):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-3, n_paths=10, seed=SEED, x0=0.5,
        )
        ens = simulate(cfg)
        with pytest.raises(InvalidParameterError, match="horizon"):
            rescale_ensemble(ens, scaling(1e-2, 2.0), t_end=1.0)


class TestMomentBounds:
    def test_second_moment_below_envelope(self, power2):
        # quick version of the confinement contract (c_* = local constant)
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=5e-4, n_paths=4000, seed=SEED, x0=0.0,
            record_times=(0.1, 0.5), drift_step="backward",
        )
        for ens in synchronous_couple(cfg, [0.0, 10.0], t0=5e-4):
            for t in (0.1, 0.5):
                m2 = ens.marginal(t) ** 2
                env = l2_envelope(2.0, 4.0, t)
                assert m2.mean() <= env + 4.0 * m2.std() / math.sqrt(m2.size)

    def test_uniform_entrance_into_compact(self, ginzburg_landau):
        # P(Y_delta(inf) outside [a, b]) stays small uniformly in eps
        delta, a = 0.05, 0.1
        b = 2.0 * math.sqrt(l2_envelope(2.0, 1.0 / 6.0, delta))
        for eps in (None, 1e-2, 1e-1):  # None = limit field
            kind = "limit" if eps is None else "rescaled"
            dr = make_drift(ginzburg_landau, kind, eps)
            cfg = SdeConfig(
                drift=dr, noise_scale=1.0, t_end=0.6, dt=1e-3,
                n_paths=2000, seed=SEED, x0=math.inf, record_times=(delta,),
                drift_step="backward",
            )
            m = simulate_from_infinity(cfg, t0=1e-3).marginal(delta)
            freq = float(np.mean((m < a) | (m > b)))
            assert freq <= 0.1 + 3.0 * math.sqrt(0.1 * 0.9 / m.size)


class TestExport:
    def test_csv_and_binary_roundtrip(self, power2, tmp_path):
        cfg = SdeConfig(
            drift=make_drift(power2, "limit"), noise_scale=1.0,
            t_end=0.5, dt=1e-2, n_paths=7, seed=SEED, x0=0.2, record_every=10,
        )
        ens = simulate(cfg)
        csv_path = tmp_path / "ens.csv"
        export_ensemble_csv(ens, csv_path, meta={"seed": SEED})
        header = csv_path.read_text().splitlines()
        assert header[0] == f"# seed={SEED}"
        assert header[1].startswith("t,path_0,")
        bin_path = tmp_path / "ens.bin"
        export_ensemble_binary(ens, bin_path)
        times, paths = read_ensemble_binary(bin_path)
        assert np.array_equal(times, ens.times)
        assert np.array_equal(paths, ens.paths)
