"""The acceptance suite: one function per criterion, shared by pytest and the CLI.

Each criterion computes its quantities at the contractual tolerances and
returns a CriterionResult with a pass flag, the measured numbers, and small
CSV tables for the artifact directory.  Heavy intermediate products (the
noise-sweep profiles of the power family, the default limit profile) are
cached on the AcceptanceContext so criteria can share them.

Scale "full" runs the contractual sizes; "smoke" shrinks ensembles and grids
to exercise every code path quickly (statistical tolerances are widened
accordingly, so smoke verdicts are diagnostics, not the contract).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import analysis, density, flow, sde
from .analysis import (
    DEFAULT_LIMIT_ALPHA,
    DEFAULT_LIMIT_C0,
    TvProfile,
    cutoff_verdict,
    default_t_grid,
    gradual_convergence_check,
    mixing_time,
    ou_mixing_time,
    profile_fp,
    profile_mc,
    suggest_grid,
)
from .density import (
    FpConfig,
    fp_evolve,
    gaussian_density,
    invariant_density,
    limit_invariant_density,
    rescaled_invariant_density,
    sample_density,
    tv_density,
    tv_samples,
)
from .flow import descend_from_infinity, l2_envelope
from .potential import localize, make_ginzburg_landau, make_power_potential, scaling
from .sde import (
    DriftField,
    SdeConfig,
    limit_drift,
    make_drift,
    order_violation_fraction,
    simulate,
    simulate_from_infinity,
    synchronous_couple,
)

DEFAULT_SEED = 20240817

EPS_SWEEP = (1e-1, 1e-2, 1e-3)


@dataclass(frozen=True)
class CriterionResult:
    cid: int
    name: str
    passed: bool
    runtime_s: float
    budget_s: float
    details: dict
    tables: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.cid:2d} ({self.name}) in {self.runtime_s:.1f}s (budget {self.budget_s:g}s)"


class AcceptanceContext:
    """Sizes, seeds, and cached heavy computations for one acceptance run."""

    def __init__(self, seed: int = DEFAULT_SEED, scale: str = "full"):
        if scale not in ("full", "smoke"):
            raise ValueError(f"unknown scale {scale!r}")
        self.seed = int(seed)
        self.scale = scale
        full = scale == "full"
        self.n_mc = 10 ** 5 if full else 2000
        self.n_order = 10 ** 4 if full else 1000
        self.n_l2 = 2 * 10 ** 4 if full else 2000
        self.n_exit = 4000 if full else 500
        self.n_inv_samples = 10 ** 6 if full else 20000
        self.dz = 0.005 if full else 0.02
        self.fp_tol = 1e-7 if full else 1e-6
        self.fp_dt = 5e-3
        self.dt_mc = 1e-3 if full else 2e-3
        self.dt_l2 = 5e-4 if full else 1e-3
        # statistical tolerances widen at smoke size (sqrt(n) scaling)
        self.tol_channel = 0.03 if full else 0.03 * math.sqrt(10 ** 5 / self.n_mc)
        self.tol_tv_cont = 0.01 if full else 0.01 * math.sqrt(10 ** 5 / self.n_mc)
        self.tol_order = 1e-3 if full else 5e-3
        self.exit_eps = 1e-3
        self.exit_t = 1.0 if full else 0.2

    # ---- shared heavy products -------------------------------------------

    @cached_property
    def power_potential(self):
        return make_power_potential(2.0)

    @cached_property
    def power_t_grid(self):
        return np.unique(
            np.concatenate([np.geomspace(0.05, 2.5, 24), [0.25, 0.5, 1.0, 2.0]])
        )

    @cached_property
    def power_gradual(self):
        """Noise-sweep profiles of the power family plus the limit profile."""
        return gradual_convergence_check(
            self.power_potential,
            1.0,
            EPS_SWEEP,
            self.power_t_grid,
            dz=self.dz,
            dt=self.fp_dt,
            adapt_tol=self.fp_tol,
        )

    @cached_property
    def default_profile(self):
        """Limit profile of the default field from +inf on the default grid."""
        grid = suggest_grid(DEFAULT_LIMIT_ALPHA, DEFAULT_LIMIT_C0, dz=self.dz)
        inv = limit_invariant_density(DEFAULT_LIMIT_ALPHA, DEFAULT_LIMIT_C0, grid)
        return profile_fp(
            limit_drift(DEFAULT_LIMIT_ALPHA, DEFAULT_LIMIT_C0),
            math.inf,
            inv,
            default_t_grid(),
            dt=self.fp_dt,
            adapt_tol=self.fp_tol,
        )


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def criterion_1(ctx: AcceptanceContext) -> CriterionResult:
    """Descent-from-infinity inversion against separable closed forms."""
    ts = (0.1, 0.5, 1.0, 2.0)
    rows = ["t,field,computed,exact,rel_err"]

    def run():
        worst = 0.0
        for t in ts:
            got = descend_from_infinity(lambda u: -u * u, 0.1, t)
            exact = 1.0 / t
            rel = abs(got - exact) / exact
            worst = max(worst, rel)
            rows.append(f"{t},-u^2,{got!r},{exact!r},{rel:.3e}")
            got = descend_from_infinity(lambda u: -(u ** 3), 0.1, t)
            exact = (2.0 * t) ** -0.5
            rel = abs(got - exact) / exact
            worst = max(worst, rel)
            rows.append(f"{t},-u^3,{got!r},{exact!r},{rel:.3e}")
        return worst

    worst, dt = _timed(run)
    passed = worst < 1e-6 and dt < 1.0
    return CriterionResult(
        1, "descent oracle", passed, dt, 1.0,
        {"worst_rel_err": worst}, {"descend.csv": rows},
    )


def criterion_2(ctx: AcceptanceContext) -> CriterionResult:
    """Fokker-Planck vs the exact linear-drift Gaussian transition."""
    grid = (-8.0, 8.0, 4001)
    ou = DriftField(f=lambda z: -np.asarray(z, dtype=float), kind="original")
    rows = ["t,tv_err,mass_drift"]

    def run():
        sol = fp_evolve(
            FpConfig(drift=ou, grid=grid, dt=ctx.fp_dt, t_end=2.0, adapt_tol=ctx.fp_tol),
            gaussian_density(grid, 2.0, 0.04),
        )
        worst = 0.0
        for t in (0.5, 1.0, 2.0):
            var = 0.04 * math.exp(-2 * t) + (1 - math.exp(-2 * t)) / 2.0
            exact = gaussian_density(grid, 2.0 * math.exp(-t), var)
            err = tv_density(sol(t), exact)
            worst = max(worst, err)
            rows.append(f"{t},{err:.3e},{sol.max_mass_drift:.3e}")
        return worst, sol.max_mass_drift

    (worst, drift), dt = _timed(run)
    passed = worst < 1e-3 and drift < 1e-8 and dt < 30.0
    return CriterionResult(
        2, "fokker-planck vs gaussian", passed, dt, 30.0,
        {"worst_tv_err": worst, "mass_drift": drift}, {"fp_ou.csv": rows},
    )


def criterion_3(ctx: AcceptanceContext) -> CriterionResult:
    """Convergence of contracted invariant measures to the limit law."""
    rows = ["potential,eps,tv"]

    def run():
        gl = make_ginzburg_landau()
        grid_gl = suggest_grid(gl.alpha, gl.c0_local, dz=ctx.dz)
        lim_gl = limit_invariant_density(gl.alpha, gl.c0_local, grid_gl)
        tvs = []
        for eps in EPS_SWEEP:
            tv = tv_density(rescaled_invariant_density(gl, eps, grid_gl), lim_gl)
            tvs.append(tv)
            rows.append(f"ginzburg-landau,{eps},{tv:.6e}")
        p = ctx.power_potential
        grid_p = suggest_grid(p.alpha, p.c0_local, dz=ctx.dz)
        lim_p = limit_invariant_density(p.alpha, p.c0_local, grid_p)
        power_worst = 0.0
        for eps in EPS_SWEEP:
            tv = tv_density(rescaled_invariant_density(p, eps, grid_p), lim_p)
            power_worst = max(power_worst, tv)
            rows.append(f"power,{eps},{tv:.6e}")
        return tvs, power_worst

    (tvs, power_worst), dt = _timed(run)
    decreasing = all(b < a for a, b in zip(tvs, tvs[1:]))
    passed = decreasing and tvs[-1] < 0.05 and power_worst < 1e-10 and dt < 10.0
    return CriterionResult(
        3, "invariant-measure convergence", passed, dt, 10.0,
        {"gl_tvs": tvs, "power_worst": power_worst, "decreasing": decreasing},
        {"invariant_convergence.csv": rows},
    )


def criterion_4(ctx: AcceptanceContext) -> CriterionResult:
    """Accelerated-dynamics profiles approach the limit profile."""
    t_check = (0.25, 0.5, 1.0, 2.0)
    rows = ["t,eps,d_eps,G,gap"]

    def run():
        rep = ctx.power_gradual
        ok = True
        worst_final = 0.0
        for t in t_check:
            i = int(np.argmin(np.abs(rep.t_grid - t)))
            gaps_t = [rep.gaps[e][i] for e in rep.eps_list]
            ok = ok and all(b <= a + 1e-12 for a, b in zip(gaps_t, gaps_t[1:]))
            worst_final = max(worst_final, gaps_t[-1])
            for e, g in zip(rep.eps_list, gaps_t):
                rows.append(
                    f"{t},{e},{rep.eps_profiles[e].values[i]:.6f},"
                    f"{rep.limit_profile.values[i]:.6f},{g:.6f}"
                )
        return ok, worst_final

    (decreasing, worst_final), dt = _timed(run)
    passed = decreasing and worst_final < 0.05 and dt < 300.0
    return CriterionResult(
        4, "gradual convergence", passed, dt, 300.0,
        {"gaps_decreasing": decreasing, "worst_gap_at_1e-3": worst_final},
        {"gradual.csv": rows},
    )


def criterion_5(ctx: AcceptanceContext) -> CriterionResult:
    """Shape of the limit profile: strictly decreasing, strictly inside (0,1)."""
    floor = 1e-6  # solver resolution: below this, decrease is not assertable

    def run():
        prof = ctx.default_profile
        v = prof.values
        strict = True
        for a, b in zip(v, v[1:]):
            if a > floor and b > floor and not b < a:
                strict = False
        window = (prof.times >= 0.1) & (prof.times <= 5.0)
        inside = bool(np.all((v[window] > 0.001) & (v[window] < 0.999)))
        return prof, strict, inside

    (prof, strict, inside), dt = _timed(run)
    rows = ["t,G"] + [f"{t},{v:.8f}" for t, v in zip(prof.times, prof.values)]
    passed = strict and inside and dt < 60.0
    return CriterionResult(
        5, "profile shape", passed, dt, 60.0,
        {"strictly_decreasing": strict, "inside_window": inside},
        {"limit_profile.csv": rows},
    )


def criterion_6(ctx: AcceptanceContext) -> CriterionResult:
    """No cut-off for the degenerate family; window behavior for the contrast.

    The window is centered at the limit mixing transition: scale family
    a_eps * H(1/2), where H is the half-crossing of the limit profile.  Away
    from the window center the degenerate profiles stay strictly inside
    (margin, 1 - margin); the hyperbolic contrast family's mixing ratios
    collapse toward 1.
    """

    def run():
        rep = ctx.power_gradual
        h_half = mixing_time(rep.limit_profile, 0.5).tau
        profiles = {}
        scales = {}
        for e in rep.eps_list:
            prof = rep.eps_profiles[e]
            profiles[e] = TvProfile(
                times=prof.times / h_half,
                values=prof.values,
                channel=prof.channel,
                context=dict(prof.context),
            )
            scales[e] = scaling(e, ctx.power_potential.alpha).a_eps * h_half
        verdict = cutoff_verdict(profiles, scales, (0.5, 2.0), margin=0.05)
        ratios = [ou_mixing_time(1.0, e, 0.25) / ou_mixing_time(1.0, e, 0.75) for e in EPS_SWEEP]
        contrast_ok = all(r > 1.0 for r in ratios) and all(
            a > b for a, b in zip(ratios, ratios[1:])
        )
        return verdict, ratios, contrast_ok

    (verdict, ratios, contrast_ok), dt = _timed(run)
    rows = ["eps,delta,value"]
    for e, dv in verdict.values.items():
        for d, v in dv.items():
            rows.append(f"{e},{d},{v:.6f}")
    rows_r = ["eps,mixing_ratio"] + [f"{e},{r:.6f}" for e, r in zip(EPS_SWEEP, ratios)]
    passed = verdict.verdict == "NO_CUTOFF" and contrast_ok and dt < 300.0
    return CriterionResult(
        6, "no cut-off verdict", passed, dt, 300.0,
        {"verdict": verdict.verdict, "contrast_ratios": ratios},
        {"cutoff_window.csv": rows, "contrast_ratios.csv": rows_r},
    )


def criterion_7(ctx: AcceptanceContext) -> CriterionResult:
    """Mixing-time asymptotics: tau/a_eps approaches the limit crossing."""

    def run():
        rep = ctx.power_gradual
        h = mixing_time(rep.limit_profile, 0.5).tau
        tau_rescaled = mixing_time(rep.eps_profiles[EPS_SWEEP[-1]], 0.5).tau
        return h, tau_rescaled, abs(tau_rescaled / h - 1.0)

    (h, tau, gap), dt = _timed(run)
    rows = [
        "quantity,value",
        f"H(0.5),{h!r}",
        f"tau_over_a_eps(eps=1e-3),{tau!r}",
        f"relative_gap,{gap!r}",
    ]
    passed = gap < 0.10 and dt < 60.0
    return CriterionResult(
        7, "mixing-time asymptotics", passed, dt, 60.0,
        {"H_half": h, "tau_over_a": tau, "rel_gap": gap}, {"mixing.csv": rows},
    )


def criterion_8(ctx: AcceptanceContext) -> CriterionResult:
    """Monte Carlo channel against the Fokker-Planck channel."""
    t_check = (0.5, 1.0, 2.0)

    def run():
        grid = suggest_grid(DEFAULT_LIMIT_ALPHA, DEFAULT_LIMIT_C0, dz=ctx.dz)
        inv = limit_invariant_density(DEFAULT_LIMIT_ALPHA, DEFAULT_LIMIT_C0, grid)
        dr = limit_drift(DEFAULT_LIMIT_ALPHA, DEFAULT_LIMIT_C0)
        fp = profile_fp(
            dr, 0.0, inv, np.array(t_check), dt=ctx.fp_dt, adapt_tol=ctx.fp_tol
        )
        cfg = SdeConfig(
            drift=dr,
            noise_scale=1.0,
            t_end=2.0,
            dt=ctx.dt_mc,
            n_paths=ctx.n_mc,
            seed=ctx.seed,
            x0=0.0,
            record_times=t_check,
        )
        ens = simulate(cfg)
        inv_samples = sample_density(inv, ctx.n_inv_samples, ctx.seed, tag=1)
        mc = profile_mc(ens, inv_samples, np.array(t_check))
        return fp, mc, float(np.max(np.abs(mc.values - fp.values)))

    (fp, mc, worst), dt = _timed(run)
    rows = ["t,fp,mc,abs_diff"] + [
        f"{t},{a:.6f},{b:.6f},{abs(a - b):.6f}"
        for t, a, b in zip(t_check, fp.values, mc.values)
    ]
    passed = worst < ctx.tol_channel and dt < 120.0
    return CriterionResult(
        8, "channel agreement", passed, dt, 120.0,
        {"worst_diff": worst, "tol": ctx.tol_channel}, {"channels.csv": rows},
    )


def criterion_9(ctx: AcceptanceContext) -> CriterionResult:
    """Pathwise order under synchronous coupling; localized-coupling exit bound."""

    def run():
        p = ctx.power_potential
        dr = make_drift(p, "limit")
        cfg = SdeConfig(
            drift=dr, noise_scale=1.0, t_end=1.0, dt=1e-3,
            n_paths=ctx.n_order, seed=ctx.seed + 1, x0=0.0,
        )
        low, high = synchronous_couple(cfg, [0.0, 1.0])
        v1 = order_violation_fraction(low, high)
        mid, top = synchronous_couple(cfg, [1.0, math.inf], t0=1e-3)
        v2 = order_violation_fraction(mid, top)

        # coupling of the original process with its localized replacement
        eps = ctx.exit_eps
        a_eps = scaling(eps, p.alpha).a_eps
        horizon = ctx.exit_t * a_eps
        dt_exit = 1e-3
        n_steps = int(math.ceil(horizon / dt_exit))
        t_end = n_steps * dt_exit
        t_eff = t_end / a_eps
        L = math.sqrt(2.0)
        loc = localize(p, L)
        cfg_exit = SdeConfig(
            drift=make_drift(p, "original"),
            noise_scale=math.sqrt(eps),
            t_end=t_end,
            dt=dt_exit,
            n_paths=ctx.n_exit,
            seed=ctx.seed + 2,
            x0=1.0,
            record_times=(t_end,),
        )
        ens_orig, ens_loc = synchronous_couple(
            cfg_exit, [1.0, 1.0],
            drifts=[make_drift(p, "original"), make_drift(loc, "original")],
            track_sup=True,
        )
        exited = ens_loc.sup_abs > L
        freq = float(np.mean(exited))
        bound = 16.0 * 1.0 * eps * a_eps * t_eff + 8.0 * (eps * a_eps * t_eff) ** 2
        se = math.sqrt(max(bound * (1 - bound), 1e-12) / ctx.n_exit)
        never = ~exited & (ens_orig.sup_abs <= L)
        identical = bool(
            np.array_equal(ens_orig.paths[never], ens_loc.paths[never])
        )
        return v1, v2, freq, bound, se, identical, float(np.mean(never))

    (v1, v2, freq, bound, se, identical, frac_never), dt = _timed(run)
    rows = [
        "check,value",
        f"violations_0_1,{v1!r}",
        f"violations_1_inf,{v2!r}",
        f"exit_freq,{freq!r}",
        f"exit_bound,{bound!r}",
        f"coupled_identical_until_exit,{identical}",
        f"fraction_never_exited,{frac_never!r}",
    ]
    passed = (
        v1 < ctx.tol_order
        and v2 < ctx.tol_order
        and freq <= bound + 3.0 * se
        and identical
        and dt < 120.0
    )
    return CriterionResult(
        9, "coupling order and exit bound", passed, dt, 120.0,
        {"violations": (v1, v2), "exit_freq": freq, "exit_bound": bound,
         "identical_until_exit": identical},
        {"coupling.csv": rows},
    )


def criterion_10(ctx: AcceptanceContext) -> CriterionResult:
    """Sample second moments stay below the descent envelope."""
    t_check = (0.1, 0.5, 1.0)
    starts = (0.0, 10.0, 1e3, math.inf)

    def run():
        p = ctx.power_potential
        dr = make_drift(p, "limit")  # c_* equals the local constant for the pure power
        cfg = SdeConfig(
            drift=dr, noise_scale=1.0, t_end=1.0, dt=ctx.dt_l2,
            n_paths=ctx.n_l2, seed=ctx.seed + 3, x0=0.0,
            record_times=t_check, drift_step="backward",
        )
        ensembles = synchronous_couple(cfg, starts, t0=ctx.dt_l2)
        rows = ["x0,t,mean_sq,envelope,margin"]
        ok = True
        for x0, ens in zip(starts, ensembles):
            for t in t_check:
                m2 = ens.marginal(t) ** 2
                env = l2_envelope(p.alpha, p.c0_local, t)
                se = float(m2.std()) / math.sqrt(m2.size)
                margin = env + 4.0 * se - float(m2.mean())
                ok = ok and margin >= 0.0
                rows.append(f"{x0},{t},{m2.mean():.6f},{env:.6f},{margin:.6f}")
        return ok, rows

    (ok, rows), dt = _timed(run)
    passed = ok and dt < 60.0
    return CriterionResult(
        10, "second-moment envelope", passed, dt, 60.0, {"all_below": ok},
        {"l2_envelope.csv": rows},
    )


def criterion_11(ctx: AcceptanceContext) -> CriterionResult:
    """Continuity at infinity: far starts have nearly identical marginals."""

    def run():
        dr = limit_drift(2.0, 4.0)
        mk = lambda x0, seed: SdeConfig(
            drift=dr, noise_scale=1.0, t_end=0.5, dt=1e-3,
            n_paths=ctx.n_mc, seed=seed, x0=x0,
            record_times=(0.5,), drift_step="backward",
        )
        a = simulate(mk(50.0, ctx.seed + 4)).marginal(0.5)
        b = simulate(mk(100.0, ctx.seed + 5)).marginal(0.5)
        # null comparison: coarse standard binning keeps the estimator bias
        # below the contract (fd bins would swamp a ~0 distance at this n)
        return tv_samples(a, b, bin_rule="sturges")

    tv, dt = _timed(run)
    rows = ["pair,tv", f"x50_x100,{tv!r}"]
    passed = tv < ctx.tol_tv_cont and dt < 60.0
    return CriterionResult(
        11, "tv continuity at infinity", passed, dt, 60.0,
        {"tv": tv, "tol": ctx.tol_tv_cont}, {"tv_continuity.csv": rows},
    )


def criterion_12(ctx: AcceptanceContext, workdir) -> CriterionResult:
    """Determinism: the artifact pipeline twice with one seed, byte-identical."""
    import filecmp
    import os

    def emit(root):
        os.makedirs(root, exist_ok=True)
        p = ctx.power_potential
        grid = suggest_grid(p.alpha, p.c0_local, dz=0.02)
        inv = invariant_density(p, 1e-2, (-2.0, 2.0, 401))
        density.export_density_csv(inv, os.path.join(root, "invariant.csv"),
                                   meta={"seed": ctx.seed})
        dr = make_drift(p, "limit")
        cfg = SdeConfig(
            drift=dr, noise_scale=1.0, t_end=0.5, dt=5e-3, n_paths=64,
            seed=ctx.seed, x0=1.0, record_every=10,
        )
        ens = simulate(cfg)
        sde.export_ensemble_csv(ens, os.path.join(root, "ensemble.csv"),
                                meta={"seed": ctx.seed})
        sde.export_ensemble_binary(ens, os.path.join(root, "ensemble.bin"))
        lim = limit_invariant_density(p.alpha, p.c0_local, grid)
        prof = profile_fp(dr, 1.0, lim, np.array([0.25, 0.5]), dt=5e-3, adapt_tol=1e-6)
        with open(os.path.join(root, "profile.csv"), "w") as fh:
            fh.write("t,value\n")
            for t, v in zip(prof.times, prof.values):
                fh.write(f"{t!r},{v!r}\n")

    def run():
        d1 = os.path.join(workdir, "determinism-a")
        d2 = os.path.join(workdir, "determinism-b")
        emit(d1)
        emit(d2)
        names = sorted(os.listdir(d1))
        same = names == sorted(os.listdir(d2)) and all(
            filecmp.cmp(os.path.join(d1, n), os.path.join(d2, n), shallow=False)
            for n in names
        )
        return same, names

    (same, names), dt = _timed(run)
    rows = ["file,identical"] + [f"{n},{same}" for n in names]
    return CriterionResult(
        12, "artifact determinism", bool(same), dt, 120.0,
        {"byte_identical": same, "files": names}, {"determinism.csv": rows},
    )


ALL_CRITERIA = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
    criterion_11,
)


def run_all(ctx: AcceptanceContext, workdir) -> list:
    """Run every criterion (12 needs a scratch directory); returns results."""
    results = [fn(ctx) for fn in ALL_CRITERIA]
    results.append(criterion_12(ctx, workdir))
    return results
