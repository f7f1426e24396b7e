"""Distance-to-equilibrium profiles, mixing times, and cut-off diagnostics.

The headline objects are total-variation profiles t -> d(t): either the
"fp_exact" channel (Fokker-Planck marginal against the invariant density) or
the "monte_carlo" channel (histogram distance between ensemble marginals and
invariant samples).  Profiles in rescaled time compare directly with the
limit profile from an infinite entrance state; their crossings give mixing
times, and the family over a noise sweep feeds the cut-off verdict.

The default limiting field used when no potential is in play is
alpha = 2, c0 = 1: strong enough that the profile leaves 0.999 by t = 0.1,
weak enough that it stays above 0.001 through t = 5, so the desk-scale
window is informative end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .density import (
    DensityGrid,
    FpConfig,
    delta_density,
    fp_evolve,
    gaussian_density,
    limit_invariant_density,
    rescaled_invariant_density,
    tv_density,
    tv_samples,
)
from .errors import HorizonError, InvalidInputError, InvalidParameterError
from .flow import entrance_integral
from .potential import Potential, ScalingPair, scaling
from .sde import DriftField, PathEnsemble, make_drift

DEFAULT_LIMIT_ALPHA = 2.0
DEFAULT_LIMIT_C0 = 1.0


def default_t_grid(t_min: float = 0.05, t_max: float = 20.0, n: int = 40) -> np.ndarray:
    """Geometric time grid for profiles."""
    return np.geomspace(t_min, t_max, n)


def suggest_grid(alpha: float, c0: float, x_extent: float = 0.0, dz: float = 0.005):
    """Spatial grid wide enough for the limit invariant's tail and the starts.

    The half-width covers the Gibbs tail out to weight e^-30 plus margin, and
    leaves 35% headroom above the largest finite start.
    """
    q = 2.0 + alpha
    z_tail = (30.0 * q / (2.0 * c0)) ** (1.0 / q)
    z_half = max(1.3 * z_tail, 1.35 * abs(x_extent) + 1.0, 6.0)
    z_half = math.ceil(z_half / 0.5) * 0.5
    n = int(round(2.0 * z_half / dz)) + 1
    return (-z_half, z_half, n)


@dataclass(frozen=True)
class TvProfile:
    """Time-indexed total-variation values in [0, 1] for one channel."""

    times: np.ndarray
    values: np.ndarray
    channel: str  # "fp_exact" | "monte_carlo"
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or np.any(np.diff(t) <= 0):
            raise InvalidInputError("profile needs matching 1-d arrays with increasing times")
        if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
            raise InvalidInputError("profile values must lie in [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    def at(self, t: float) -> float:
        """Linear interpolation inside the profile's horizon."""
        t_arr = self.times
        if t < t_arr[0] - 1e-12 or t > t_arr[-1] + 1e-12:
            raise InvalidParameterError(f"t={t!r} outside profile horizon [{t_arr[0]!r}, {t_arr[-1]!r}]")
        return float(np.interp(t, t_arr, self.values))


@dataclass(frozen=True)
class MixingReport:
    """Crossing time of a profile at level eta (linear interpolation).

    boundary marks the infimum convention kicking in at the first grid time;
    tau_raw differs from tau only for the regularized Monte Carlo channel.
    """

    eta: float
    tau: float
    tau_raw: float
    channel: str
    boundary: bool = False
    tau_over_a_eps: Optional[float] = None
    h_eta: Optional[float] = None


def bootstrap_time_from_infinity(drift, level: float) -> float:
    """Time for the noiseless field flow to descend from +inf to `level`."""
    f = getattr(drift, "f", drift)
    return -entrance_integral(lambda u: float(f(u)), level, math.inf)


def profile_fp(
    drift,
    x0: float,
    invariant: DensityGrid,
    t_grid,
    noise_scale: float = 1.0,
    dt: float = 2e-3,
    adapt_tol: float = 1e-7,
    bootstrap_frac: float = 0.75,
    context: Optional[dict] = None,
) -> TvProfile:
    """TV(rho_t, invariant) along t_grid via the Fokker-Planck channel.

    Finite x0 starts from a narrow Gaussian (std 2*dz); x0 = +-inf is
    bootstrapped at the descent time to bootstrap_frac of the grid edge.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise InvalidParameterError("t_grid must be positive and increasing")
    grid = (invariant.z_min, invariant.z_max, invariant.n)
    if math.isinf(x0):
        level = bootstrap_frac * invariant.z_max
        t0 = bootstrap_time_from_infinity(drift, level)
        if not t0 < 0.8 * t_grid[0]:
            raise InvalidParameterError(
                f"grid too narrow: entrance bootstrap lands at t0={t0:g}, "
                f"too close to t_grid[0]={t_grid[0]:g}"
            )
        sigma = max(2.0 * invariant.dz, math.sqrt(t0))
        center = math.copysign(level, x0)
        rho0 = gaussian_density(grid, center, sigma * sigma, label=f"bootstrap:{center:g}")
    else:
        t0 = 0.0
        rho0 = delta_density(grid, x0)
    cfg = FpConfig(
        drift=drift,
        grid=grid,
        dt=dt,
        t_end=float(t_grid[-1] - t0),
        noise_scale=noise_scale,
        adapt_tol=adapt_tol,
    )
    sol = fp_evolve(cfg, rho0)
    values = [tv_density(sol(t - t0), invariant) for t in t_grid]
    ctx = {"x0": x0, "channel_detail": "crank-nicolson", "t0": t0}
    ctx.update(context or {})
    return TvProfile(times=t_grid, values=np.array(values), channel="fp_exact", context=ctx)


def profile_mc(
    ens: PathEnsemble,
    invariant_samples,
    t_grid,
    bin_rule="fd",
    context: Optional[dict] = None,
) -> TvProfile:
    """Sample-TV of ensemble marginals against invariant draws along t_grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    inv = np.asarray(invariant_samples, dtype=float)
    if inv.size < 100:
        raise InvalidInputError("need at least 100 invariant samples")
    if t_grid[-1] > ens.times[-1] + 0.5 * ens.config.dt:
        raise InvalidInputError("ensemble horizon does not cover t_grid")
    values = [tv_samples(ens.marginal(t), inv, bin_rule=bin_rule) for t in t_grid]
    ctx = {"x0": ens.config.x0, "n_paths": ens.config.n_paths, "seed": ens.config.seed}
    ctx.update(context or {})
    return TvProfile(times=t_grid, values=np.array(values), channel="monte_carlo", context=ctx)


@dataclass(frozen=True)
class GradualReport:
    """Distance profiles of the noise sweep against the limit profile.

    gaps[eps] is |d_eps(t) - G(t)| on t_grid; bound_terms, when computed,
    holds the two right-hand-side terms of the decoupling triangle bound.
    """

    eps_list: tuple
    t_grid: np.ndarray
    limit_profile: TvProfile
    eps_profiles: Dict[float, TvProfile]
    gaps: Dict[float, np.ndarray]
    gap_sup: Dict[float, float]
    gaps_decreasing: bool
    bound_terms: Optional[dict] = None


def gradual_convergence_check(
    p: Potential,
    x: float,
    eps_list: Sequence[float],
    t_grid,
    dz: float = 0.005,
    dt: float = 2e-3,
    adapt_tol: float = 1e-7,
    compute_bound: bool = False,
) -> GradualReport:
    """Compare the accelerated-dynamics profiles with the limit profile.

    Works in contracted coordinates, where the distance at accelerated time
    a_eps * t equals the distance between the contracted process (started at
    x / b_eps, drift the rescaled field) and the contracted equilibrium --
    total variation is scale invariant.  The limit profile starts from
    sgn(x) * infinity, with sgn(0) * infinity = 0.
    """
    eps_arr = [float(e) for e in eps_list]
    if sorted(eps_arr, reverse=True) != eps_arr:
        raise InvalidParameterError("eps_list must be decreasing")
    t_grid = np.asarray(t_grid, dtype=float)
    alpha = p.alpha
    scalings = {e: scaling(e, alpha) for e in eps_arr}
    x_eps = {e: x / scalings[e].b_eps for e in eps_arr}
    extent = max(abs(v) for v in x_eps.values())
    grid = suggest_grid(alpha, p.c0_local, x_extent=extent, dz=dz)

    limit_inv = limit_invariant_density(alpha, p.c0_local, grid)
    limit_dr = make_drift(p, "limit")
    x0_limit = math.copysign(math.inf, x) if x != 0 else 0.0
    g_prof = profile_fp(
        limit_dr, x0_limit, limit_inv, t_grid, dt=dt, adapt_tol=adapt_tol,
        context={"eps": "limit"},
    )

    eps_profiles = {}
    gaps = {}
    sups = {}
    bound = {"process_term": {}, "invariant_term": {}} if compute_bound else None
    if compute_bound:
        lim_cfg = FpConfig(drift=limit_dr, grid=grid, dt=dt, t_end=float(t_grid[-1]), adapt_tol=adapt_tol)
        # rebuild the limit solve to expose its marginals for the bound terms
        t0_lim = g_prof.context["t0"]
        lvl = 0.75 * limit_inv.z_max
        sig = max(2.0 * limit_inv.dz, math.sqrt(t0_lim))
        lim_sol = fp_evolve(
            FpConfig(drift=limit_dr, grid=grid, dt=dt, t_end=float(t_grid[-1]) - t0_lim, adapt_tol=adapt_tol),
            gaussian_density(grid, math.copysign(lvl, x) if x != 0 else 0.0, sig * sig)
            if x != 0
            else delta_density(grid, 0.0),
        )
    for e in eps_arr:
        dr = make_drift(p, "rescaled", e)
        inv_e = rescaled_invariant_density(p, e, grid)
        prof = profile_fp(
            dr, x_eps[e], inv_e, t_grid, dt=dt, adapt_tol=adapt_tol, context={"eps": e}
        )
        eps_profiles[e] = prof
        gaps[e] = np.abs(prof.values - g_prof.values)
        sups[e] = float(np.max(gaps[e]))
        if compute_bound:
            dr_cfg = FpConfig(drift=dr, grid=grid, dt=dt, t_end=float(t_grid[-1]), adapt_tol=adapt_tol)
            sol_e = fp_evolve(dr_cfg, delta_density(grid, x_eps[e]))
            t0_lim = g_prof.context["t0"]
            bound["process_term"][e] = np.array(
                [tv_density(sol_e(t), lim_sol(t - t0_lim) if x != 0 else lim_sol(t)) for t in t_grid]
            )
            bound["invariant_term"][e] = tv_density(inv_e, limit_inv)

    sup_seq = [sups[e] for e in eps_arr]
    decreasing = all(b <= a + 1e-12 for a, b in zip(sup_seq, sup_seq[1:]))
    return GradualReport(
        eps_list=tuple(eps_arr),
        t_grid=t_grid,
        limit_profile=g_prof,
        eps_profiles=eps_profiles,
        gaps=gaps,
        gap_sup=sups,
        gaps_decreasing=decreasing,
        bound_terms=bound,
    )


def mixing_time(
    profile: TvProfile,
    eta: float,
    a_eps: Optional[float] = None,
    limit_profile: Optional[TvProfile] = None,
) -> MixingReport:
    """First crossing time inf{t : d(t) <= eta} by linear interpolation.

    Monte Carlo profiles are regularized by the running minimum before the
    crossing is extracted (the underlying map is non-increasing); the raw
    crossing is reported alongside.  fp profiles must already be
    non-increasing within 1e-8.
    """
    if not 0.0 < eta < 1.0:
        raise InvalidParameterError("eta must lie in (0, 1)")
    values = profile.values
    if profile.channel == "fp_exact":
        if np.any(np.diff(values) > 1e-8):
            raise InvalidInputError("fp profile is not non-increasing within 1e-8")
        reg = np.minimum.accumulate(values)
        tau_raw = _crossing(profile.times, values, eta)
    else:
        reg = np.minimum.accumulate(values)
        tau_raw = _crossing(profile.times, values, eta, strict_monotone=False)
    tau = _crossing(profile.times, reg, eta)
    boundary = bool(values[0] <= eta)
    h_eta = None
    if limit_profile is not None:
        h_eta = _crossing(
            limit_profile.times, np.minimum.accumulate(limit_profile.values), eta
        )
    return MixingReport(
        eta=eta,
        tau=tau,
        tau_raw=tau_raw,
        channel=profile.channel,
        boundary=boundary,
        tau_over_a_eps=None if a_eps is None else tau / a_eps,
        h_eta=h_eta,
    )


def _crossing(times, values, eta, strict_monotone=True):
    if values[0] <= eta:
        return float(times[0])
    below = np.flatnonzero(values <= eta)
    if below.size == 0:
        raise HorizonError(
            f"profile never reached eta={eta:g} within the horizon "
            f"(last value {values[-1]:g})",
            last_value=float(values[-1]),
        )
    i = int(below[0])
    t0, t1 = times[i - 1], times[i]
    v0, v1 = values[i - 1], values[i]
    if v0 == v1:
        return float(t1)
    return float(t0 + (v0 - eta) * (t1 - t0) / (v0 - v1))


@dataclass(frozen=True)
class CutoffReport:
    """Window-scale diagnostic over the noise sweep.

    values[eps][delta] is the distance at delta times the sweep's scale;
    NO_CUTOFF means every entry stays inside (margin, 1 - margin); CUTOFF_LIKE
    means the family drifts to 1 below the window and to 0 above it.  This is
    a finite-noise diagnostic, not a proof of the limit statement.
    """

    verdict: str
    margin: float
    delta_grid: tuple
    eps_list: tuple
    values: dict
    mixing_ratios: dict
    notes: tuple


def cutoff_verdict(
    profiles: Dict[float, TvProfile],
    scales: Dict[float, float],
    delta_grid: Sequence[float],
    margin: float = 0.05,
    eta: float = 0.25,
) -> CutoffReport:
    """Classify the family's window behavior from rescaled profiles.

    profiles map eps to a TvProfile in window time (t = physical / scale);
    scales map eps to the window scale itself (reporting only).  Requires at
    least 3 eps values spanning at least 2 decades.
    """
    eps_list = sorted(profiles, reverse=True)
    if len(eps_list) < 3:
        raise InvalidInputError("cutoff verdict needs at least 3 eps values")
    if eps_list[0] / eps_list[-1] < 99.0:
        raise InvalidInputError("eps values must span at least 2 decades")
    if set(scales) != set(profiles):
        raise InvalidParameterError("scales must be keyed like profiles")
    deltas = tuple(float(d) for d in delta_grid)
    if not deltas or any(d <= 0 for d in deltas):
        raise InvalidParameterError("delta_grid must be positive")

    values = {e: {d: profiles[e].at(d) for d in deltas} for e in eps_list}
    ratios = {}
    for e in eps_list:
        try:
            ratios[e] = (
                mixing_time(profiles[e], eta).tau / mixing_time(profiles[e], 1.0 - eta).tau
            )
        except HorizonError:
            ratios[e] = math.nan

    inside = all(
        margin < values[e][d] < 1.0 - margin for e in eps_list for d in deltas
    )
    low_deltas = [d for d in deltas if d < 1.0]
    high_deltas = [d for d in deltas if d > 1.0]

    def _trend(seq, up):
        diffs = np.diff(seq)
        return np.all(diffs >= -1e-9) if up else np.all(diffs <= 1e-9)

    cutoff_like = bool(low_deltas and high_deltas)
    for d in low_deltas:
        seq = [values[e][d] for e in eps_list]  # eps decreasing
        cutoff_like = cutoff_like and _trend(seq, up=True) and seq[-1] > 1.0 - 2.0 * margin
    for d in high_deltas:
        seq = [values[e][d] for e in eps_list]
        cutoff_like = cutoff_like and _trend(seq, up=False) and seq[-1] < 2.0 * margin

    if inside:
        verdict = "NO_CUTOFF"
    elif cutoff_like:
        verdict = "CUTOFF_LIKE"
    else:
        verdict = "INCONCLUSIVE"
    notes = (
        f"finite-noise diagnostic at eps in {tuple(eps_list)}; margin {margin:g}",
        f"mixing ratio eta={eta:g}: tau(eta)/tau(1-eta) per eps",
    )
    return CutoffReport(
        verdict=verdict,
        margin=margin,
        delta_grid=deltas,
        eps_list=tuple(eps_list),
        values=values,
        mixing_ratios=ratios,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Exact Gaussian machinery (hyperbolic contrast oracle)
# ---------------------------------------------------------------------------


def _ncdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def gaussian_tv(m1: float, v1: float, m2: float, v2: float) -> float:
    """Exact total variation between two normal laws.

    The CDF difference D changes direction only where the densities cross
    (a quadratic equation); TV is half the total variation of D over the
    crossing points and the infinities.
    """
    if min(v1, v2) <= 0:
        raise InvalidParameterError("variances must be positive")
    if m1 == m2 and v1 == v2:
        return 0.0
    a = 0.5 / v2 - 0.5 / v1
    b = m1 / v1 - m2 / v2
    c = 0.5 * m2 * m2 / v2 - 0.5 * m1 * m1 / v1 + 0.5 * math.log(v2 / v1)
    if abs(a) < 1e-300:
        roots = [] if b == 0 else [-c / b]
    else:
        disc = b * b - 4.0 * a * c
        if disc <= 0:
            roots = []
        else:
            sq = math.sqrt(disc)
            roots = sorted([(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)])

    def D(z):
        return _ncdf((z - m1) / math.sqrt(v1)) - _ncdf((z - m2) / math.sqrt(v2))

    # D vanishes at -inf and +inf and turns only at density crossings
    pts = [0.0] + [D(r) for r in roots] + [0.0]
    return 0.5 * float(sum(abs(p - q) for p, q in zip(pts, pts[1:])))


def ou_distance(x: float, eps: float, t: float) -> float:
    """Distance to equilibrium of the linear-drift dynamics, in closed form.

    dX = -X dt + sqrt(eps) dB from x: the marginal is
    N(x e^-t, eps (1 - e^-2t)/2) and equilibrium is N(0, eps/2).
    """
    if t <= 0:
        return 1.0
    mean = x * math.exp(-t)
    var = eps * (1.0 - math.exp(-2.0 * t)) / 2.0
    return gaussian_tv(mean, var, 0.0, eps / 2.0)


def ou_window_scale(eps: float) -> float:
    """The hyperbolic window scale log(1/sqrt(eps))."""
    return 0.5 * math.log(1.0 / eps)


def ou_exact_profile(x: float, eps: float, t_grid, rescaled: bool = True) -> TvProfile:
    """Closed-form profile of the linear-drift contrast family.

    With rescaled=True the grid is in window time (physical time is
    t * ou_window_scale(eps)); the family then exhibits the abrupt 1 -> 0
    window transition as eps decreases.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    scale = ou_window_scale(eps) if rescaled else 1.0
    vals = np.array([ou_distance(x, eps, scale * t) for t in t_grid])
    return TvProfile(
        times=t_grid,
        values=vals,
        channel="fp_exact",
        context={"family": "linear-drift", "x0": x, "eps": eps, "closed_form": True},
    )


def ou_mixing_time(x: float, eps: float, eta: float) -> float:
    """Exact eta-crossing of the linear-drift distance profile (bisection)."""
    if not 0.0 < eta < 1.0:
        raise InvalidParameterError("eta must lie in (0, 1)")
    lo, hi = 1e-12, 1.0
    while ou_distance(x, eps, hi) > eta:
        hi *= 2.0
        if hi > 1e9:
            raise HorizonError("linear-drift profile never crossed eta", last_value=None)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ou_distance(x, eps, mid) > eta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
