"""Exact densities and total-variation distances.

Invariant (Gibbs) measures are tabulated by quadrature with a truncation
certificate; time marginals come from a conservative finite-difference
Fokker-Planck solver; total variation is computed either from densities on a
common grid or from samples via shared-bin histograms.

The Fokker-Planck discretization writes ``d rho/dt = -dJ/dz`` with the
exponential-fitted interface flux

    J_{j+1/2} = F [(1-d) rho_j + d rho_{j+1}] - D (rho_{j+1} - rho_j)/dz,

where the weight ``d(w)``, ``w = F dz / D``, reduces to the centered value
1/2 as ``w -> 0`` and makes the discrete stationary state match the Gibbs
ratio ``exp(F dz / D)`` exactly.  Time stepping is Crank-Nicolson with
step-doubling error control; no-flux boundaries conserve mass to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from ._quad import adaptive_simpson
from ._rng import side_generator
from .errors import (
    ConservationError,
    DomainTooSmallError,
    IncompatibleGridError,
    InvalidInputError,
    InvalidParameterError,
    LangmixError,
    SolverError,
)
from .potential import Potential, scaling


def grid_nodes(z_min: float, z_max: float, n: int) -> np.ndarray:
    """Uniform nodes; exactly antisymmetric when the interval is centered."""
    zs = np.linspace(z_min, z_max, n)
    if z_min == -z_max:
        zs = 0.5 * (zs - zs[::-1])
    return zs


@dataclass(frozen=True)
class DensityGrid:
    """A probability density tabulated on a uniform grid.

    mass is the trapezoid integral (1 after normalization); tail_bound is the
    certified analytic mass outside [z_min, z_max] for densities of a known
    family, None for evolved marginals.
    """

    z_min: float
    z_max: float
    n: int
    values: np.ndarray
    mass: float
    norm_constant: Optional[float] = None
    tail_bound: Optional[float] = None
    label: str = ""

    @property
    def z(self) -> np.ndarray:
        return grid_nodes(self.z_min, self.z_max, self.n)

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.n - 1)


def _trapz_mass(values: np.ndarray, dz: float) -> float:
    return float(np.trapezoid(values, dx=dz))


def _normalized_grid(z_min, z_max, values, norm_constant=None, tail_bound=None, label=""):
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        values = np.clip(values, 0.0, None)
    dz = (z_max - z_min) / (len(values) - 1)
    m = _trapz_mass(values, dz)
    if not (np.isfinite(m) and m > 0):
        raise InvalidInputError("density tabulation has non-finite or zero mass")
    return DensityGrid(
        z_min=float(z_min),
        z_max=float(z_max),
        n=len(values),
        values=values / m,
        mass=1.0,
        norm_constant=norm_constant,
        tail_bound=tail_bound,
        label=label,
    )


def _check_grid(grid):
    z_min, z_max, n = grid
    if not (np.isfinite(z_min) and np.isfinite(z_max) and z_min < z_max):
        raise InvalidParameterError(f"bad grid bounds ({z_min!r}, {z_max!r})")
    n = int(n)
    if n < 16:
        raise InvalidParameterError("grid needs at least 16 nodes")
    return float(z_min), float(z_max), n


def _gibbs_on_grid(neg_log, neg_log_deriv, grid, label, tail_tol=1e-10):
    """Tabulate exp(-A(z)) / C with a convexity-based truncation certificate.

    For convex A, the mass beyond Z is at most exp(-A(Z)) / A'(Z); the
    certificate requires the two tail bounds to be below tail_tol relative to
    the inner normalizing integral.
    """
    z_min, z_max, n = _check_grid(grid)
    zs = grid_nodes(z_min, z_max, n)

    def f(y):
        a = neg_log(y)
        return math.exp(-a) if a < 700 else 0.0

    c_inner = adaptive_simpson(f, z_min, z_max, tol=1e-12)
    if not (np.isfinite(c_inner) and c_inner > 0):
        raise InvalidInputError("normalizing integral vanished on the grid")

    def one_side_tail(zb, sign):
        slope = sign * neg_log_deriv(zb)
        if slope <= 0:
            return math.inf
        a = neg_log(zb)
        return math.exp(-a) / slope if a < 700 else 0.0

    tail = one_side_tail(z_max, +1.0) + one_side_tail(z_min, -1.0)
    rel_tail = tail / c_inner
    if not rel_tail < tail_tol:
        zq = abs(z_max)
        while zq < 1e12:
            zq *= 2.0
            if (one_side_tail(zq, +1.0) + one_side_tail(-zq, -1.0)) / c_inner < tail_tol:
                break
        raise DomainTooSmallError(
            f"truncation certificate failed: relative tail mass {rel_tail:.3e} "
            f">= {tail_tol:g}; widen the grid to about [-{zq:g}, {zq:g}]",
            suggested_z_max=zq,
        )

    a_vals = np.array([neg_log(z) for z in zs])
    vals = np.where(a_vals < 700.0, np.exp(-np.minimum(a_vals, 700.0)), 0.0)
    return _normalized_grid(
        z_min, z_max, vals, norm_constant=c_inner, tail_bound=rel_tail, label=label
    )


def invariant_density(p: Potential, eps: float, grid) -> DensityGrid:
    """Equilibrium law of the noisy gradient flow: exp(-2 V(z)/eps) / C_eps."""
    if not (0.0 < eps <= 1.0):
        raise InvalidParameterError(f"eps must lie in (0, 1], got {eps!r}")

    def neg_log(z):
        return 2.0 * float(p.value(z)) / eps

    def neg_log_deriv(z):
        return 2.0 * float(p.deriv1(z)) / eps

    return _gibbs_on_grid(neg_log, neg_log_deriv, grid, label=f"invariant:{p.label}:eps={eps:g}")


def limit_invariant_density(alpha: float, c0: float, grid) -> DensityGrid:
    """Equilibrium law of the limiting dynamics: exp(-2 c0 |z|^(2+alpha)/(2+alpha)) / C."""
    if min(alpha, c0) <= 0:
        raise InvalidParameterError("alpha and c0 must be positive")
    q = 2.0 + alpha
    scale = 2.0 * c0 / q

    def neg_log(z):
        return scale * abs(z) ** q

    def neg_log_deriv(z):
        return 2.0 * c0 * abs(z) ** (1.0 + alpha) * math.copysign(1.0, z) if z != 0 else 0.0

    return _gibbs_on_grid(
        neg_log, neg_log_deriv, grid, label=f"limit-invariant:alpha={alpha:g}:c0={c0:g}"
    )


def rescaled_invariant_density(p: Potential, eps: float, grid) -> DensityGrid:
    """Law of the equilibrium state contracted by the space scale b_eps.

    Density proportional to exp(-2 V(b_eps z)/eps) on the rescaled axis; for
    the pure power potential this coincides with the limit invariant exactly,
    for every eps.
    """
    if not (0.0 < eps <= 1.0):
        raise InvalidParameterError(f"eps must lie in (0, 1], got {eps!r}")
    b = scaling(eps, p.alpha).b_eps

    def neg_log(z):
        return 2.0 * float(p.value(b * z)) / eps

    def neg_log_deriv(z):
        return 2.0 * b * float(p.deriv1(b * z)) / eps

    return _gibbs_on_grid(
        neg_log, neg_log_deriv, grid, label=f"rescaled-invariant:{p.label}:eps={eps:g}"
    )


def gaussian_density(grid, mean: float, var: float, label="gaussian") -> DensityGrid:
    """Normalized Gaussian tabulation (initial data and test oracles)."""
    z_min, z_max, n = _check_grid(grid)
    zs = grid_nodes(z_min, z_max, n)
    vals = np.exp(-0.5 * (zs - mean) ** 2 / var)
    return _normalized_grid(z_min, z_max, vals, label=label)


def delta_density(grid, center: float, sigma: Optional[float] = None) -> DensityGrid:
    """Point initial data X_0 = x as a narrow Gaussian of std 2*dz (default)."""
    z_min, z_max, n = _check_grid(grid)
    dz = (z_max - z_min) / (n - 1)
    if sigma is None:
        sigma = 2.0 * dz
    if not (z_min + 4 * sigma < center < z_max - 4 * sigma):
        raise InvalidParameterError(
            f"delta center {center:g} too close to the grid edge [{z_min:g}, {z_max:g}]"
        )
    return gaussian_density(grid, center, sigma * sigma, label=f"delta:{center:g}")


# ---------------------------------------------------------------------------
# Fokker-Planck evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FpConfig:
    """Configuration of a Fokker-Planck solve on a truncated domain.

    drift may be a DriftField from the sde module or any callable z -> F(z).
    dt is the maximum (and initial) time step; the controller shrinks it
    whenever the step-doubling error estimate exceeds adapt_tol (L1 per step).
    """

    drift: object
    grid: tuple
    dt: float
    t_end: float
    boundary: str = "no_flux"
    noise_scale: float = 1.0
    adapt_tol: float = 1e-7
    dt_min: float = 1e-9

    def drift_callable(self) -> Callable:
        return getattr(self.drift, "f", self.drift)


def _bernoulli_ratio(w: np.ndarray) -> np.ndarray:
    """w / (e^w - 1), stable through w = 0 and across overflow."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-5
    ws = w[small]
    out[small] = 1.0 - 0.5 * ws + ws * ws / 12.0
    wl = w[~small]
    with np.errstate(over="ignore"):
        denom = np.expm1(np.minimum(wl, 700.0))
    out[~small] = np.where(wl > 700.0, 0.0, wl / denom)
    return out


class FpSolution:
    """Lazily evolved density: call with a time to obtain the marginal there.

    Times may be requested in any order; the solver steps forward from the
    nearest cached checkpoint at or below the requested time, so a sorted
    sweep costs a single pass.  All stepping is deterministic.
    """

    def __init__(self, cfg: FpConfig, rho0: DensityGrid):
        if cfg.boundary != "no_flux":
            raise InvalidParameterError(f"unsupported boundary {cfg.boundary!r}")
        if not (cfg.dt > 0 and cfg.t_end > 0):
            raise InvalidParameterError("dt and t_end must be positive")
        z_min, z_max, n = _check_grid(cfg.grid)
        if (
            abs(rho0.z_min - z_min) > 1e-12
            or abs(rho0.z_max - z_max) > 1e-12
            or rho0.n != n
        ):
            raise IncompatibleGridError("rho0 is not tabulated on cfg.grid")
        if abs(rho0.mass - 1.0) > 1e-6:
            raise InvalidInputError(f"rho0 must be normalized, mass={rho0.mass!r}")
        self.cfg = cfg
        self.z = grid_nodes(z_min, z_max, n)
        self.dz = (z_max - z_min) / (n - 1)
        f = cfg.drift_callable()
        half = 0.5 * (self.z[:-1] + self.z[1:])
        self._F_half = np.asarray(f(half), dtype=float)
        if not np.all(np.isfinite(self._F_half)):
            raise InvalidInputError("drift evaluated non-finite on the grid")
        self._D = 0.5 * cfg.noise_scale ** 2
        if self._D <= 0:
            raise InvalidParameterError("noise_scale must be positive for the FP evolution")
        # advisory CFL diagnostic (the scheme itself is implicit)
        self.cfl_ratio = cfg.dt * float(np.max(np.abs(self._F_half))) / self.dz
        self._assemble()
        self._mass0 = _trapz_mass(rho0.values, self.dz)
        self._checkpoints = [(0.0, rho0.values.copy())]
        self._min_value_seen = 0.0
        self.max_mass_drift = 0.0
        self._op_cache = {}

    def _assemble(self):
        # interface coefficients: J = a * rho_left + b * rho_right
        w = self._F_half * self.dz / self._D
        pm = _bernoulli_ratio(w)  # w/(e^w - 1) >= 0
        coef = self._D / self.dz
        a_int = coef * (pm + w)  # >= 0
        b_int = -coef * pm  # <= 0
        n = len(self.z)
        lower = np.zeros(n)
        diag = np.zeros(n)
        upper = np.zeros(n)
        inv_dz = 1.0 / self.dz
        # row j of d rho/dt = A rho gains -J_{j+1/2}/dz and +J_{j-1/2}/dz
        diag[:-1] -= a_int * inv_dz
        upper[:-1] -= b_int * inv_dz  # coefficient of rho_{j+1} in row j
        diag[1:] += b_int * inv_dz
        lower[1:] += a_int * inv_dz  # coefficient of rho_{j-1} in row j
        self._A = (lower, diag, upper)

    def _operator(self, dt):
        op = self._op_cache.get(dt)
        if op is None:
            lower, diag, upper = self._A
            n = len(diag)
            ab = np.zeros((3, n))
            ab[0, 1:] = -0.5 * dt * upper[:-1]
            ab[1, :] = 1.0 - 0.5 * dt * diag
            ab[2, :-1] = -0.5 * dt * lower[1:]
            op = ab
            if len(self._op_cache) > 32:
                self._op_cache.clear()
            self._op_cache[dt] = op
        return op

    def _rhs(self, state, dt):
        lower, diag, upper = self._A
        out = state + 0.5 * dt * (diag[:, None] * state)
        out[:-1] += 0.5 * dt * upper[:-1, None] * state[1:]
        out[1:] += 0.5 * dt * lower[1:, None] * state[:-1]
        return out

    def _cn_step(self, state, dt):
        ab = self._operator(dt)
        rhs = self._rhs(state, dt)
        try:
            out = solve_banded((1, 1), ab, rhs, check_finite=False)
        except Exception as exc:  # singular factorization
            raise SolverError(f"banded Crank-Nicolson solve failed: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise SolverError("Crank-Nicolson produced non-finite values")
        return out

    def _advance(self, state, span):
        """Error-controlled march across `span`; returns the new state."""
        tol = self.cfg.adapt_tol
        dt = min(self.cfg.dt, span)
        remaining = span
        while remaining > 1e-13 * max(1.0, span):
            dt = min(dt, remaining)
            full = self._cn_step(state, dt)
            half = self._cn_step(self._cn_step(state, 0.5 * dt), 0.5 * dt)
            err = float(np.max(np.sum(np.abs(full - half), axis=0))) * self.dz
            if err > tol and dt > self.cfg.dt_min:
                dt = max(0.25 * dt, self.cfg.dt_min)
                continue
            state = half
            remaining -= dt
            if err > 0:
                dt = min(
                    self.cfg.dt, dt * min(4.0, max(0.3, 0.85 * (tol / err) ** (1.0 / 3.0)))
                )
            else:
                dt = min(self.cfg.dt, 4.0 * dt)
        return state

    def __call__(self, t: float) -> DensityGrid:
        if t < 0 or t > self.cfg.t_end + 1e-12:
            raise InvalidParameterError(f"t={t!r} outside [0, t_end={self.cfg.t_end!r}]")
        base_t, base_state = max(
            ((tc, sc) for tc, sc in self._checkpoints if tc <= t + 1e-13),
            key=lambda item: item[0],
        )
        state = base_state
        if t > base_t + 1e-13:
            state = self._advance(base_state.reshape(-1, 1), t - base_t)[:, 0]
            mass = float(np.sum(state)) * self.dz  # flux form conserves the plain sum
            mass0 = float(np.sum(base_state)) * self.dz
            self.max_mass_drift = max(self.max_mass_drift, abs(mass - mass0))
            if abs(mass - mass0) > 1e-6:
                raise ConservationError(
                    f"mass drifted by {mass - mass0:.3e} over [{base_t:g}, {t:g}]"
                )
            self._checkpoints.append((t, state.copy()))
            self._min_value_seen = min(self._min_value_seen, float(np.min(state)))
        values = np.clip(state, 0.0, None)
        m = _trapz_mass(values, self.dz)
        return DensityGrid(
            z_min=float(self.z[0]),
            z_max=float(self.z[-1]),
            n=len(self.z),
            values=values / m,
            mass=1.0,
            label=f"fp:t={t:g}",
        )

    def evolve_matrix(self, states: np.ndarray, span: float) -> np.ndarray:
        """Advance a stack of densities (columns) through the same operator."""
        return self._advance(np.array(states, dtype=float), span)


def fp_evolve(cfg: FpConfig, rho0: DensityGrid) -> FpSolution:
    """Evolve rho0 under d rho/dt = D d^2 rho/dz^2 - d(F rho)/dz; returns t -> DensityGrid."""
    return FpSolution(cfg, rho0)


# ---------------------------------------------------------------------------
# Total variation
# ---------------------------------------------------------------------------


def tv_density(f: DensityGrid, g: DensityGrid) -> float:
    """Total variation via the overlap: 1 - integral of min(f, g).

    Cross-checked against the half-L1 form; a disagreement beyond 1e-10 means
    one input was not normalized.
    """
    if (
        abs(f.z_min - g.z_min) > 1e-12
        or abs(f.z_max - g.z_max) > 1e-12
        or f.n != g.n
    ):
        raise IncompatibleGridError("tv_density needs identical grids")
    dz = f.dz
    overlap = _trapz_mass(np.minimum(f.values, g.values), dz)
    tv_min = 1.0 - overlap
    tv_l1 = 0.5 * _trapz_mass(np.abs(f.values - g.values), dz)
    if abs(tv_min - tv_l1) > 1e-10:
        raise LangmixError(
            f"overlap and half-L1 total variation disagree ({tv_min!r} vs {tv_l1!r}); "
            "inputs are probably not normalized"
        )
    # the half-L1 form is exactly zero for identical inputs; the overlap form
    # carries the normalization roundoff of the two masses
    return float(min(1.0, max(0.0, tv_l1)))


def _bin_count(pooled: np.ndarray, bin_rule) -> int:
    n = pooled.size
    if isinstance(bin_rule, (int, np.integer)):
        if bin_rule < 1:
            raise InvalidParameterError("bin count must be >= 1")
        return int(bin_rule)
    span = float(np.max(pooled) - np.min(pooled))
    if span == 0.0:
        return 1
    if bin_rule == "fd":
        q75, q25 = np.percentile(pooled, [75.0, 25.0])
        width = 2.0 * (q75 - q25) / n ** (1.0 / 3.0)
        if width <= 0:
            return 1
    elif bin_rule == "sturges":
        return int(np.ceil(np.log2(n) + 1.0))
    elif bin_rule == "scott":
        width = 3.5 * float(np.std(pooled)) / n ** (1.0 / 3.0)
        if width <= 0:
            return 1
    else:
        raise InvalidParameterError(f"unknown bin rule {bin_rule!r}")
    return int(np.clip(np.ceil(span / width), 1, 4096))


def tv_samples(s1, s2, bin_rule="fd") -> float:
    """Histogram total-variation estimate between two sample sets.

    Bins share a common range over the pooled data; the default width is the
    Freedman-Diaconis choice on the pool.  The estimator is biased upward by
    roughly sqrt(bins/n); prefer coarser rules when comparing nearly equal
    laws.
    """
    s1 = np.asarray(s1, dtype=float).ravel()
    s2 = np.asarray(s2, dtype=float).ravel()
    if s1.size < 100 or s2.size < 100:
        raise InvalidInputError("tv_samples needs at least 100 samples on each side")
    if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
        raise InvalidInputError("samples must be finite")
    pooled = np.concatenate([s1, s2])
    nb = _bin_count(pooled, bin_rule)
    lo = float(np.min(pooled))
    hi = float(np.max(pooled))
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, nb + 1)
    p = np.histogram(s1, bins=edges)[0] / s1.size
    q = np.histogram(s2, bins=edges)[0] / s2.size
    return float(0.5 * np.sum(np.abs(p - q)))


def sample_density(grid: DensityGrid, n: int, seed: int, tag: int = 0) -> np.ndarray:
    """Draw iid samples from a tabulated density by inverse-CDF interpolation."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    zs = grid.z
    dz = grid.dz
    cdf = np.concatenate(
        ([0.0], np.cumsum(0.5 * (grid.values[1:] + grid.values[:-1]) * dz))
    )
    cdf /= cdf[-1]
    u = side_generator(seed, tag).random(n)
    return np.interp(u, cdf, zs)


def export_density_csv(grid: DensityGrid, path, meta=None) -> None:
    """Two-column (z, rho) table with grid metadata in '#' comment lines."""
    lines = [
        f"# label={grid.label}",
        f"# z_min={grid.z_min!r} z_max={grid.z_max!r} n={grid.n}",
        f"# mass={grid.mass!r} norm_constant={grid.norm_constant!r} tail_bound={grid.tail_bound!r}",
    ]
    for key, val in (meta or {}).items():
        lines.append(f"# {key}={val}")
    lines.append("z,rho")
    zs = grid.z
    for z, r in zip(zs, grid.values):
        lines.append(f"{z!r},{r!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
