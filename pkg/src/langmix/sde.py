"""Monte Carlo simulation of the original, rescaled, and limiting dynamics.

Noise is counter-based: the increment of path p at global step k is a pure
function of (seed, k, p), so ensembles are reproducible bit-for-bit, path p
never depends on how many paths run beside it, and two ensembles with the
same seed consume identical noise per (path, step) -- the synchronous
coupling contract.

The default drift update is the tamed Euler map
``x + dt f(x) / (1 + dt |f(x)|)``, which keeps moments of superlinear
confining drifts finite.  A backward Euler drift step (vectorized Newton) is
available for order-sensitive work: it is exactly monotone in the state and
tracks the fast descent from far-out initial conditions without the taming
speed cap.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ._rng import normal_matrix
from .errors import (
    BlowUpError,
    DescentRangeError,
    InvalidInputError,
    InvalidParameterError,
    StiffnessError,
)
from .flow import descend_from_infinity, entrance_integral, integrate_field
from .potential import Potential, ScalingPair, scaling


@dataclass(frozen=True)
class DriftField:
    """Evaluable velocity field with its provenance.

    kind is one of "original" (-V'), "rescaled" (the contracted field
    -V'(b_eps z)/b_eps^(1+alpha)), or "limit" (-c0 |z|^(1+alpha) sgn z).
    df, when present, is the spatial derivative used by the backward step.
    """

    f: Callable
    kind: str
    params: dict = field(default_factory=dict)
    df: Optional[Callable] = None


DRIFT_KINDS = ("original", "rescaled", "limit")


def make_drift(p: Potential, kind: str, eps: Optional[float] = None) -> DriftField:
    """Build the velocity field of the chosen representation of the dynamics.

    For the pure power potential the rescaled field coincides with the limit
    field for every eps (the space scale cancels identically).
    """
    if kind not in DRIFT_KINDS:
        raise InvalidParameterError(f"kind must be one of {DRIFT_KINDS}, got {kind!r}")
    alpha = p.alpha
    if kind == "original":

        def f(z):
            return -p.deriv1(z)

        def df(z):
            return -p.deriv2(z)

        return DriftField(f=f, kind=kind, params={"alpha": alpha}, df=df)
    if kind == "rescaled":
        if eps is None or not (0.0 < eps <= 1.0):
            raise InvalidParameterError("rescaled drift requires eps in (0, 1]")
        sc = scaling(eps, alpha)
        b = sc.b_eps
        b_pow = b ** (1.0 + alpha)
        b_al = b ** alpha

        def f(z):
            return -p.deriv1(b * np.asarray(z, dtype=float)) / b_pow

        def df(z):
            return -p.deriv2(b * np.asarray(z, dtype=float)) / b_al

        return DriftField(
            f=f, kind=kind, params={"eps": eps, "alpha": alpha, "c0": p.c0_local, "b_eps": b}, df=df
        )
    c0 = p.c0_local

    def f(z):
        z = np.asarray(z, dtype=float)
        return -c0 * np.abs(z) ** (1.0 + alpha) * np.sign(z)

    def df(z):
        z = np.asarray(z, dtype=float)
        return -c0 * (1.0 + alpha) * np.abs(z) ** alpha

    return DriftField(f=f, kind=kind, params={"alpha": alpha, "c0": c0}, df=df)


def limit_drift(alpha: float, c0: float) -> DriftField:
    """Free-standing limit field -c0 |z|^(1+alpha) sgn(z)."""
    if min(alpha, c0) <= 0:
        raise InvalidParameterError("alpha and c0 must be positive")

    def f(z):
        z = np.asarray(z, dtype=float)
        return -c0 * np.abs(z) ** (1.0 + alpha) * np.sign(z)

    def df(z):
        z = np.asarray(z, dtype=float)
        return -c0 * (1.0 + alpha) * np.abs(z) ** alpha

    return DriftField(f=f, kind="limit", params={"alpha": alpha, "c0": c0}, df=df)


@dataclass(frozen=True)
class SdeConfig:
    """Simulation parameters.  x0 may be +-inf (use simulate_from_infinity).

    record_every thins the stored grid (every k-th step plus endpoints);
    record_times, when given, wins and is snapped to step multiples.
    drift_step selects "tamed" (default) or "backward".
    """

    drift: DriftField
    noise_scale: float
    t_end: float
    dt: float
    n_paths: int
    seed: int
    x0: float
    record_every: int = 1
    record_times: Optional[tuple] = None
    drift_step: str = "tamed"
    mirror_noise: bool = False

    def __post_init__(self):
        if not (self.t_end > 0 and self.dt > 0):
            raise InvalidParameterError("t_end and dt must be positive")
        if self.dt > self.t_end / 10.0 + 1e-15:
            raise InvalidParameterError("dt must be at most t_end/10")
        if self.n_paths < 1:
            raise InvalidParameterError("n_paths must be >= 1")
        if self.noise_scale < 0:
            raise InvalidParameterError("noise_scale must be >= 0")
        if self.drift_step not in ("tamed", "backward"):
            raise InvalidParameterError(f"unknown drift_step {self.drift_step!r}")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be >= 1")


@dataclass(frozen=True)
class PathEnsemble:
    """Recorded trajectories on a common grid: paths[p, i] = X^(p)(times[i]).

    sup_abs, when tracked, holds the per-path running maximum of |state| over
    every step of the simulation (not only recorded ones).
    """

    times: np.ndarray
    paths: np.ndarray
    config: SdeConfig
    sup_abs: Optional[np.ndarray] = None
    label: str = ""

    def marginal(self, t: float) -> np.ndarray:
        """Samples of the marginal at the recorded time nearest to t."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 0.5 * self.config.dt + 1e-12:
            raise InvalidInputError(f"time {t!r} was not recorded (nearest {self.times[i]!r})")
        return self.paths[:, i]


def _n_steps(cfg: SdeConfig) -> int:
    n = int(round(cfg.t_end / cfg.dt))
    if abs(n * cfg.dt - cfg.t_end) > 1e-9 * cfg.dt:
        raise InvalidParameterError("t_end must be an integer multiple of dt")
    return n


def _record_steps(cfg: SdeConfig, n_steps: int) -> np.ndarray:
    if cfg.record_times is not None:
        steps = {0, n_steps}
        for t in cfg.record_times:
            k = int(round(t / cfg.dt))
            if k < 0 or k > n_steps or abs(k * cfg.dt - t) > 0.5 * cfg.dt:
                raise InvalidParameterError(f"record time {t!r} is off the step grid")
            steps.add(k)
        return np.array(sorted(steps))
    ks = np.arange(0, n_steps + 1, cfg.record_every)
    if ks[-1] != n_steps:
        ks = np.append(ks, n_steps)
    return ks


def _tamed_step(f, state, dt):
    fx = np.asarray(f(state), dtype=float)
    return state + dt * fx / (1.0 + dt * np.abs(fx))


def _backward_step(f, df, state, dt):
    if df is None:
        def df(y, h=1e-6):
            hh = h * (1.0 + np.abs(y))
            return (np.asarray(f(y + hh)) - np.asarray(f(y - hh))) / (2.0 * hh)

    y = np.array(state, dtype=float)
    for _ in range(100):
        resid = y - state - dt * np.asarray(f(y), dtype=float)
        if np.all(np.abs(resid) <= 1e-12 * (1.0 + np.abs(y))):
            return y
        slope = 1.0 - dt * np.asarray(df(y), dtype=float)
        slope = np.maximum(slope, 1e-12)
        y = y - resid / slope
    if np.all(np.abs(y - state - dt * np.asarray(f(y))) <= 1e-9 * (1.0 + np.abs(y))):
        return y
    raise StiffnessError("backward drift step failed to converge")


class _Member:
    __slots__ = ("x0", "drift", "start_step", "state", "rows", "row_steps", "sup_abs")

    def __init__(self, x0, drift, start_step):
        self.x0 = x0
        self.drift = drift
        self.start_step = start_step
        self.state = None
        self.rows = []
        self.row_steps = []
        self.sup_abs = None


def _descent_state(drift: DriftField, t: float) -> float:
    """psi_t(+inf) for the one-sided field u -> drift.f(u), u > 0."""

    def g(u):
        return float(drift.f(u))

    try:
        return descend_from_infinity(g, 1.0, t)
    except DescentRangeError:
        # already below level 1 at time t: descend part way, integrate the rest
        window = -entrance_integral(g, 1.0, math.inf)
        t_b = 0.5 * window
        psi_b = descend_from_infinity(g, 1.0, t_b)
        path = integrate_field(g, psi_b, t - t_b, dt=0.5 * (t - t_b), method="rk4", tol=1e-12)
        return float(path.states[-1])


def _run_members(cfg: SdeConfig, members, track_sup=False):
    n_steps = _n_steps(cfg)
    rec = set(_record_steps(cfg, n_steps).tolist())
    n_rec = len(rec)
    if cfg.n_paths * n_rec * len(members) > 4e8:
        raise InvalidParameterError(
            "recorded ensemble too large; increase record_every or pass record_times"
        )
    sqdt = math.sqrt(cfg.dt)
    step_fn = _tamed_step if cfg.drift_step == "tamed" else None
    for j in range(n_steps + 1):
        for m in members:
            if j == m.start_step:
                if math.isinf(m.x0):
                    psi = _descent_state(m.drift, m.start_step * cfg.dt)
                    start = math.copysign(psi, m.x0)
                else:
                    start = m.x0
                m.state = np.full(cfg.n_paths, float(start))
                if track_sup:
                    m.sup_abs = np.abs(m.state.copy())
            if m.state is not None and (j in rec or j == m.start_step):
                if not np.all(np.isfinite(m.state)):
                    bad = int(np.flatnonzero(~np.isfinite(m.state))[0])
                    raise BlowUpError(f"non-finite state in path {bad} at step {j}")
                m.rows.append(m.state.copy())
                m.row_steps.append(j)
        if j == n_steps:
            break
        xi = normal_matrix(cfg.seed, j, cfg.n_paths)
        if cfg.mirror_noise:
            xi = -xi
        noise = cfg.noise_scale * sqdt * xi
        for m in members:
            if m.state is None:
                continue
            if step_fn is not None:
                m.state = step_fn(m.drift.f, m.state, cfg.dt)
            else:
                m.state = _backward_step(m.drift.f, m.drift.df, m.state, cfg.dt)
            m.state = m.state + noise
            if track_sup:
                np.maximum(m.sup_abs, np.abs(m.state), out=m.sup_abs)

    out = []
    for m in members:
        times = cfg.dt * np.asarray(m.row_steps, dtype=float)
        paths = np.column_stack(m.rows) if m.rows else np.empty((cfg.n_paths, 0))
        out.append(
            PathEnsemble(
                times=times,
                paths=paths,
                config=cfg,
                sup_abs=None if not track_sup else m.sup_abs,
                label=f"x0={m.x0!r}",
            )
        )
    return out


def simulate(config: SdeConfig, track_sup: bool = False) -> PathEnsemble:
    """Tamed(-or-backward) Euler ensemble from a finite initial condition."""
    if math.isinf(config.x0):
        raise InvalidParameterError("x0 is infinite; use simulate_from_infinity")
    member = _Member(config.x0, config.drift, 0)
    return _run_members(config, [member], track_sup=track_sup)[0]


def simulate_from_infinity(config: SdeConfig, t0: float = 1e-3, track_sup: bool = False) -> PathEnsemble:
    """Ensemble started at +-infinity, bootstrapped deterministically.

    Paths begin at time t0 (snapped to the step grid, at least one step) from
    the descent state psi_t0(inf) of the drift field and evolve stochastically
    from there; the sign is mirrored for x0 = -inf.  Noise indices follow the
    global step grid, so the ensemble couples synchronously with finite-start
    ensembles sharing the seed.
    """
    if not math.isinf(config.x0):
        raise InvalidParameterError("simulate_from_infinity requires x0 = +-inf")
    if config.drift.kind not in ("limit", "rescaled"):
        raise InvalidParameterError("entrance from infinity needs the limit or rescaled drift")
    if not (0 < t0 < config.t_end / 10.0):
        raise InvalidParameterError("need 0 < t0 < t_end/10")
    k0 = max(1, int(round(t0 / config.dt)))
    member = _Member(config.x0, config.drift, k0)
    return _run_members(config, [member], track_sup=track_sup)[0]


def synchronous_couple(
    config: SdeConfig,
    x_list: Sequence[float],
    drifts: Optional[Sequence[DriftField]] = None,
    t0: float = 1e-3,
    track_sup: bool = False,
):
    """Ensembles from several initial conditions driven by identical noise.

    Entries of x_list may be +-inf (bootstrapped at t0 like
    simulate_from_infinity).  drifts optionally assigns one field per member
    (same length as x_list) for cross-dynamics couplings; default is the
    config drift for every member.  Initial ordering is preserved pathwise up
    to the discretization tolerance of the drift step ("backward" preserves
    it exactly).
    """
    if len(x_list) < 2:
        raise InvalidInputError("synchronous_couple needs at least 2 initial conditions")
    if drifts is None:
        drifts = [config.drift] * len(x_list)
    if len(drifts) != len(x_list):
        raise InvalidParameterError("drifts must match x_list in length")
    k0 = max(1, int(round(t0 / config.dt)))
    members = []
    for x0, dr in zip(x_list, drifts):
        if math.isinf(x0) and dr.kind not in ("limit", "rescaled"):
            raise InvalidParameterError("infinite starts need the limit or rescaled drift")
        members.append(_Member(float(x0), dr, k0 if math.isinf(x0) else 0))
    return _run_members(config, members, track_sup=track_sup)


def order_violation_fraction(low: PathEnsemble, high: PathEnsemble) -> float:
    """Fraction of (path, time) points where the lower-start path exceeds the upper."""
    shared = np.intersect1d(low.times, high.times)
    if shared.size == 0:
        raise InvalidInputError("ensembles share no recorded times")
    il = np.searchsorted(low.times, shared)
    ih = np.searchsorted(high.times, shared)
    bad = low.paths[:, il] > high.paths[:, ih]
    return float(np.mean(bad))


def rescale_ensemble(ens: PathEnsemble, sc: ScalingPair, t_end: Optional[float] = None) -> PathEnsemble:
    """View the ensemble in contracted coordinates: t -> X(a_eps t) / b_eps."""
    times = ens.times / sc.a_eps
    if t_end is not None and times[-1] < t_end * (1.0 - 1e-12):
        raise InvalidParameterError(
            f"requested rescaled horizon {t_end:g} exceeds simulated horizon {times[-1]:g}"
        )
    keep = slice(None) if t_end is None else (times <= t_end * (1.0 + 1e-12))
    return PathEnsemble(
        times=times[keep],
        paths=ens.paths[:, keep] / sc.b_eps,
        config=ens.config,
        sup_abs=None if ens.sup_abs is None else ens.sup_abs / sc.b_eps,
        label=f"rescaled(eps={sc.eps:g}):{ens.label}",
    )


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

_BINARY_MAGIC = b"LMIXENS1"


def export_ensemble_csv(ens: PathEnsemble, path, meta=None) -> None:
    """Rows are times: header 't,path_0,...', one row per recorded time."""
    n_paths = ens.paths.shape[0]
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append("t," + ",".join(f"path_{i}" for i in range(n_paths)))
    for i, t in enumerate(ens.times):
        lines.append(f"{t!r}," + ",".join(repr(v) for v in ens.paths[:, i]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_ensemble_binary(ens: PathEnsemble, path) -> None:
    """32-byte header (magic, n_paths, n_times, reserved), then the times
    vector and the path matrix as little-endian float64, row-major."""
    n_paths, n_times = ens.paths.shape
    header = _BINARY_MAGIC + struct.pack("<QQ", n_paths, n_times) + b"\x00" * 8
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ens.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ens.paths, dtype="<f8").tobytes())


def read_ensemble_binary(path):
    """Inverse of export_ensemble_binary; returns (times, paths)."""
    with open(path, "rb") as fh:
        header = fh.read(32)
        if header[:8] != _BINARY_MAGIC:
            raise InvalidInputError("not a langmix ensemble file")
        n_paths, n_times = struct.unpack("<QQ", header[8:24])
        times = np.frombuffer(fh.read(8 * n_times), dtype="<f8")
        paths = np.frombuffer(fh.read(8 * n_paths * n_times), dtype="<f8").reshape(
            n_paths, n_times
        )
    return times, paths
