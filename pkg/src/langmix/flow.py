"""Deterministic companion machinery for the stochastic dynamics.

Three jobs live here:

* the noiseless flow ``dphi/dt = -V'(phi)`` integrated with a backward Euler
  step (Newton inner solve, step halving on non-convergence) that is
  unconditionally monotone for convex potentials;
* entrance integrals ``F_L(x) = int_L^x du / G(u)`` for decaying fields and
  their inversion, which yields the state "coming down from infinity"
  ``psi_t(inf)`` solving ``F_L(psi_t(inf)) = t + F_L(inf)``;
* the second-moment envelope: the descent solution of
  ``Gtilde(y) = -2 c |y|^(1+alpha/2) + 1``, an upper bound for
  ``sup_x E|Y_t(x)|^2`` of the confined diffusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._quad import adaptive_simpson
from .errors import (
    DescentRangeError,
    EntranceConditionError,
    InvalidParameterError,
    NumericDomainError,
    StiffnessError,
)
from .potential import Potential


@dataclass(frozen=True)
class ScalarField:
    """A locally Lipschitz velocity field g: R -> R (spot-checked, not proved)."""

    g: Callable
    lipschitz_hint: Optional[float] = None
    label: str = ""


@dataclass(frozen=True)
class FlowPath:
    """A discretized trajectory; ``initial`` may be +-inf for descent paths."""

    times: np.ndarray
    states: np.ndarray
    initial: float


def _as_field(G) -> ScalarField:
    if isinstance(G, ScalarField):
        return G
    return ScalarField(g=G, label=getattr(G, "__name__", "field"))


def _num_deriv(g, y):
    h = 1e-6 * (1.0 + abs(y))
    return (g(y + h) - g(y - h)) / (2.0 * h)


def _newton_be(g, dg, x, h, reltol=1e-12, max_iter=20):
    """Solve y = x + h*g(y); returns (y, converged)."""
    y = x
    for _ in range(max_iter):
        gy = g(y)
        if not math.isfinite(gy):
            return y, False
        resid = y - x - h * gy
        slope = 1.0 - h * (dg(y) if dg is not None else _num_deriv(g, y))
        if slope <= 0.0 or not math.isfinite(slope):
            return y, False
        step = resid / slope
        y = y - step
        if abs(resid) <= reltol * (1.0 + abs(y)):
            return y, True
    return y, abs(y - x - h * g(y)) <= reltol * (1.0 + abs(y))


def _advance_be(g, dg, x, span, h0, dt_min):
    """Backward Euler across an interval of length span with halving on failure."""
    remaining = span
    h = min(h0, span)
    y = x
    while remaining > 1e-15 * span:
        h = min(h, remaining)
        y_new, ok = _newton_be(g, dg, y, h)
        if not ok:
            h *= 0.5
            if h < dt_min:
                raise StiffnessError(
                    f"implicit step collapsed below dt_min={dt_min:g} at state {y!r}"
                )
            continue
        y = y_new
        remaining -= h
        h = min(2.0 * h, h0)
    return y


def _rk4_step(g, y, h):
    k1 = g(y)
    k2 = g(y + 0.5 * h * k1)
    k3 = g(y + 0.5 * h * k2)
    k4 = g(y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance_rk4(g, x, span, tol, dt_min, h0=None):
    """Adaptive step-doubled classic Runge-Kutta with 5th-order extrapolation.

    For the smooth relaxation regime (after any descent inversion); not for
    stiff entry phases.
    """
    t = 0.0
    y = x
    h = h0 if h0 is not None else max(span / 16.0, dt_min)
    while t < span * (1.0 - 1e-15):
        h = min(h, span - t)
        y1 = _rk4_step(g, y, h)
        y2 = _rk4_step(g, _rk4_step(g, y, 0.5 * h), 0.5 * h)
        if not (math.isfinite(y1) and math.isfinite(y2)):
            h *= 0.25
            if h < dt_min:
                raise StiffnessError(f"rk4 step collapsed below {dt_min:g}")
            continue
        err = abs(y1 - y2)
        scale = tol * (1.0 + abs(y2))
        if err > scale and h > dt_min:
            h = max(0.25 * h, dt_min)
            continue
        y = y2 + (y2 - y1) / 15.0
        t += h
        if err > 0:
            h = min(4.0 * h, h * max(0.3, 0.9 * (scale / err) ** 0.2))
        else:
            h *= 4.0
    return y


def _advance_extrapolated(g, dg, x, span, tol, dt_min, h0=None):
    """Step-doubled backward Euler with Richardson extrapolation (2nd order)."""
    t = 0.0
    y = x
    h = h0 if h0 is not None else max(span / 16.0, dt_min)
    while t < span * (1.0 - 1e-15):
        h = min(h, span - t)
        y1, ok1 = _newton_be(g, dg, y, h)
        ya, ok2 = _newton_be(g, dg, y, 0.5 * h)
        y2, ok3 = _newton_be(g, dg, ya, 0.5 * h)
        if not (ok1 and ok2 and ok3):
            h *= 0.5
            if h < dt_min:
                raise StiffnessError(f"extrapolated step collapsed below {dt_min:g}")
            continue
        err = abs(y1 - y2)
        scale = tol * (1.0 + abs(y2))
        if err > scale and h > dt_min:
            h = max(0.5 * h, dt_min)
            continue
        y = 2.0 * y2 - y1
        t += h
        if err > 0:
            h = min(4.0 * h, h * max(0.5, 0.9 * math.sqrt(scale / err)))
        else:
            h *= 4.0
    return y


def integrate_field(
    G,
    x: float,
    t_end: float,
    dt: float,
    dg=None,
    method: str = "backward_euler",
    tol: float = 1e-9,
    dt_min: float = 1e-12,
) -> FlowPath:
    """Integrate dpsi/dt = G(psi) from psi(0) = x on the grid {0, dt, 2dt, ...}.

    Methods: "backward_euler" steps on the dt grid exactly (monotone in the
    initial condition for non-increasing G, stiff-safe); "extrapolated" adds
    step-doubling Richardson control at local tolerance tol; "rk4" is the
    adaptive classic Runge-Kutta pair for high accuracy on smooth stretches.
    """
    if not (dt > 0 and t_end > 0 and dt < t_end):
        raise InvalidParameterError("need 0 < dt < t_end")
    if method not in ("backward_euler", "extrapolated", "rk4"):
        raise InvalidParameterError(f"unknown method {method!r}")
    field = _as_field(G)
    n = int(round(t_end / dt))
    times = dt * np.arange(n + 1)
    if abs(times[-1] - t_end) > 1e-9 * dt:
        times = np.append(times, t_end)
    states = np.empty_like(times)
    states[0] = x
    y = x
    for i in range(1, len(times)):
        span = times[i] - times[i - 1]
        if method == "rk4":
            y = _advance_rk4(field.g, y, span, tol, dt_min)
        elif method == "extrapolated":
            y = _advance_extrapolated(field.g, dg, y, span, tol, dt_min)
        else:
            y = _advance_be(field.g, dg, y, span, span, dt_min)
        states[i] = y
    return FlowPath(times=times, states=states, initial=float(x))


def integrate_flow(p: Potential, x: float, t_end: float, dt: float, **kwargs) -> FlowPath:
    """Noiseless gradient flow dphi/dt = -V'(phi) from phi(0) = x."""

    def g(y):
        return -float(p.deriv1(y))

    def dg(y):
        return -float(p.deriv2(y))

    return integrate_field(g, x, t_end, dt, dg=dg, **kwargs)


def entrance_integral(G, L: float, x_upper: float, tol: float = 1e-10) -> float:
    """F_L(x_upper) = int_L^{x_upper} du / G(u) for a field negative beyond L.

    For x_upper = +inf the improper tail is summed over dyadic blocks
    [L 2^k, L 2^(k+1)] with geometric extrapolation once the block ratios
    stabilize; a non-decaying block sequence means the entrance condition
    fails and raises EntranceConditionError.
    """
    field = _as_field(G)
    g = field.g
    L = float(L)
    if L <= 0:
        raise InvalidParameterError("L must be positive")
    for probe in (L, 2.0 * L, 10.0 * L):
        if not g(probe) < 0:
            raise InvalidParameterError(f"G must be negative on [L, inf); G({probe:g}) >= 0")

    def integrand(u):
        return 1.0 / g(u)

    if np.isfinite(x_upper):
        if x_upper < L:
            raise InvalidParameterError("x_upper must be >= L")
        return adaptive_simpson(integrand, L, x_upper, tol=tol)

    total = 0.0
    prev = None
    ratios = []
    grow_count = 0
    for k in range(500):
        a = L * 2.0 ** k
        b = L * 2.0 ** (k + 1)
        block = adaptive_simpson(integrand, a, b, tol=max(1e-13, 0.01 * tol))
        total += block
        if abs(block) < 1e-14 * (1.0 + abs(total)):
            return total
        if prev is not None and prev != 0.0:
            r = block / prev
            if r >= 1.0 - 1e-9:
                grow_count += 1
                if grow_count >= 3:
                    raise EntranceConditionError(
                        f"tail of 1/G does not decay (block ratio {r:.6f} at k={k}); "
                        "the entrance integral diverges"
                    )
            else:
                grow_count = 0
            ratios.append(r)
            if len(ratios) >= 3 and r < 0.999:
                r1, r2, r3 = ratios[-3:]
                if abs(r3 - r2) <= 1e-9 * (1.0 + abs(r3)) and abs(r2 - r1) <= 1e-9 * (
                    1.0 + abs(r2)
                ):
                    return total + block * r / (1.0 - r)
        prev = block
    raise EntranceConditionError("tail of 1/G did not resolve after 500 dyadic blocks")


def descend_from_infinity(G, L: float, t: float, tol: float = 1e-10) -> float:
    """State at time t of the field's flow started at +infinity.

    Solves F_L(psi) = t + F_L(inf) by bisection on the strictly decreasing
    bijection F_L.  Raises DescentRangeError when the state has already
    descended below L at time t (continue with integrate_field from an
    earlier descent state in that case).
    """
    if not t > 0:
        raise InvalidParameterError("t must be positive")
    field = _as_field(G)
    g = field.g
    fl_inf = entrance_integral(field, L, math.inf, tol=tol)
    target = t + fl_inf
    if target > 0.0:
        raise DescentRangeError(
            f"t={t:g} exceeds the descent window (-F_L(inf) = {-fl_inf:g}); "
            "continue with integrate_field from the state at an earlier time"
        )

    def F(x):
        return adaptive_simpson(lambda u: 1.0 / g(u), L, x, tol=max(1e-13, 0.01 * tol))

    lo = L
    hi = 2.0 * L
    for _ in range(200):
        if F(hi) <= target:
            break
        hi *= 2.0
        if hi > 1e150:
            raise EntranceConditionError("failed to bracket the descent state")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * (1.0 + hi):
            break
    return 0.5 * (lo + hi)


def l2_envelope(alpha: float, c_star: float, t: float) -> float:
    """Upper bound for sup_x E|Y_t(x)|^2 of the confined diffusion.

    This is the descent-from-infinity solution of the scalar comparison field
    Gtilde(y) = -2 c_star |y|^(1+alpha/2) + 1.  Beyond the inversion window
    of F_L the solution is continued by the extrapolated implicit integrator
    (it then relaxes monotonically to the positive root (2 c_star)^(-2/(2+alpha))).
    """
    if min(alpha, c_star, t) <= 0:
        raise InvalidParameterError("alpha, c_star, t must all be positive")
    c = 2.0 * c_star
    q = 1.0 + 0.5 * alpha

    def gt(y):
        return -c * abs(y) ** q + 1.0

    def dgt(y):
        return -c * q * abs(y) ** (q - 1.0) * math.copysign(1.0, y)

    y_star = (1.0 / c) ** (1.0 / q)
    L = 2.0 * y_star
    t_max = -entrance_integral(gt, L, math.inf)
    if t <= 0.5 * t_max:
        return descend_from_infinity(gt, L, t)
    t_b = 0.5 * t_max
    psi_b = descend_from_infinity(gt, L, t_b)
    path = integrate_field(
        gt, psi_b, t - t_b, dt=0.5 * (t - t_b), dg=dgt, method="rk4", tol=1e-12
    )
    return float(path.states[-1])
