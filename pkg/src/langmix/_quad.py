"""Adaptive Simpson quadrature on bounded intervals.

Shared by the flow module (entrance integrals) and the density module
(normalizing constants).  Recursion splits an interval until the classic
Richardson estimate |S_left + S_right - S_whole| <= 15 * tol holds; a global
evaluation budget turns pathological non-convergence into an error instead
of a hang.
"""

import math

from .errors import LangmixError, NumericDomainError

_MAX_EVALS = 2_000_000


def _eval(f, x, budget):
    budget[0] += 1
    if budget[0] > _MAX_EVALS:
        raise LangmixError(
            f"adaptive quadrature exceeded {_MAX_EVALS} evaluations without converging"
        )
    y = f(x)
    if not math.isfinite(y):
        raise NumericDomainError(f"integrand returned non-finite value {y!r} at z={x!r}")
    return float(y)


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _recurse(f, a, m, b, fa, fm, fb, whole, tol, depth, budget):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = _eval(f, lm, budget)
    frm = _eval(f, rm, budget)
    left = _simpson(fa, flm, fm, a, m)
    right = _simpson(fm, frm, fb, m, b)
    err = left + right - whole
    if abs(err) <= 15.0 * tol or depth <= 0:
        return left + right + err / 15.0
    return _recurse(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget) + _recurse(
        f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget
    )


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=44):
    """Integrate f over [a, b] to ~tol absolute accuracy.

    Raises NumericDomainError when the integrand evaluates to a non-finite
    value (naming the offending abscissa) and LangmixError when the
    evaluation budget is exhausted.
    """
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0
    budget = [0]
    m = 0.5 * (a + b)
    fa = _eval(f, a, budget)
    fm = _eval(f, m, budget)
    fb = _eval(f, b, budget)
    whole = _simpson(fa, fm, fb, a, b)
    return _recurse(f, a, m, b, fa, fm, fb, whole, tol, max_depth, budget)
