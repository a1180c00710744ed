"""Adaptive Simpson quadrature over vectorized integrands.

Every numeric integral in the package runs through :func:`adaptive_simpson`.
Panels are refined until the Richardson error estimate ``|S_fine - S_coarse|/15``
drops below the panel's proportional share of the absolute tolerance; the
estimate is then folded into the running total.  Integrands must accept and
return numpy arrays of equal shape.
"""

from __future__ import annotations

import os

import numpy as np

DEFAULT_TOL = 1e-10
DEFAULT_BUDGET = 1_000_000
_TOL_ENV = "CALIBRA_QUAD_TOL"

# below ~2^-48 of the original width further bisection is float noise
_MAX_DEPTH = 48


class QuadratureError(RuntimeError):
    """Raised when the evaluation budget runs out before convergence."""


def default_tol() -> float:
    """Absolute quadrature tolerance; CALIBRA_QUAD_TOL overrides the default."""
    raw = os.environ.get(_TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        value = float(raw)
    except ValueError:
        return DEFAULT_TOL
    return value if value > 0 else DEFAULT_TOL


def adaptive_simpson(f, a, b, tol=None, max_evals=DEFAULT_BUDGET, min_depth=1, panels=8):
    """Integrate vectorized ``f`` over ``[a, b]`` to absolute tolerance.

    Args:
        f: callable mapping a float ndarray of abscissae to integrand values.
        a, b: integration bounds, ``a <= b``.
        tol: absolute tolerance; defaults to :func:`default_tol`.
        max_evals: integrand-evaluation budget; exceeding it raises
            :class:`QuadratureError`.
        min_depth: bisection levels forced before a panel may be accepted,
            guarding against spurious convergence on symmetric integrands.
        panels: initial uniform panel count; each level refines all open
            panels in a single vectorized call.
    """
    if tol is None:
        tol = default_tol()
    a = float(a)
    b = float(b)
    if b < a:
        raise ValueError("adaptive_simpson requires a <= b")
    if b == a:
        return 0.0

    edges = np.linspace(a, b, panels + 1)
    lo = edges[:-1].copy()
    hi = edges[1:].copy()
    mid = 0.5 * (lo + hi)
    grid = np.concatenate([edges, mid])
    vals = np.asarray(f(grid), dtype=float)
    f_lo = vals[:panels]
    f_hi = vals[1 : panels + 1]
    f_mid = vals[panels + 1 :]
    evals = grid.size
    coarse = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
    tols = np.full(panels, float(tol) / panels)
    depth = np.zeros(panels, dtype=int)

    total = 0.0
    while lo.size:
        if evals + 2 * lo.size > max_evals:
            raise QuadratureError(
                f"quadrature budget of {max_evals} evaluations exhausted "
                f"({lo.size} panels still open)"
            )
        m1 = 0.5 * (lo + mid)
        m2 = 0.5 * (mid + hi)
        f_m1 = np.asarray(f(m1), dtype=float)
        f_m2 = np.asarray(f(m2), dtype=float)
        evals += 2 * lo.size
        s_left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_m1 + f_mid)
        s_right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_m2 + f_hi)
        err = (s_left + s_right - coarse) / 15.0
        done = (np.abs(err) <= tols) & (depth >= min_depth)
        done |= depth >= _MAX_DEPTH
        if done.any():
            total += float(np.sum(s_left[done] + s_right[done] + err[done]))
        keep = ~done
        if not keep.any():
            break
        half_tol = 0.5 * tols[keep]
        next_depth = depth[keep] + 1
        lo, mid, hi, f_lo, f_mid, f_hi, coarse, tols, depth = (
            np.concatenate([lo[keep], mid[keep]]),
            np.concatenate([m1[keep], m2[keep]]),
            np.concatenate([mid[keep], hi[keep]]),
            np.concatenate([f_lo[keep], f_mid[keep]]),
            np.concatenate([f_m1[keep], f_m2[keep]]),
            np.concatenate([f_mid[keep], f_hi[keep]]),
            np.concatenate([s_left[keep], s_right[keep]]),
            np.concatenate([half_tol, half_tol]),
            np.concatenate([next_depth, next_depth]),
        )
    return total


def adaptive_simpson_split(f, a, b, splits=(), tol=None, max_evals=DEFAULT_BUDGET):
    """Integrate over ``[a, b]`` splitting at known kinks.

    ``splits`` are clipped to the open interval and each smooth segment gets
    a tolerance share proportional to its width.
    """
    if tol is None:
        tol = default_tol()
    pts = [a] + sorted({float(s) for s in splits if a < s < b}) + [b]
    if len(pts) == 2:
        return adaptive_simpson(f, a, b, tol=tol, max_evals=max_evals)
    width = b - a
    total = 0.0
    for left, right in zip(pts[:-1], pts[1:]):
        share = max(tol * (right - left) / width, 1e-300)
        total += adaptive_simpson(f, left, right, tol=share, max_evals=max_evals)
    return total
