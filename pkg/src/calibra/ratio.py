"""Optimal signal-ratio analysis and the worst-case bound machinery.

For a CTR pair (1, l) the pair revenue depends on the signals only through
the ratio x = s2/s1.  Its derivative in x is

    d/dx R = integral of v * [ l*psi(v)*f(vx) - f(v)*psi(vx) ] dv,
    psi(t) = t*f(t) - (1 - F(t))    (density times virtual value),

which is the bracket form of the usual virtual-value expression, safe where
f vanishes.  ``optimal_ratio`` locates the maximizing ratio by bisection on
that derivative; ``inverse_ratio`` evaluates the closed-form inverse map

    l(x) = [integral v f(v) psi(vx) dv] / [integral v psi(v) f(vx) dv].

``RatioAnalysis`` caches the ratio curve on a Chebyshev grid and derives the
convexity verdict, the largest power keeping the curve above the diagonal,
diagonal crossings, the geometric mass sums, and the worst-case revenue
bound of the pair construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .distributions import DomainError, ValueDistribution
from .quad import adaptive_simpson, default_tol
from .revenue import expected_revenue_two

GRID_POINTS = 257
K_MAX = 64

# diagonal-crossing detection ignores grid nodes this close to l = 1, where
# the curve approaches zero quadratically and 1e-10 ratio noise flips signs
_EDGE = 5e-5
_NEG = 1e-9


class ConvexityError(RuntimeError):
    """Worst-case bound requested for a ratio curve that is not convex."""


def revenue_ratio_slope(x: float, l: float, dist: ValueDistribution, *, tol=None) -> float:
    """Derivative of the (1, l) pair revenue with respect to the signal ratio."""
    x = float(x)
    l = float(l)
    if not 0.0 < x <= 1.0:
        raise ValueError("ratio x must lie in (0, 1]")
    if not 0.0 <= l <= 1.0:
        raise ValueError("ctr l must lie in [0, 1]")
    if tol is None:
        tol = default_tol()
    a, b = dist.support
    if math.isinf(b):
        # f(v) is absorbed into the substitution; psi(v)/f(v) is the
        # virtual value, exact for the exponential kind
        def g(v):
            return v * (
                l * dist.virtual_value(v) * dist._pdf(v * x) - dist.virtual_density(v * x)
            )

        return dist.integrate_weighted(g, tol=tol)

    def w(v):
        return v * (
            l * dist.virtual_density(v) * dist._pdf(v * x)
            - dist._pdf(v) * dist.virtual_density(v * x)
        )

    return adaptive_simpson(w, a, b, tol=tol)


def optimal_ratio(
    l: float,
    dist: ValueDistribution,
    *,
    xtol: float = 1e-10,
    tol=None,
    check_mhr: bool = True,
) -> float:
    """Signal ratio in (l, 1] maximizing the (1, l) pair revenue.

    Bisects the revenue derivative on [l, 1] when it changes sign, returns
    1.0 when the derivative stays nonnegative, and falls back to a
    golden-section search on the revenue itself for irregular (non-MHR)
    inputs where the bracketing assumptions fail.
    """
    l = float(l)
    if not 0.0 <= l <= 1.0:
        raise ValueError("ctr l must lie in [0, 1]")
    if check_mhr and not dist.is_mhr():
        warnings.warn(
            "distribution hazard rate is not monotone; optimal_ratio guarantees "
            "hold only for MHR distributions",
            stacklevel=2,
        )
    if tol is None:
        tol = default_tol()
    lo = l + 1e-9
    if lo >= 1.0:
        return 1.0
    g_lo = revenue_ratio_slope(lo, l, dist, tol=tol)
    g_hi = revenue_ratio_slope(1.0, l, dist, tol=tol)
    if g_lo > 0.0 and g_hi < -max(1e-9, 10.0 * tol):
        return _bisect_sign(
            lambda x: revenue_ratio_slope(x, l, dist, tol=tol), lo, 1.0, xtol
        )
    if g_lo > 0.0:
        return 1.0
    return _golden_max(
        lambda x: expected_revenue_two((1.0, l), (1.0, x), dist, tol=tol),
        max(xtol, 1e-9),
        1.0,
        xtol,
    )


def inverse_ratio(x: float, dist: ValueDistribution, *, tol=None) -> float:
    """The CTR l whose optimal signal ratio equals ``x``."""
    x = float(x)
    if not 0.0 < x <= 1.0:
        raise ValueError("ratio x must lie in (0, 1]")
    if tol is None:
        tol = default_tol()
    a, b = dist.support
    if math.isinf(b):
        num = dist.integrate_weighted(lambda v: v * dist.virtual_density(v * x), tol=tol)
        den = dist.integrate_weighted(
            lambda v: v * dist.virtual_value(v) * dist._pdf(v * x), tol=tol
        )
    else:
        num = adaptive_simpson(
            lambda v: v * dist._pdf(v) * dist.virtual_density(v * x), a, b, tol=tol
        )
        den = adaptive_simpson(
            lambda v: v * dist.virtual_density(v) * dist._pdf(v * x), a, b, tol=tol
        )
    if den <= 10.0 * tol:
        raise DomainError(f"ratio {x} is outside the attainable range of the ratio curve")
    return num / den


def _bisect_sign(fn, lo, hi, xtol):
    # fn(lo) > 0 > fn(hi); narrow to xtol
    for _ in range(200):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(fn, lo, hi, xtol):
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = fn(c), fn(d)
    while hi - lo > xtol:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = fn(d)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class BoundReport:
    """Worst-case guarantee of the geometric pair construction."""

    convexity: str
    k0: int | None
    crossing: float | None
    ratio_at_crossing: float | None
    mass_sum: float | None
    z_star: float
    approx: float


class RatioAnalysis:
    """Cached ratio curve x(l) on a Chebyshev l-grid plus bound queries.

    The analysis is immutable after construction; all queries are
    read-only.  Interpolated queries go through a monotone-safe PCHIP fit
    of the cached nodes; the bound machinery re-solves the exact ratio
    where tolerances demand it.
    """

    def __init__(self, dist: ValueDistribution, grid_points: int = GRID_POINTS, k_max: int = K_MAX, tol=None):
        if grid_points < 16:
            raise ValueError("grid_points must be >= 16")
        self.dist = dist
        self.k_max = int(k_max)
        self._tol = default_tol() if tol is None else float(tol)
        self.mhr = dist.is_mhr()
        if not self.mhr:
            warnings.warn("ratio analysis on a non-MHR distribution", stacklevel=2)
        j = np.arange(grid_points)
        grid = 0.5 * (1.0 - np.cos(math.pi * j / (grid_points - 1)))
        grid[0], grid[-1] = 0.0, 1.0
        self.grid_l = grid
        self.grid_x = np.array(
            [optimal_ratio(l, dist, tol=self._tol, check_mhr=False) for l in grid]
        )
        self._interp = PchipInterpolator(self.grid_l, self.grid_x)
        self._convexity: str | None = None
        self._k0: int | None | str = "unset"

    def ratio(self, l):
        """Interpolated x(l), clipped to [0, 1]."""
        return np.clip(self._interp(l), 0.0, 1.0)

    # -- convexity ---------------------------------------------------------

    def convexity(self) -> str:
        """'convex', 'not-convex' or 'inconclusive'.

        Second divided differences of the cached curve, with a tolerance
        floor of 1e-8 widened by the noise the 1e-10 ratio solves induce at
        the clustered grid ends; cross-checked against concavity of the
        inverse map l(x) on a uniform ratio grid.
        """
        if self._convexity is not None:
            return self._convexity
        self._convexity = self._convexity_verdict()
        return self._convexity

    def _convexity_verdict(self) -> str:
        x = self.grid_x
        l = self.grid_l
        if x.max() - x.min() <= 1e-9:
            return "convex"  # constant ratio curve
        h1 = np.diff(l)[:-1]
        h2 = np.diff(l)[1:]
        dd = 2.0 * ((x[2:] - x[1:-1]) / h2 - (x[1:-1] - x[:-2]) / h1) / (h1 + h2)
        noise = 8.0 * 2e-10 / (h1 * h2)
        tol_dd = 1e-8 + noise
        grid_convex = bool(np.all(dd >= -tol_dd))

        inv_concave = self._inverse_concavity()
        if grid_convex and inv_concave in (True, None):
            return "convex"
        if not grid_convex and inv_concave in (False, None):
            return "not-convex"
        return "inconclusive"

    def _inverse_concavity(self) -> bool | None:
        x_lo = float(self.grid_x.min())
        xs = np.linspace(x_lo + 1e-6, 1.0 - 1e-9, 33)
        try:
            ls = np.array([inverse_ratio(float(xx), self.dist, tol=self._tol) for xx in xs])
        except (DomainError, ValueError):
            return None
        if not np.all(np.isfinite(ls)):
            return None
        h = xs[1] - xs[0]
        dd = (ls[2:] - 2.0 * ls[1:-1] + ls[:-2]) / (h * h)
        tol_dd = 1e-8 + 8.0 * 1e-8 / (h * h)
        return bool(np.all(dd <= tol_dd))

    # -- diagonal crossings --------------------------------------------------

    def initial_power(self):
        """Largest k with x(l)^k >= l across the grid; None if no power crosses.

        The next power k+1 dips below the diagonal at some l < 1.  Grid
        nodes within 5e-5 of l = 1 are excluded from the sign tests.
        """
        if self._k0 != "unset":
            return self._k0
        mask = self.grid_l <= 1.0 - _EDGE
        gl = self.grid_l[mask]
        cur = self.grid_x[mask].copy()
        k0 = None
        for k in range(1, self.k_max + 2):
            if k > 1:
                cur = cur * self.grid_x[mask]
            if np.min(cur - gl) < -_NEG:
                k0 = k - 1
                break
        self._k0 = k0
        return k0

    def crossing_point(self, k: int) -> float:
        """The sub-unit solution of x(l)^k = l, by bisection to 1e-10."""
        k0 = self.initial_power()
        if k0 is None:
            raise ValueError("the ratio curve never crosses the diagonal")
        if k <= k0:
            raise ValueError(f"no crossing for k <= {k0}")

        def h(l):
            return optimal_ratio(l, self.dist, tol=self._tol, check_mhr=False) ** k - l

        mask = self.grid_l <= 1.0 - _EDGE
        gl = self.grid_l[mask]
        vals = self.grid_x[mask] ** k - gl
        neg = np.flatnonzero(vals < -_NEG)
        if neg.size == 0:
            raise ValueError(f"no crossing found for k = {k} on the grid")
        i0 = int(neg[0])
        if i0 == 0:
            raise ValueError("ratio curve is below the diagonal at l = 0")
        lo, hi = float(gl[i0 - 1]), float(gl[i0])
        for _ in range(200):
            if hi - lo <= 1e-10:
                break
            mid = 0.5 * (lo + hi)
            if h(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    # -- mass sums and the bound ----------------------------------------------

    def mass_sum(self, k: int, l: float) -> float:
        """Geometric sum S(k, l) linking the suboptimal-pair mass to the budget.

        With sigma_i = x(l)^(k-i), S = 1 + t0 * (1 + q1 + q1 q2 + ...) where
        t0 = (l + 1 - 2 sigma_0)/(sigma_0 - l) and q_i = (1 - sigma_i)/(sigma_i - l).
        The per-state mass z of the ratio-one pair satisfies z * S = state mass.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        x = optimal_ratio(l, self.dist, tol=self._tol, check_mhr=False)
        return mass_sum_from_ratio(x, k, l)

    def worst_case_bound(self) -> BoundReport:
        """(z*, 1 - z*) for the geometric construction, gated on convexity.

        z* is the total ratio-one mass across both mirrored states (twice
        the per-state mass), the convention that reproduces the reference
        worked examples.
        """
        verdict = self.convexity()
        if verdict != "convex":
            raise ConvexityError(
                f"worst-case bound requires a convex ratio curve (verdict: {verdict})"
            )
        k0 = self.initial_power()
        if k0 is None:
            return BoundReport(verdict, None, None, None, None, 0.0, 1.0)
        crossing = self.crossing_point(k0 + 1)
        s = self.mass_sum(k0, crossing)
        z = 1.0 / s
        return BoundReport(
            convexity=verdict,
            k0=k0,
            crossing=crossing,
            ratio_at_crossing=optimal_ratio(crossing, self.dist, tol=self._tol, check_mhr=False),
            mass_sum=s,
            z_star=z,
            approx=1.0 - z,
        )


def mass_sum_from_ratio(x: float, k: int, l: float) -> float:
    """S(k, l) evaluated at an externally supplied ratio value."""
    sig = x ** (k - np.arange(k + 1, dtype=float))
    if sig[0] - l <= 1e-12:
        raise ValueError("mass sum undefined: sigma_0 = x^k must exceed l")
    t0 = (l + 1.0 - 2.0 * sig[0]) / (sig[0] - l)
    if k == 1:
        return 1.0 + t0
    q = (1.0 - sig[1:k]) / (sig[1:k] - l)
    return 1.0 + t0 * (1.0 + float(np.cumprod(q).sum()))
