"""Bidder value distributions and the auction quantities derived from them.

Four kinds are supported: ``uniform`` and ``exponential`` with closed forms,
``poly`` (polynomial density on a bounded interval, coefficients ascending by
power) and ``table`` (piecewise-linear density through given points,
renormalized at load).  All evaluators are vectorized; scalars in, scalars
out.  Densities must be point-mass free, which every kind here guarantees by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .quad import adaptive_simpson, adaptive_simpson_split, default_tol

KINDS = ("uniform", "exponential", "poly", "table")

# exp(-37) ~ 8.5e-17: tail mass beyond this quantile is below float noise
_EXP_TAIL = 37.0


class DistributionError(ValueError):
    """Invalid distribution specification."""


class DomainError(ValueError):
    """Evaluation outside the operation's domain (e.g. hazard at F(v) = 1)."""


@dataclass(frozen=True, eq=False)
class ValueDistribution:
    """A per-click value law with density, CDF, sampler and MHR diagnostics."""

    kind: str
    support: tuple[float, float]
    rate: float | None = None
    coeffs: tuple[float, ...] | None = None
    knots: np.ndarray | None = None
    dens: np.ndarray | None = None
    _int_coeffs: tuple[float, ...] | None = None
    _cdf_knots: np.ndarray | None = None

    # -- evaluators -------------------------------------------------------

    def pdf(self, v):
        """Density f(v); zero outside the support."""
        return _devec(self._pdf, v)

    def cdf(self, v):
        """Distribution function F(v), clamped to [0, 1]."""
        return _devec(self._cdf, v)

    def survival(self, v):
        """1 - F(v), evaluated without cancellation where a closed form exists."""
        return _devec(self._survival, v)

    def hazard_rate(self, v):
        """f(v) / (1 - F(v)); raises DomainError where F(v) = 1."""

        def h(arr):
            s = self._survival(arr)
            if np.any(s <= 0.0):
                raise DomainError("hazard rate undefined where F(v) = 1")
            return self._pdf(arr) / s

        return _devec(h, v)

    def virtual_value(self, v):
        """v - (1 - F(v)) / f(v); raises DomainError where f(v) = 0."""
        if self.kind == "exponential":
            # exact closed form, constant hazard
            return _devec(lambda a: a - 1.0 / self.rate, v)

        def phi(arr):
            f = self._pdf(arr)
            if np.any(f <= 0.0):
                raise DomainError("virtual value undefined where f(v) = 0")
            return arr - self._survival(arr) / f

        return _devec(phi, v)

    def virtual_density(self, v):
        """v*f(v) - (1 - F(v)), the product f(v) * virtual_value(v).

        Defined everywhere, which makes it the safe building block for the
        ratio-derivative integrands where f may vanish.
        """
        return _devec(lambda a: a * self._pdf(a) - self._survival(a), v)

    def is_mhr(self, grid_points: int = 1024) -> bool:
        """True when the hazard rate is nondecreasing across the check grid."""
        if grid_points < 3:
            raise ValueError("grid_points must be >= 3")
        a, b = self.support
        if math.isinf(b):
            grid = np.linspace(a, a + _EXP_TAIL / self.rate, grid_points)
        else:
            # cell midpoints keep F < 1 and stay inside the support
            step = (b - a) / grid_points
            grid = a + step * (np.arange(grid_points) + 0.5)
        f = self._pdf(grid)
        s = self._survival(grid)
        ok = s > 1e-300
        h = f[ok] / s[ok]
        if h.size < 3:
            return True
        return bool(np.all(np.diff(h) >= -1e-12))

    def sample(self, rng, size=None):
        """Inverse-CDF sampling from a caller-owned numpy Generator."""
        u = rng.random() if size is None else rng.random(size)
        return _devec(self._inverse_cdf, u)

    # -- array internals --------------------------------------------------

    def _pdf(self, v):
        a, b = self.support
        if self.kind == "uniform":
            inside = (v >= a) & (v <= b)
            return np.where(inside, 1.0 / (b - a), 0.0)
        if self.kind == "exponential":
            out = np.where(v >= 0.0, self.rate * np.exp(-self.rate * np.maximum(v, 0.0)), 0.0)
            return out
        if self.kind == "poly":
            inside = (v >= a) & (v <= b)
            vals = P.polyval(np.clip(v, a, b), self.coeffs)
            return np.where(inside, np.maximum(vals, 0.0), 0.0)
        inside = (v >= self.knots[0]) & (v <= self.knots[-1])
        vals = np.interp(v, self.knots, self.dens)
        return np.where(inside, vals, 0.0)

    def _cdf(self, v):
        a, b = self.support
        if self.kind == "uniform":
            return np.clip((v - a) / (b - a), 0.0, 1.0)
        if self.kind == "exponential":
            return np.where(v > 0.0, -np.expm1(-self.rate * np.maximum(v, 0.0)), 0.0)
        if self.kind == "poly":
            x = np.clip(v, a, b)
            vals = P.polyval(x, self._int_coeffs) - P.polyval(a, self._int_coeffs)
            return np.clip(vals, 0.0, 1.0)
        t = self.knots
        x = np.clip(v, t[0], t[-1])
        idx = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 2)
        w = x - t[idx]
        slope = (self.dens[idx + 1] - self.dens[idx]) / (t[idx + 1] - t[idx])
        vals = self._cdf_knots[idx] + self.dens[idx] * w + 0.5 * slope * w * w
        return np.clip(vals, 0.0, 1.0)

    def _survival(self, v):
        if self.kind == "uniform":
            a, b = self.support
            return np.clip((b - v) / (b - a), 0.0, 1.0)
        if self.kind == "exponential":
            return np.where(v > 0.0, np.exp(-self.rate * np.maximum(v, 0.0)), 1.0)
        return 1.0 - self._cdf(v)

    def _inverse_cdf(self, u):
        a, b = self.support
        if self.kind == "uniform":
            return a + (b - a) * u
        if self.kind == "exponential":
            return -np.log1p(-u) / self.rate
        lo = np.full_like(u, a, dtype=float)
        hi = np.full_like(u, b, dtype=float)
        # bisection on the exact CDF; 2^-60 of a bounded support beats 1e-12
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self._cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    # -- integration helper -----------------------------------------------

    def integrate_weighted(self, g, tol=None, max_evals=None, splits=()):
        """∫ g(v) f(v) dv over the support.

        Bounded kinds integrate in v; the exponential substitutes
        u = F(v) so the integral runs over [0, 1).  ``splits`` are known
        kink locations in v.
        """
        if tol is None:
            tol = default_tol()
        kwargs = {} if max_evals is None else {"max_evals": max_evals}
        a, b = self.support
        if not math.isinf(b):
            return adaptive_simpson_split(
                lambda v: g(v) * self._pdf(v), a, b, splits=splits, tol=tol, **kwargs
            )
        rate = self.rate
        u_max = 1.0 - 2.0**-53

        def g_u(u):
            return g(-np.log1p(-np.minimum(u, u_max)) / rate)

        u_splits = [float(self._cdf(np.asarray(s))) for s in splits]
        return adaptive_simpson_split(g_u, 0.0, 1.0, splits=u_splits, tol=tol, **kwargs)


def _devec(fn, v):
    arr = np.asarray(v, dtype=float)
    out = fn(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


# -- constructors ----------------------------------------------------------


def uniform(a: float = 0.0, b: float = 1.0) -> ValueDistribution:
    a, b = float(a), float(b)
    if not (0.0 <= a < b) or math.isinf(b):
        raise DistributionError("uniform support needs 0 <= a < b < inf")
    return ValueDistribution(kind="uniform", support=(a, b))


def exponential(rate: float) -> ValueDistribution:
    rate = float(rate)
    if not rate > 0.0:
        raise DistributionError("exponential rate must be positive")
    return ValueDistribution(kind="exponential", support=(0.0, math.inf), rate=rate)


def polynomial(coeffs, support) -> ValueDistribution:
    a, b = (float(support[0]), float(support[1]))
    if not (0.0 <= a < b) or math.isinf(b):
        raise DistributionError("polynomial support needs 0 <= a < b < inf")
    coeffs = tuple(float(c) for c in coeffs)
    if not coeffs:
        raise DistributionError("polynomial needs at least one coefficient")
    grid = np.linspace(a, b, 4097)
    vals = P.polyval(grid, coeffs)
    if vals.min() < -1e-12 * max(1.0, float(np.abs(vals).max())):
        raise DistributionError("polynomial density is negative on the support")
    int_coeffs = tuple(P.polyint(coeffs))
    total = P.polyval(b, int_coeffs) - P.polyval(a, int_coeffs)
    if abs(total - 1.0) > 1e-9:
        raise DistributionError(f"polynomial density integrates to {total!r}, not 1")
    return ValueDistribution(
        kind="poly", support=(a, b), coeffs=coeffs, _int_coeffs=int_coeffs
    )


def tabulated(points) -> ValueDistribution:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DistributionError("table needs at least two (v, f) rows")
    knots = pts[:, 0].copy()
    dens = pts[:, 1].copy()
    if np.any(np.diff(knots) <= 0):
        raise DistributionError("table abscissae must be strictly increasing")
    if knots[0] < 0:
        raise DistributionError("table support must be nonnegative")
    if np.any(dens < -1e-12):
        raise DistributionError("table density is negative")
    dens = np.maximum(dens, 0.0)
    seg = np.diff(knots) * 0.5 * (dens[:-1] + dens[1:])
    total = float(seg.sum())
    if total <= 0.0:
        raise DistributionError("table density has zero mass")
    dens /= total
    cdf_knots = np.concatenate([[0.0], np.cumsum(seg / total)])
    cdf_knots[-1] = 1.0
    return ValueDistribution(
        kind="table",
        support=(float(knots[0]), float(knots[-1])),
        knots=knots,
        dens=dens,
        _cdf_knots=cdf_knots,
    )


# -- (de)serialization ------------------------------------------------------


def from_spec(spec: dict) -> ValueDistribution:
    """Build a distribution from its JSON instance-file form."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DistributionError("distribution spec must be an object with a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "uniform":
            a, b = spec.get("support", (0.0, 1.0))
            return uniform(a, b)
        if kind == "exponential":
            return exponential(spec["rate"])
        if kind == "poly":
            return polynomial(spec["coeffs"], spec["support"])
        if kind == "table":
            return tabulated(spec["points"])
    except KeyError as exc:
        raise DistributionError(f"distribution spec missing field {exc}") from exc
    raise DistributionError(f"unknown distribution kind {kind!r}")


def to_spec(dist: ValueDistribution) -> dict:
    if dist.kind == "uniform":
        return {"kind": "uniform", "support": list(dist.support)}
    if dist.kind == "exponential":
        return {"kind": "exponential", "rate": dist.rate}
    if dist.kind == "poly":
        return {"kind": "poly", "coeffs": list(dist.coeffs), "support": list(dist.support)}
    return {"kind": "table", "points": [[float(v), float(f)] for v, f in zip(dist.knots, dist.dens)]}
