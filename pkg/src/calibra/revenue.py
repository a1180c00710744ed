"""Expected seller revenue of the calibrated click-through auction.

For two bidders with i.i.d. values the revenue given CTRs ``r`` and signals
``s`` is

    R(r, s) = r1 * I(s2/s1) + r2 * I(s1/s2),
    I(q)    = integral of v * q * (1 - F(v*q)) * f(v) dv over the support,

evaluated by adaptive Simpson with the survival factor in closed form, or by
dedicated closed forms for the uniform-from-zero and exponential kinds.
Signals enter only through their ratio, so any common rescaling of ``s``
leaves the revenue unchanged.

The module also holds :class:`CtrPrior`, the finite prior over CTR vectors
shared by the scheme, LP and simulation layers.  Signal vectors are plain
tuples throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import ValueDistribution
from .quad import default_tol

_QUANT = 1e-12


class PriorError(ValueError):
    """Invalid CTR prior."""


def _key(value: float) -> int:
    return int(round(value / _QUANT))


@dataclass(frozen=True, eq=False)
class CtrPrior:
    """Finite prior over CTR vectors: states r in [0, 1]^n with weights."""

    states: tuple[tuple[float, ...], ...]
    probs: np.ndarray
    n: int

    @classmethod
    def from_states(cls, pairs) -> "CtrPrior":
        """Build and validate from an iterable of (ctr-vector, probability)."""
        states = []
        probs = []
        for r, p in pairs:
            states.append(tuple(float(c) for c in r))
            probs.append(float(p))
        if not states:
            raise PriorError("prior needs at least one state")
        n = len(states[0])
        if n < 1 or any(len(r) != n for r in states):
            raise PriorError("all CTR vectors must share the same length >= 1")
        arr = np.asarray(probs, dtype=float)
        if np.any(arr <= 0.0):
            raise PriorError("state probabilities must be positive")
        flat = [c for r in states for c in r]
        if min(flat) < 0.0 or max(flat) > 1.0:
            raise PriorError("CTR coordinates must lie in [0, 1]")
        if min(flat) == 0.0:
            warnings.warn("prior contains a CTR of exactly 0", stacklevel=2)
        total = float(arr.sum())
        if abs(total - 1.0) > 1e-9:
            raise PriorError(f"state probabilities sum to {total!r}, not 1")
        if abs(total - 1.0) > 1e-12:
            warnings.warn(f"renormalizing prior probabilities (sum {total!r})", stacklevel=2)
            arr = arr / total
        if len({tuple(_key(c) for c in r) for r in states}) != len(states):
            raise PriorError("duplicate CTR states in prior")
        return cls(states=tuple(states), probs=arr, n=n)

    @classmethod
    def from_records(cls, records) -> "CtrPrior":
        """Build from instance-file records {"r": [...], "prob": p}."""
        try:
            return cls.from_states((rec["r"], rec["prob"]) for rec in records)
        except (KeyError, TypeError) as exc:
            raise PriorError(f"malformed ctr_prior record: {exc}") from exc

    def to_records(self):
        return [{"r": list(r), "prob": float(p)} for r, p in zip(self.states, self.probs)]

    def prob_of(self, r) -> float:
        key = tuple(_key(float(c)) for c in r)
        for state, p in zip(self.states, self.probs):
            if tuple(_key(c) for c in state) == key:
                return float(p)
        raise KeyError(f"state {tuple(r)} not in prior")

    def bidder_bounds(self, i: int) -> tuple[float, float]:
        vals = [r[i] for r in self.states]
        return min(vals), max(vals)

    def ctr_values(self, i: int) -> list[float]:
        return sorted({r[i] for r in self.states})

    def mean_ctr(self, i: int) -> float:
        return float(sum(p * r[i] for r, p in zip(self.states, self.probs)))

    @property
    def r_floor(self) -> float:
        return min(c for r in self.states for c in r)

    def min_marginal(self) -> float:
        """Smallest marginal probability over (bidder, CTR value) pairs.

        Reported for diagnostics; never used to reject a prior.
        """
        worst = math.inf
        for i in range(self.n):
            acc: dict[int, float] = {}
            for r, p in zip(self.states, self.probs):
                k = _key(r[i])
                acc[k] = acc.get(k, 0.0) + float(p)
            worst = min(worst, min(acc.values()))
        return worst

    def is_exchangeable(self, tol: float = 1e-12) -> bool:
        if self.n != 2:
            return False
        table = {tuple(_key(c) for c in r): float(p) for r, p in zip(self.states, self.probs)}
        return all(
            abs(p - table.get((k2, k1), math.nan)) <= tol if (k2, k1) in table else k1 == k2
            for (k1, k2), p in table.items()
        )


# -- two-bidder revenue ------------------------------------------------------


def _pair_term(q: float, dist: ValueDistribution, tol: float) -> float:
    """I(q) = ∫ v q (1 - F(vq)) f(v) dv by quadrature."""
    if q == 0.0:
        return 0.0
    a, b = dist.support
    splits = []
    if not math.isinf(b) and q > 1.0:
        # the survival factor is exactly 0 beyond b/q
        splits.append(b / q)

    def g(v):
        return v * q * dist._survival(v * q)

    return dist.integrate_weighted(g, tol=tol, splits=splits)


def expected_revenue_two(r, s, dist: ValueDistribution, *, tol=None, method="auto") -> float:
    """Expected revenue at CTR pair ``r`` and signal pair ``s``.

    ``method="auto"`` dispatches to closed forms for uniform-from-zero and
    exponential values; ``method="quadrature"`` forces the generic path.
    """
    r1, r2 = (float(r[0]), float(r[1]))
    s1, s2 = (float(s[0]), float(s[1]))
    if len(r) != 2 or len(s) != 2:
        raise ValueError("expected_revenue_two is a two-bidder operation")
    if s1 <= 0.0 or s2 <= 0.0:
        raise ValueError("signals must be positive")
    if tol is None:
        tol = default_tol()
    if method == "auto":
        a, b = dist.support
        if dist.kind == "uniform" and a == 0.0:
            q = s2 / s1
            if q > 1.0:
                r1, r2, q = r2, r1, 1.0 / q
            return b * (r1 * (q / 2.0 - q * q / 3.0) + r2 * q / 6.0)
        if dist.kind == "exponential":
            return (r1 + r2) / dist.rate * (s1 * s2) / (s1 + s2) ** 2
    elif method != "quadrature":
        raise ValueError("method must be 'auto' or 'quadrature'")
    q = s2 / s1
    return r1 * _pair_term(q, dist, 0.5 * tol) + r2 * _pair_term(1.0 / q, dist, 0.5 * tol)


def expected_revenue_uniform_ratio(l: float, x: float, c: float) -> float:
    """Closed-form pair revenue c*(x/2 - x^2/3 + l*x/6) at CTRs (1, l).

    ``x`` is the signal ratio (low-CTR signal over high-CTR signal) and
    ``c`` the top of the uniform value support.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("ratio x must lie in [0, 1]")
    if not 0.0 <= l <= 1.0:
        raise ValueError("ctr l must lie in [0, 1]")
    if not c > 0.0:
        raise ValueError("support top c must be positive")
    return c * (x / 2.0 - x * x / 3.0 + l * x / 6.0)


def expected_revenue_reserve(r, s, reserve: float, dist: ValueDistribution, *, tol=None) -> float:
    """Expected revenue with a per-click reserve price.

    The winner sells only when her value clears the reserve and pays
    max(reserve, losing score / own signal) per click.  At ``reserve = 0``
    this coincides exactly with :func:`expected_revenue_two`.
    """
    reserve = float(reserve)
    if reserve < 0.0:
        raise ValueError("reserve must be nonnegative")
    if reserve == 0.0:
        return expected_revenue_two(r, s, dist, tol=tol)
    r1, r2 = (float(r[0]), float(r[1]))
    s1, s2 = (float(s[0]), float(s[1]))
    if s1 <= 0.0 or s2 <= 0.0:
        raise ValueError("signals must be positive")
    if tol is None:
        tol = default_tol()

    def term(q: float) -> float:
        a, b = dist.support
        splits = [reserve / q]
        if not math.isinf(b) and q > 1.0:
            splits.append(b / q)

        def g(v):
            pay = np.maximum(v * q, reserve)
            return pay * dist._survival(pay)

        return dist.integrate_weighted(g, tol=0.5 * tol, splits=splits)

    return r1 * term(s2 / s1) + r2 * term(s1 / s2)


def mc_expected_revenue(r, s, dist: ValueDistribution, samples: int = 10**6, seed: int = 7) -> float:
    """Fixed-seed Monte Carlo revenue for any bidder count.

    Used for LP objective coefficients when n >= 3; the common seed makes
    coefficient tables deterministic and comparable across signal cells.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    n = r.size
    if n == 1:
        return 0.0
    rng = np.random.default_rng(seed)
    v = np.asarray(dist.sample(rng, (int(samples), n)))
    prod = v * s
    w = np.argmax(prod, axis=1)
    rows = np.arange(prod.shape[0])
    top = prod[rows, w].copy()
    prod[rows, w] = -np.inf
    second = prod.max(axis=1)
    payment = second / s[w]
    return float(np.mean(r[w] * payment))
