"""Signal-space discretization, LP assembly, and calibration-safe rounding.

The signal space of each bidder is cut into 1/eps steps between her
smallest and largest CTR, with the midpoint and every CTR value inserted;
halving eps yields a superset grid bit-for-bit.  Over the product grid the
design problem is a linear program in the masses x(r, s): one mass row per
state, one calibration row per (bidder, grid value), revenue coefficients
in the objective.

``round_and_repair`` moves an arbitrary valid calibrated scheme onto the
grid: masses are scaled down to reserve a repair budget, signals above the
per-bidder midpoint round down and the rest round up, and the posterior
drift of every rounded signal value is cancelled by routing reserved mass
from a state whose CTR sits at the needed extreme.  Leftover reserve is
spent on self-revealing entries, which are calibrated for free.
"""

from __future__ import annotations

import itertools
import math
import warnings

import numpy as np

from .distributions import ValueDistribution
from .revenue import (
    CtrPrior,
    expected_revenue_reserve,
    expected_revenue_two,
    mc_expected_revenue,
)
from .schemes import SchemeError, SignalingScheme
from .simplex import LpProblem, LpSolution, solve_lp

_SNAP = 1e-12


class SignalGrid:
    """Per-bidder sorted signal points with step metadata."""

    def __init__(self, points, steps, bounds, midpoints):
        self.points = tuple(np.asarray(p, dtype=float) for p in points)
        self.steps = tuple(steps)
        self.bounds = tuple(bounds)
        self.midpoints = tuple(midpoints)

    @property
    def n(self) -> int:
        return len(self.points)

    def sizes(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.points)


def _clamp_eps(eps: float) -> float:
    eps = float(eps)
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    if eps > 0.5:
        warnings.warn("eps > 1/2 clamped to 1/2", stacklevel=3)
        eps = 0.5
    return eps


def build_grid(prior: CtrPrior, eps: float) -> SignalGrid:
    """Per-bidder grids of ~1/eps steps including midpoint and CTR values."""
    eps = _clamp_eps(eps)
    points = []
    steps = []
    bounds = []
    midpoints = []
    for i in range(prior.n):
        lo, hi = prior.bidder_bounds(i)
        bounds.append((lo, hi))
        mid = 0.5 * (lo + hi)
        midpoints.append(mid)
        width = hi - lo
        if width <= 1e-15:
            points.append(np.array([lo]))
            steps.append(0.0)
            continue
        steps.append(eps * width)
        vals = []
        k = 0
        while k * eps < 1.0 - 1e-12:
            # (k*eps)*width keeps halved-eps grids exact supersets
            vals.append(lo + (k * eps) * width)
            k += 1
        vals.append(hi)
        vals.append(mid)
        vals.extend(prior.ctr_values(i))
        vals.sort()
        dedup = [vals[0]]
        for v in vals[1:]:
            if v - dedup[-1] > _SNAP:
                dedup.append(v)
        points.append(np.array(dedup))
    return SignalGrid(points, steps, bounds, midpoints)


def _coefficient_fn(dist, reserve, mc_samples, mc_seed, tol, n):
    if n == 2:
        if reserve and reserve > 0.0:
            return lambda r, s: expected_revenue_reserve(r, s, reserve, dist, tol=tol)
        return lambda r, s: expected_revenue_two(r, s, dist, tol=tol)
    if reserve and reserve > 0.0:
        raise NotImplementedError("reserve objectives are implemented for two bidders")
    return lambda r, s: mc_expected_revenue(r, s, dist, samples=mc_samples, seed=mc_seed)


def build_lp(
    prior: CtrPrior,
    dist: ValueDistribution,
    grid: SignalGrid,
    *,
    reserve: float = 0.0,
    mc_samples: int = 10**6,
    mc_seed: int = 7,
    tol=None,
) -> LpProblem:
    """LP over masses x(r, s): mass rows, calibration rows, revenue objective.

    Two-bidder objectives are analytic/quadrature; for n >= 3 coefficients
    come from fixed-seed common-random-number Monte Carlo.
    """
    n = prior.n
    combos = list(itertools.product(*[range(p.size) for p in grid.points]))
    n_states = len(prior.states)
    n_vars = n_states * len(combos)
    cal_rows = sum(grid.sizes())
    n_rows = n_states + cal_rows
    a = np.zeros((n_rows, n_vars))
    b = np.zeros(n_rows)
    c = np.zeros(n_vars)

    row_of = {}
    row = n_states
    for i in range(n):
        for j in range(grid.points[i].size):
            row_of[(i, j)] = row
            row += 1

    coeff = _coefficient_fn(dist, reserve, mc_samples, mc_seed, tol, n)
    var = 0
    for si, (state, lam) in enumerate(zip(prior.states, prior.probs)):
        b[si] = float(lam)
        for combo in combos:
            sig = tuple(float(grid.points[i][combo[i]]) for i in range(n))
            a[si, var] = 1.0
            for i in range(n):
                a[row_of[(i, combo[i])], var] = state[i] - sig[i]
            c[var] = coeff(state, sig)
            var += 1
    return LpProblem(objective=c, a_eq=a, b_eq=b, maximize=True)


def _solution_to_scheme(prior: CtrPrior, grid: SignalGrid, sol: LpSolution) -> SignalingScheme:
    combos = list(itertools.product(*[range(p.size) for p in grid.points]))
    x = sol.x.reshape(len(prior.states), len(combos))
    entries = []
    for si, (state, lam) in enumerate(zip(prior.states, prior.probs)):
        masses = x[si]
        total = masses.sum()
        scale = float(lam) / total if total > 0 else 0.0
        for ci, m in enumerate(masses):
            if m > 0.0:
                sig = tuple(float(grid.points[i][combos[ci][i]]) for i in range(grid.n))
                entries.append((state, sig, float(m) * scale))
    return SignalingScheme(entries, prior=prior)


def fptas_solve(
    prior: CtrPrior,
    dist: ValueDistribution,
    eps: float,
    *,
    reserve: float = 0.0,
    backend: str | None = None,
    mc_samples: int = 10**6,
    mc_seed: int = 7,
    tol=None,
):
    """Grid-discretized optimal calibrated scheme; returns (scheme, objective)."""
    eps = _clamp_eps(eps)
    grid = build_grid(prior, eps)
    lp = build_lp(
        prior, dist, grid, reserve=reserve, mc_samples=mc_samples, mc_seed=mc_seed, tol=tol
    )
    sol = solve_lp(lp, backend=backend)
    if sol.status != "optimal":
        raise SchemeError(f"signal-design LP terminated with status {sol.status!r}")
    scheme = _solution_to_scheme(prior, grid, sol)
    scheme.validate()
    resid = scheme.max_residual()
    if resid > 1e-9:
        raise SchemeError(f"LP scheme fails the calibration audit ({resid!r})")
    return scheme, float(sol.objective)


def fptas_solve_reserve(prior, dist, eps, reserve, **kwargs):
    """As fptas_solve with the reserve-price revenue objective."""
    if reserve < 0.0:
        raise ValueError("reserve must be nonnegative")
    return fptas_solve(prior, dist, eps, reserve=reserve, **kwargs)


def _snap_index(pts: np.ndarray, value: float) -> int | None:
    idx = int(np.searchsorted(pts, value))
    for j in (idx - 1, idx):
        if 0 <= j < pts.size and abs(pts[j] - value) <= _SNAP:
            return j
    return None


def round_and_repair(scheme: SignalingScheme, eps: float, prior: CtrPrior) -> SignalingScheme:
    """Round a valid calibrated scheme onto the eps-grid and restore calibration.

    Returns the input unchanged when every signal already sits on the grid.
    Raises SchemeError when a repair would need a donor state beyond the
    prior's extremes or more mass than the reservation holds.
    """
    eps = _clamp_eps(eps)
    if scheme.n != prior.n:
        raise SchemeError("scheme and prior bidder counts differ")
    scheme.validate(tol=1e-9)
    grid = build_grid(prior, eps)

    on_grid = True
    for i in range(scheme.n):
        pts = grid.points[i]
        for e in range(scheme.size):
            if _snap_index(pts, float(scheme.s[e, i])) is None:
                on_grid = False
                break
        if not on_grid:
            break
    if on_grid:
        return scheme

    n = scheme.n
    gamma = 2.0 * n * eps  # 2*eps per bidder covers the repair mass bound
    if gamma >= 0.5:
        warnings.warn("reservation fraction clamped to 1/2", stacklevel=2)
        gamma = 0.5

    rounded = []
    for e in range(scheme.size):
        sig = []
        for i in range(n):
            pts = grid.points[i]
            v = float(scheme.s[e, i])
            j = _snap_index(pts, v)
            if j is None:
                if v > grid.midpoints[i]:
                    j = int(np.searchsorted(pts, v)) - 1
                else:
                    j = int(np.searchsorted(pts, v, side="left"))
                j = min(max(j, 0), pts.size - 1)
            sig.append(float(pts[j]))
        rounded.append((tuple(scheme.r[e]), tuple(sig), float(scheme.mass[e]) * (1.0 - gamma)))

    budget = {
        tuple(r): gamma * float(p) for r, p in zip(prior.states, prior.probs)
    }

    repairs = []
    for i in range(n):
        lo_i, hi_i = grid.bounds[i]
        groups: dict[float, list[int]] = {}
        for e, (_, sig, _) in enumerate(rounded):
            groups.setdefault(sig[i], []).append(e)
        for d, idx in sorted(groups.items()):
            a_d = sum(rounded[e][2] for e in idx)
            b_d = sum(rounded[e][2] * rounded[e][0][i] for e in idx)
            resid = b_d - a_d * d
            if abs(resid) <= 1e-14:
                continue
            donor_val = lo_i if resid > 0 else hi_i
            denom = (d - lo_i) if resid > 0 else (hi_i - d)
            if denom <= _SNAP:
                raise SchemeError(
                    f"bidder {i}: no CTR state on the needed side of signal {d!r}"
                )
            delta = abs(resid) / denom
            donors = [
                st
                for st in budget
                if abs(st[i] - donor_val) <= _SNAP and budget[st] > 0.0
            ]
            donors.sort(key=lambda st: budget[st], reverse=True)
            for st in donors:
                if delta <= 0.0:
                    break
                take = min(delta, budget[st])
                if take <= 0.0:
                    continue
                sig = list(st)
                sig[i] = d
                repairs.append((st, tuple(sig), take))
                budget[st] -= take
                delta -= take
            if delta > 1e-15:
                raise SchemeError(
                    f"repair budget exhausted for bidder {i} at signal {d!r}; "
                    "the reservation fraction cannot absorb the rounding drift"
                )

    leftovers = [(st, st, rem) for st, rem in budget.items() if rem > 1e-18]
    out = SignalingScheme(rounded + repairs + leftovers, prior=prior)
    out.validate(tol=1e-9)
    return out
