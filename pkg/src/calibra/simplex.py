"""Dense two-phase simplex for equality-constrained linear programs.

Standard form min c'x s.t. Ax = b, x >= 0 on a dense tableau.  Pivoting uses
Bland's anti-cycling rule: the entering column is the first with a negative
reduced cost, the leaving row the minimum-ratio row with ties broken toward
the smallest basis index.  Phase 1 starts from an artificial basis; basic
artificials left at zero are driven out or their (redundant) rows dropped.

The pivot loop is the hot kernel and ships as a numba-compiled scalar loop
with a vectorized numpy fallback (see calibra._accel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import jit_compile, resolve_backend

_PIVOT_TOL = 1e-11
_RATIO_TIE = 1e-12

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_ITERLIMIT = 2


class IterationLimitError(RuntimeError):
    """Simplex pivot budget exhausted before termination."""


@dataclass(frozen=True)
class LpProblem:
    """max (or min) objective @ x subject to a_eq @ x = b_eq, x >= 0."""

    objective: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    maximize: bool = True

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        a = np.asarray(self.a_eq, dtype=float)
        b = np.asarray(self.b_eq, dtype=float)
        if a.ndim != 2 or c.ndim != 1 or b.ndim != 1:
            raise ValueError("objective/b_eq must be vectors and a_eq a matrix")
        if a.shape != (b.size, c.size):
            raise ValueError(f"inconsistent LP shapes: A {a.shape}, b {b.size}, c {c.size}")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "a_eq", a)
        object.__setattr__(self, "b_eq", b)

    @property
    def num_variables(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.b_eq.size


@dataclass(frozen=True)
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float | None
    iterations: int


def _pivot_loop(tab, basis, max_iter, tol):
    # shared kernel body: compiled by numba, mirrored by the numpy variant
    m = tab.shape[0] - 1
    ncols = tab.shape[1] - 1
    it = 0
    while it < max_iter:
        enter = -1
        for j in range(ncols):
            if tab[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            return 0, it
        leave = -1
        best = np.inf
        for i in range(m):
            a = tab[i, enter]
            if a > tol:
                ratio = tab[i, ncols] / a
                if leave < 0 or ratio < best - _RATIO_TIE:
                    best = ratio
                    leave = i
                elif ratio <= best + _RATIO_TIE and basis[i] < basis[leave]:
                    if ratio < best:
                        best = ratio
                    leave = i
        if leave < 0:
            return 1, it
        inv = 1.0 / tab[leave, enter]
        for jj in range(ncols + 1):
            tab[leave, jj] *= inv
        for i in range(m + 1):
            if i != leave:
                f = tab[i, enter]
                if f != 0.0:
                    for jj in range(ncols + 1):
                        tab[i, jj] -= f * tab[leave, jj]
        basis[leave] = enter
        it += 1
    return 2, it


def _pivot_loop_numpy(tab, basis, max_iter, tol):
    m = tab.shape[0] - 1
    ncols = tab.shape[1] - 1
    for it in range(max_iter):
        neg = np.flatnonzero(tab[m, :ncols] < -tol)
        if neg.size == 0:
            return 0, it
        enter = int(neg[0])
        col = tab[:m, enter]
        pos = np.flatnonzero(col > tol)
        if pos.size == 0:
            return 1, it
        ratios = tab[pos, ncols] / col[pos]
        best = ratios.min()
        tied = pos[ratios <= best + _RATIO_TIE]
        leave = int(tied[np.argmin(basis[tied])])
        tab[leave] /= tab[leave, enter]
        f = tab[:, enter].copy()
        f[leave] = 0.0
        tab -= np.outer(f, tab[leave])
        basis[leave] = enter
    return 2, max_iter


_JIT_LOOP = None


def _kernel(backend: str):
    global _JIT_LOOP
    if backend == "numpy":
        return _pivot_loop_numpy
    if _JIT_LOOP is None:
        _JIT_LOOP = jit_compile(_pivot_loop)
    return _JIT_LOOP


def solve_lp(lp: LpProblem, *, max_iter: int | None = None, tol: float = _PIVOT_TOL, backend: str | None = None) -> LpSolution:
    """Solve an equality-form LP; raises IterationLimitError on pivot exhaustion.

    The returned basic solution is refined by re-solving the basis system
    against the original data, so feasibility residuals are at float level
    rather than accumulated-pivot level.
    """
    run = _kernel(resolve_backend(backend))
    c = lp.objective.copy()
    if lp.maximize:
        c = -c
    a = lp.a_eq.copy()
    b = lp.b_eq.copy()
    m, n = a.shape
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    if max_iter is None:
        max_iter = max(1000, 60 * m + 2 * n)

    # phase 1: artificial basis, minimize artificial mass
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = a
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -a.sum(axis=0)
    tab[m, -1] = -b.sum()
    basis = np.arange(n, n + m, dtype=np.int64)
    status, it1 = run(tab, basis, max_iter, tol)
    if status == STATUS_ITERLIMIT:
        raise IterationLimitError(f"phase-1 pivot budget ({max_iter}) exhausted")
    infeas = -tab[m, -1]
    if infeas > 1e-9 * max(1.0, float(np.abs(b).max() if m else 1.0)):
        return LpSolution(status="infeasible", x=None, objective=None, iterations=it1)

    # pivot out zero-level artificials; rows that cannot pivot are redundant
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n:
            row = tab[i, :n]
            cands = np.flatnonzero(np.abs(row) > tol)
            if cands.size:
                enter = int(cands[0])
                tab[i] /= tab[i, enter]
                f = tab[:, enter].copy()
                f[i] = 0.0
                tab -= np.outer(f, tab[i])
                basis[i] = enter
            else:
                keep[i] = False
    rows = np.flatnonzero(keep)
    m2 = rows.size

    # phase 2 tableau on the original columns
    tab2 = np.zeros((m2 + 1, n + 1))
    tab2[:m2, :n] = tab[rows, :n]
    tab2[:m2, -1] = tab[rows, -1]
    basis2 = basis[rows].astype(np.int64)
    cb = c[basis2]
    tab2[m2, :n] = c - cb @ tab2[:m2, :n]
    tab2[m2, -1] = -float(cb @ tab2[:m2, -1])
    status, it2 = run(tab2, basis2, max_iter, tol)
    if status == STATUS_ITERLIMIT:
        raise IterationLimitError(f"phase-2 pivot budget ({max_iter}) exhausted")
    if status == STATUS_UNBOUNDED:
        return LpSolution(status="unbounded", x=None, objective=None, iterations=it1 + it2)

    x = np.zeros(n)
    x[basis2] = tab2[:m2, -1]
    x = _refine(lp.a_eq, lp.b_eq, basis2, x)
    obj = float(lp.objective @ x)
    return LpSolution(status="optimal", x=x, objective=obj, iterations=it1 + it2)


def _refine(a, b, basis, x_tab):
    """Re-solve the basis system on the original data; keep the better residual."""
    cols = a[:, basis]
    try:
        xb, *_ = np.linalg.lstsq(cols, b, rcond=None)
    except np.linalg.LinAlgError:
        return x_tab
    x_ref = np.zeros_like(x_tab)
    x_ref[basis] = xb
    near = (x_ref < 0) & (x_ref > -1e-9)
    x_ref[near] = 0.0
    if np.any(x_ref < 0):
        return x_tab
    res_ref = np.abs(a @ x_ref - b).max() if b.size else 0.0
    res_tab = np.abs(a @ x_tab - b).max() if b.size else 0.0
    return x_ref if res_ref <= res_tab else x_tab
