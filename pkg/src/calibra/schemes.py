"""Signaling schemes: representation, audits, and the geometric construction.

A scheme is a finite list of entries (ctr-vector r, signal-vector s, mass)
with mass = prior weight times the conditional probability of sending s
from r.  Calibration means that for every bidder i and signal value sent to
her, the mass-weighted mean CTR equals the signal value.

The pair construction sends a geometric ladder of signal pairs at the
optimal ratio from a mirrored CTR pair {(l, 1), (1, l)}, plus at most one
equal-signal pair carrying the leftover mass needed for calibration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import ValueDistribution
from .ratio import mass_sum_from_ratio, optimal_ratio
from .revenue import CtrPrior, expected_revenue_two

_QUANT = 1e-12
_K_CAP = 64


class SchemeError(ValueError):
    """Invalid or inconsistent signaling scheme."""


def _key(value: float) -> int:
    return int(round(value / _QUANT))


def _row_key(row) -> tuple:
    return tuple(_key(float(v)) for v in row)


class SignalingScheme:
    """Immutable value object: entry arrays plus an optional prior handle."""

    def __init__(self, entries, prior: CtrPrior | None = None, merge: bool = True):
        rows = [(tuple(map(float, r)), tuple(map(float, s)), float(m)) for r, s, m in entries]
        if not rows:
            raise SchemeError("scheme needs at least one entry")
        n = len(rows[0][0])
        if any(len(r) != n or len(s) != n for r, s, _ in rows):
            raise SchemeError("all entries must share the same bidder count")
        if merge:
            acc: dict[tuple, list] = {}
            for r, s, m in rows:
                key = (_row_key(r), _row_key(s))
                if key in acc:
                    acc[key][2] += m
                else:
                    acc[key] = [r, s, m]
            rows = [tuple(v) for v in acc.values()]
        rows.sort(key=lambda e: (_row_key(e[0]), _row_key(e[1])))
        self.r = np.array([r for r, _, _ in rows], dtype=float)
        self.s = np.array([s for _, s, _ in rows], dtype=float)
        self.mass = np.array([m for _, _, m in rows], dtype=float)
        self.prior = prior

    @property
    def n(self) -> int:
        return self.r.shape[1]

    @property
    def size(self) -> int:
        return self.r.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def entries(self):
        return [
            (tuple(self.r[i]), tuple(self.s[i]), float(self.mass[i]))
            for i in range(self.size)
        ]

    def validate(self, tol: float = 1e-12) -> None:
        """Mass nonnegativity/conservation and signal-range checks."""
        if np.any(self.mass < -1e-12):
            raise SchemeError("negative entry mass")
        if self.prior is not None:
            if self.prior.n != self.n:
                raise SchemeError("prior and scheme bidder counts differ")
            sums: dict[tuple, float] = {}
            for i in range(self.size):
                k = _row_key(self.r[i])
                sums[k] = sums.get(k, 0.0) + float(self.mass[i])
            lam = {_row_key(r): float(p) for r, p in zip(self.prior.states, self.prior.probs)}
            for k, total in sums.items():
                if k not in lam:
                    raise SchemeError("scheme entry references a state not in the prior")
                if abs(total - lam[k]) > tol:
                    raise SchemeError(
                        f"state mass {total!r} differs from prior weight {lam[k]!r}"
                    )
            if abs(self.total_mass - 1.0) > max(tol, 1e-12) * len(lam):
                raise SchemeError(f"total mass {self.total_mass!r} is not 1")
            floor = self.prior.r_floor
        else:
            floor = 0.0
        if self.size and (self.s.min() < floor - 1e-9 or self.s.max() > 1.0 + 1e-9):
            raise SchemeError("signal coordinate outside [r_floor, 1]")

    def is_calibrated(self, tol: float = 1e-9) -> bool:
        res = calibration_residuals(self)
        return all(abs(v) <= tol for _, _, v in res)

    def max_residual(self) -> float:
        res = calibration_residuals(self)
        return max(abs(v) for _, _, v in res) if res else 0.0


def calibration_residuals(scheme: SignalingScheme, merge_tol: float = _QUANT):
    """One residual per (bidder, distinct signal value).

    The residual is sum of mass * (r_i - s') over entries sending s' to
    bidder i, with signal values merged at ``merge_tol``; a scheme is
    calibrated when every residual is ~0.
    """
    out = []
    quant = merge_tol
    for i in range(scheme.n):
        groups: dict[int, list[int]] = {}
        for e in range(scheme.size):
            k = int(round(scheme.s[e, i] / quant))
            groups.setdefault(k, []).append(e)
        for k in sorted(groups):
            idx = groups[k]
            m = scheme.mass[idx]
            total = float(m.sum())
            if total <= 0.0:
                continue
            s_val = float((m * scheme.s[idx, i]).sum() / total)
            residual = float((m * (scheme.r[idx, i] - s_val)).sum())
            out.append((i, s_val, residual))
    return out


def scheme_revenue(scheme: SignalingScheme, dist: ValueDistribution, *, tol=None) -> float:
    """Mass-weighted expected revenue over the scheme's entries (two bidders)."""
    if scheme.n != 2:
        raise SchemeError("analytic scheme revenue is a two-bidder operation; simulate for n >= 3")
    total = 0.0
    for e in range(scheme.size):
        m = float(scheme.mass[e])
        if m == 0.0:
            continue
        total += m * expected_revenue_two(scheme.r[e], scheme.s[e], dist, tol=tol)
    return total


@dataclass(frozen=True)
class ConstructionReport:
    """Parameters and revenue accounting of one mirrored-pair construction."""

    l: float
    h: float
    x: float
    k: int
    sigma: tuple[float, ...]
    p: tuple[float, ...]
    z: float
    mass_sum: float
    ratio_one_mass: float
    pair_mass: float
    revenue: float
    upper_bound: float


def _pair_ladder(l: float, x: float, pair_mass: float):
    """Signal ladder and masses for one mirrored pair at ratio ``x``.

    Returns (K, sigma, p, z).  K follows floor(log_x l) with a 1e-12 guard
    against boundary misclassification; for l = 0 the ladder would be
    infinite, so K is capped while keeping sigma_0 below (1 + l)/2 (which
    keeps the equal-pair mass z nonnegative).
    """
    if x <= 0.0 or x >= 1.0:
        raise SchemeError("pair ladder needs a ratio strictly inside (0, 1)")
    cap = max(_K_CAP, int(math.ceil(math.log((1.0 + l) / 2.0) / math.log(x))) + 1)
    if l <= 0.0:
        k = cap
    else:
        k = int(math.floor(math.log(l) / math.log(x) + 1e-12))
        k = max(1, min(k, cap))
    sigma = x ** (k - np.arange(k + 1, dtype=float))
    exact_fit = sigma[0] - l <= 1e-12 * max(1.0, l)
    if not exact_fit and 1.0 + l - 2.0 * sigma[0] <= 0.0:
        raise SchemeError("ladder head does not leave room for the calibration mass")
    t_z = 0.0 if exact_fit else (sigma[0] - l) / (1.0 + l - 2.0 * sigma[0])
    q = (1.0 - sigma[1:k]) / (sigma[1:k] - l)
    cum = np.concatenate([[1.0], np.cumprod(q)])  # p_k / p_0 for k = 0..K-1
    p0 = pair_mass / (cum.sum() + t_z)
    p = p0 * cum
    z = p0 * t_z
    return k, sigma, p, z


def construct_simple(
    l: float,
    dist: ValueDistribution,
    pair_mass: float = 0.5,
    *,
    ratio: float | None = None,
    tol=None,
):
    """Geometric signaling scheme for the mirrored pair {(l, 1), (1, l)}.

    Each state spends mass ``pair_mass``; the state with the high CTR sees
    the larger signal of every pair and all pairs sit at the (or the
    supplied) target ratio except the single equal-signal pair of mass z.
    Returns (scheme, report); the scheme carries the two-state prior when
    pair_mass = 1/2, otherwise it is a fragment meant for embedding.
    """
    l = float(l)
    if not 0.0 <= l < 1.0:
        raise ValueError("ctr l must lie in [0, 1)")
    if not 0.0 < pair_mass <= 0.5:
        raise ValueError("pair_mass must lie in (0, 1/2]")
    x = float(ratio) if ratio is not None else optimal_ratio(l, dist, tol=tol)
    if x >= 1.0 - 1e-9:
        raise SchemeError(
            "optimal ratio is 1; revealing no information is already optimal "
            "(use no_information_scheme)"
        )
    k, sigma, p, z = _pair_ladder(l, x, pair_mass)
    low_state = (l, 1.0)
    high_state = (1.0, l)
    entries = []
    for j in range(k):
        entries.append((low_state, (sigma[j], sigma[j + 1]), p[j]))
        entries.append((high_state, (sigma[j + 1], sigma[j]), p[j]))
    if z > 0.0:
        entries.append((low_state, (sigma[0], sigma[0]), z))
        entries.append((high_state, (sigma[0], sigma[0]), z))
    prior = None
    if abs(pair_mass - 0.5) <= 1e-12:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            prior = CtrPrior.from_states([(low_state, 0.5), (high_state, 0.5)])
    scheme = SignalingScheme(entries, prior=prior)
    rev_pair = expected_revenue_two((1.0, l), (1.0, x), dist, tol=tol)
    rev_one = expected_revenue_two((1.0, l), (1.0, 1.0), dist, tol=tol)
    ladder_mass = 2.0 * float(p.sum())
    report = ConstructionReport(
        l=l,
        h=1.0,
        x=x,
        k=k,
        sigma=tuple(float(v) for v in sigma),
        p=tuple(float(v) for v in p),
        z=float(z),
        mass_sum=(pair_mass / z) if z > 0.0 else math.inf,
        ratio_one_mass=2.0 * float(z),
        pair_mass=pair_mass,
        revenue=ladder_mass * rev_pair + 2.0 * z * rev_one,
        upper_bound=2.0 * pair_mass * rev_pair,
    )
    return scheme, report


@dataclass(frozen=True)
class SymmetricConstruction:
    scheme: SignalingScheme
    pair_reports: tuple[ConstructionReport, ...]
    revenue: float
    upper_bound: float


def construct_symmetric_detailed(prior: CtrPrior, dist: ValueDistribution, *, tol=None) -> SymmetricConstruction:
    """Pair-wise geometric construction over an exchangeable two-bidder prior.

    Mirrored states (h, l)/(l, h) are normalized to (1, l/h), built at the
    ratio x(l/h), and scaled back by h; diagonal states (h, h) send their
    own CTRs; pairs whose optimal ratio is 1 fall back to the pair-local
    uninformative signal ((h+l)/2, (h+l)/2).
    """
    if prior.n != 2:
        raise SchemeError("symmetric construction is a two-bidder operation")
    if not prior.is_exchangeable():
        raise SchemeError("prior is not exchangeable")
    entries = []
    reports = []
    revenue = 0.0
    upper = 0.0
    seen: set[tuple] = set()
    lam = {tuple(_key(c) for c in r): float(p) for r, p in zip(prior.states, prior.probs)}
    for r, pr in zip(prior.states, prior.probs):
        pr = float(pr)
        k1, k2 = _key(r[0]), _key(r[1])
        if k1 == k2:
            entries.append((r, r, pr))
            diag = pr * expected_revenue_two(r, r, dist, tol=tol)
            revenue += diag
            upper += diag  # ratio 1 is optimal when the CTRs tie
            continue
        pair_id = (min(k1, k2), max(k1, k2))
        if pair_id in seen:
            continue
        seen.add(pair_id)
        h = max(r)
        low = min(r)
        state_lh = (low, h)
        state_hl = (h, low)
        lp = low / h
        x = optimal_ratio(lp, dist, tol=tol)
        if x >= 1.0 - 1e-9:
            sig = ((h + low) / 2.0,) * 2
            entries.append((state_lh, sig, pr))
            entries.append((state_hl, sig, pr))
            rev = 2.0 * pr * h * expected_revenue_two((1.0, lp), (1.0, 1.0), dist, tol=tol)
            revenue += rev
            upper += rev
            continue
        k, sigma, p, z = _pair_ladder(lp, x, pr)
        sig_h = h * sigma
        for j in range(k):
            entries.append((state_lh, (sig_h[j], sig_h[j + 1]), p[j]))
            entries.append((state_hl, (sig_h[j + 1], sig_h[j]), p[j]))
        if z > 0.0:
            entries.append((state_lh, (sig_h[0], sig_h[0]), z))
            entries.append((state_hl, (sig_h[0], sig_h[0]), z))
        rev_pair = h * expected_revenue_two((1.0, lp), (1.0, x), dist, tol=tol)
        rev_one = h * expected_revenue_two((1.0, lp), (1.0, 1.0), dist, tol=tol)
        pair_rev = 2.0 * float(p.sum()) * rev_pair + 2.0 * z * rev_one
        pair_upper = 2.0 * pr * rev_pair
        revenue += pair_rev
        upper += pair_upper
        reports.append(
            ConstructionReport(
                l=low,
                h=h,
                x=x,
                k=k,
                sigma=tuple(float(v) for v in sig_h),
                p=tuple(float(v) for v in p),
                z=float(z),
                mass_sum=(pr / z) if z > 0.0 else math.inf,
                ratio_one_mass=2.0 * float(z),
                pair_mass=pr,
                revenue=pair_rev,
                upper_bound=pair_upper,
            )
        )
    scheme = SignalingScheme(entries, prior=prior)
    scheme.validate()
    return SymmetricConstruction(
        scheme=scheme,
        pair_reports=tuple(reports),
        revenue=revenue,
        upper_bound=upper,
    )


def construct_symmetric(prior: CtrPrior, dist: ValueDistribution, *, tol=None) -> SignalingScheme:
    return construct_symmetric_detailed(prior, dist, tol=tol).scheme


def no_information_scheme(prior: CtrPrior) -> SignalingScheme:
    """Send the prior-mean CTR vector from every state; calibrated by construction."""
    sig = tuple(prior.mean_ctr(i) for i in range(prior.n))
    entries = [(r, sig, float(p)) for r, p in zip(prior.states, prior.probs)]
    return SignalingScheme(entries, prior=prior)


def full_revelation_scheme(prior: CtrPrior) -> SignalingScheme:
    """Send the observed CTR vector itself from every state."""
    entries = [(r, r, float(p)) for r, p in zip(prior.states, prior.probs)]
    return SignalingScheme(entries, prior=prior)


# -- file format -------------------------------------------------------------


def scheme_to_records(scheme: SignalingScheme):
    return [
        {"r": list(map(float, scheme.r[i])), "s": list(map(float, scheme.s[i])), "mass": float(scheme.mass[i])}
        for i in range(scheme.size)
    ]


def scheme_from_records(records, prior: CtrPrior | None = None) -> SignalingScheme:
    try:
        entries = [(rec["r"], rec["s"], rec["mass"]) for rec in records]
    except (KeyError, TypeError) as exc:
        raise SchemeError(f"malformed scheme record: {exc}") from exc
    if prior is None:
        acc: dict[tuple, float] = {}
        rep: dict[tuple, tuple] = {}
        for r, _, m in entries:
            k = _row_key(r)
            acc[k] = acc.get(k, 0.0) + float(m)
            rep[k] = tuple(map(float, r))
        prior = CtrPrior.from_states([(rep[k], acc[k]) for k in sorted(acc)])
    return SignalingScheme(entries, prior=prior)
