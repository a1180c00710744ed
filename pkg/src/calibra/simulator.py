"""Monte Carlo execution of the calibrated click-through auction.

Rounds sample an entry (CTR vector, signal vector) from the scheme's mass
table, draw i.i.d. bidder values, allocate to the highest value-times-signal
product (ties to the lower index) and charge the winner the runner-up score
divided by her own signal.  Revenue statistics use the exact per-round
conditional expectation ctr * payment instead of realized clicks, which cuts
the variance; clicks are only drawn when explicitly requested.

Streams are counter-based: worker w uses the w-th spawn of the seed
sequence, workers are merged in fixed order, and value draws are inverse-CDF
transforms of pre-drawn uniforms, so a given (seed, workers, samples) is
bit-reproducible per backend.  The per-round loop is the hot kernel and
ships as a numba njit with a vectorized numpy fallback (calibra._accel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import jit_compile, resolve_backend
from .distributions import ValueDistribution
from .revenue import CtrPrior
from .schemes import SignalingScheme

_BATCH = 1 << 18


@dataclass(frozen=True)
class SimulationConfig:
    samples: int
    seed: int
    workers: int = 1
    record_clicks: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class RoundOutcome:
    r: tuple
    s: tuple
    v: tuple
    winner: int
    payment: float
    revenue: float
    clicked: bool | None = None


def _check(prior: CtrPrior, scheme: SignalingScheme):
    if prior.n != scheme.n:
        raise ValueError("prior and scheme bidder counts differ")


def run_round(prior: CtrPrior, scheme: SignalingScheme, dist: ValueDistribution, rng, *, record_clicks: bool = False) -> RoundOutcome:
    """Simulate one auction round; ties go to the lower bidder index."""
    _check(prior, scheme)
    cum = np.cumsum(scheme.mass)
    e = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    e = min(e, scheme.size - 1)
    v = np.atleast_1d(dist.sample(rng, scheme.n))
    s = scheme.s[e]
    products = v * s
    w = int(np.argmax(products))
    if scheme.n == 1:
        payment = 0.0
    else:
        others = np.delete(products, w)
        payment = float(others.max() / s[w])
    revenue = float(scheme.r[e, w] * payment)
    clicked = bool(rng.random() < scheme.r[e, w]) if record_clicks else None
    return RoundOutcome(
        r=tuple(scheme.r[e]),
        s=tuple(s),
        v=tuple(float(x) for x in v),
        winner=w,
        payment=payment,
        revenue=revenue,
        clicked=clicked,
    )


def _rounds_loop(entry, v, entry_r, entry_s):
    total = 0.0
    total_sq = 0.0
    b, n = v.shape
    for t in range(b):
        e = entry[t]
        best = 0
        best_p = v[t, 0] * entry_s[e, 0]
        second = -np.inf
        for i in range(1, n):
            p = v[t, i] * entry_s[e, i]
            if p > best_p:
                second = best_p
                best_p = p
                best = i
            elif p > second:
                second = p
        if n == 1:
            rev = 0.0
        else:
            rev = entry_r[e, best] * (second / entry_s[e, best])
        total += rev
        total_sq += rev * rev
    return total, total_sq


def _rounds_numpy(entry, v, entry_r, entry_s):
    sv = entry_s[entry]
    products = v * sv
    w = np.argmax(products, axis=1)
    if v.shape[1] == 1:
        return 0.0, 0.0
    rows = np.arange(products.shape[0])
    products[rows, w] = -np.inf
    second = products.max(axis=1)
    rev = entry_r[entry, w] * (second / sv[rows, w])
    return float(rev.sum()), float((rev * rev).sum())


_JIT_ROUNDS = None


def _rounds_kernel(backend: str):
    global _JIT_ROUNDS
    if backend == "numpy":
        return _rounds_numpy
    if _JIT_ROUNDS is None:
        _JIT_ROUNDS = jit_compile(_rounds_loop)
    return _JIT_ROUNDS


def _worker_counts(samples: int, workers: int):
    base, extra = divmod(samples, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def estimate_revenue(
    prior: CtrPrior,
    scheme: SignalingScheme,
    dist: ValueDistribution,
    cfg: SimulationConfig,
    *,
    backend: str | None = None,
) -> tuple[float, float]:
    """Mean and standard error of per-round expected revenue."""
    _check(prior, scheme)
    kernel = _rounds_kernel(resolve_backend(backend))
    n = scheme.n
    cum = np.cumsum(scheme.mass)
    total_mass = cum[-1]
    entry_r = np.ascontiguousarray(scheme.r)
    entry_s = np.ascontiguousarray(scheme.s)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.workers)
    g_sum = 0.0
    g_sq = 0.0
    for w, count in enumerate(_worker_counts(cfg.samples, cfg.workers)):
        rng = np.random.default_rng(streams[w])
        done = 0
        while done < count:
            b = min(_BATCH, count - done)
            u_entry = rng.random(b)
            u_val = rng.random((b, n))
            entry = np.minimum(
                np.searchsorted(cum, u_entry * total_mass, side="right"),
                scheme.size - 1,
            ).astype(np.int64)
            v = dist._inverse_cdf(u_val)
            s1, s2 = kernel(entry, v, entry_r, entry_s)
            g_sum += s1
            g_sq += s2
            done += b
    n_total = cfg.samples
    mean = g_sum / n_total
    if n_total > 1:
        var = max((g_sq - n_total * mean * mean) / (n_total - 1), 0.0)
        stderr = float(np.sqrt(var / n_total))
    else:
        stderr = float("inf")
    return float(mean), stderr


def empirical_calibration(
    prior: CtrPrior,
    scheme: SignalingScheme,
    dist: ValueDistribution,
    cfg: SimulationConfig,
):
    """Sample-conditional CTR means per observed signal value.

    Returns rows (bidder, signal value, empirical mean of the bidder's CTR,
    observation count, standard error of the mean).  The conditional CTR is
    a deterministic function of the sampled entry, so only entry draws are
    needed.
    """
    _check(prior, scheme)
    cum = np.cumsum(scheme.mass)
    total_mass = cum[-1]
    counts = np.zeros(scheme.size, dtype=np.int64)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.workers)
    for w, count in enumerate(_worker_counts(cfg.samples, cfg.workers)):
        rng = np.random.default_rng(streams[w])
        done = 0
        while done < count:
            b = min(_BATCH, count - done)
            entry = np.minimum(
                np.searchsorted(cum, rng.random(b) * total_mass, side="right"),
                scheme.size - 1,
            )
            counts += np.bincount(entry, minlength=scheme.size)
            done += b

    rows = []
    for i in range(scheme.n):
        groups: dict[int, list[int]] = {}
        for e in range(scheme.size):
            groups.setdefault(int(round(scheme.s[e, i] / 1e-12)), []).append(e)
        for key in sorted(groups):
            idx = groups[key]
            n_g = int(counts[idx].sum())
            if n_g == 0:
                continue
            c = counts[idx].astype(float)
            s_val = float((c * scheme.s[idx, i]).sum() / n_g)
            mean = float((c * scheme.r[idx, i]).sum() / n_g)
            if n_g > 1:
                spread = float((c * (scheme.r[idx, i] - mean) ** 2).sum())
                stderr = float(np.sqrt(spread / (n_g - 1) / n_g))
            else:
                stderr = float("inf")
            rows.append((i, s_val, mean, n_g, stderr))
    return rows
