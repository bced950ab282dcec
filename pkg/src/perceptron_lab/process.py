"""
The constraint-by-constraint process S_0 >= S_1 >= ... >= S_m.

``Q_t = log(|S_t| / E|S_t|)`` with the exact normalizer ``E|S_t| = 2^n p^t``,
and ``Y_t = (|S_t| / |S_{t-1}|) / p - 1`` so that ``Q_t = sum_i log(1 + Y_i)``.
Recording stops at the first empty S_t.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from perceptron_lab.analytic import LOG2, gauss_p
from perceptron_lab.errors import PreconditionError
from perceptron_lab.sampler import Instance
from perceptron_lab.solver import SolutionSet, enumerate_filtration, enumerate_solutions

REGULARITY_QUANTILE = 1.0 - 1e-3
_MAX_BLOCK = 4_000_000


@dataclass
class StepRecord:
    t: int
    cardinality: int
    q: float
    y: float
    regularity_ratio: float | None = None


@dataclass
class ProcessTrace:
    n: int
    m: int
    kappa: float
    records: list[StepRecord] = field(default_factory=list)
    first_empty_step: int | None = None

    @property
    def q(self) -> np.ndarray:
        return np.array([r.q for r in self.records])

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    def to_csv(self) -> str:
        rows = ["t,cardinality,Q,Y,regularity_ratio"]
        for r in self.records:
            ratio = "" if r.regularity_ratio is None else repr(r.regularity_ratio)
            rows.append(f"{r.t},{r.cardinality},{r.q!r},{r.y!r},{ratio}")
        return "\n".join(rows) + "\n"


def log_expected_count(n: int, t: int, kappa: float) -> float:
    return n * LOG2 + t * math.log(gauss_p(kappa))


def trace(instance: Instance, regularity_steps=(), pair_budget: int = 100_000,
          rng: np.random.Generator | None = None, workers: int = 1) -> ProcessTrace:
    """
    Q_t and Y_t for t = 0..m (Y_0 is recorded as 0).

    ``regularity_steps`` lists the steps at which the regularity ratio of S_t
    is measured; this needs ``rng`` unless every such set is small enough for
    the exhaustive pair scan.
    """
    filt = enumerate_filtration(instance, regularity_steps, workers=workers)
    p = gauss_p(instance.kappa)
    log_p = math.log(p)
    card = filt.cardinalities
    empty = np.flatnonzero(card == 0)
    out = ProcessTrace(instance.n, instance.m, instance.kappa)
    out.first_empty_step = int(empty[0]) if empty.size else None
    stop = out.first_empty_step if out.first_empty_step is not None else instance.m + 1
    base = instance.n * LOG2
    for t in range(stop):
        q = 0.0 if t == 0 else math.log(card[t]) - (base + t * log_p)
        y = 0.0 if t == 0 else card[t] / (card[t - 1] * p) - 1.0
        ratio = None
        if t in filt.snapshots and card[t] >= 2:
            ratio = regularity_ratio(filt.snapshots[t], q, pair_budget, rng)
        out.records.append(StepRecord(t, int(card[t]), q, y, ratio))
    return out


def _pair_overlaps(s: SolutionSet, pair_budget: int, rng) -> np.ndarray:
    size = len(s)
    if size * size <= pair_budget:
        i, j = np.triu_indices(size, k=1)
    else:
        if rng is None:
            raise PreconditionError("sampling pairs needs an rng")
        i = rng.integers(0, size, pair_budget)
        j = (i + rng.integers(1, size, pair_budget)) % size
    dist = np.bitwise_count(s.codes[i] ^ s.codes[j]).astype(np.int64)
    return s.n - 2 * dist


def regularity_ratio(s_t: SolutionSet, q_t: float, pair_budget: int = 100_000,
                     rng: np.random.Generator | None = None) -> float:
    """
    Empirical 1 - 1e-3 quantile of |<sigma1, sigma2>| over distinct uniform
    pairs of S_t, in units of sqrt(n) * sqrt(|Q_t| + log n).
    """
    if len(s_t) < 2:
        raise PreconditionError("regularity ratio needs at least two solutions")
    overlaps = np.abs(_pair_overlaps(s_t, pair_budget, rng))
    top = float(np.quantile(overlaps, REGULARITY_QUANTILE, method="inverted_cdf"))
    n = s_t.n
    return top / (math.sqrt(n) * math.sqrt(abs(q_t) + math.log(n)))


def fresh_increments(s_t: SolutionSet, kappa: float, budget: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Y_{t+1} for ``budget`` independent fresh Gaussian constraints, S_t held fixed."""
    if len(s_t) == 0:
        raise PreconditionError("S_t is empty")
    spins = s_t.spins()
    p = gauss_p(kappa)
    threshold = kappa * math.sqrt(s_t.n)
    chunk = max(1, _MAX_BLOCK // len(s_t))
    out = np.empty(budget)
    for start in range(0, budget, chunk):
        k = min(chunk, budget - start)
        x = rng.standard_normal((k, s_t.n))
        kept = np.count_nonzero(np.abs(spins @ x.T) <= threshold, axis=0)
        out[start:start + k] = kept / (len(s_t) * p) - 1.0
    return out


def martingale_check(instance_prefix: Instance, fresh_constraint_budget: int,
                     rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of Y_{t+1} given S_t, where t = instance_prefix.m."""
    s_t = enumerate_solutions(instance_prefix)
    if len(s_t) == 0:
        raise PreconditionError("S_t is empty")
    y = fresh_increments(s_t, instance_prefix.kappa, fresh_constraint_budget, rng)
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(y.size))


def _first_crossing(values, thresholds) -> int | None:
    hits = np.flatnonzero(np.asarray(values) >= np.asarray(thresholds))
    return int(hits[0]) if hits.size else None


def tail_diagnostic(traces: list[ProcessTrace], c3: float | None = None) -> dict:
    """
    Pooled tail behaviour of the normalised increments
    ``x_t = |Y_t| / sqrt((|Q_{t-1}| + log n) / n)`` plus stopping-time crossings.

    ``c3`` scales the increment threshold ``c3 * sqrt((|Q_{t-1}| + log n)/n) * log n``;
    by default it is measured as the pooled 99.9% quantile of ``x`` over ``log n``.
    """
    if len(traces) < 100:
        raise PreconditionError("tail diagnostic needs at least 100 traces")
    pooled, per_trace = [], []
    for tr in traces:
        q, y = tr.q, tr.y
        scale = np.sqrt((np.abs(q[:-1]) + math.log(tr.n)) / tr.n)
        x = np.abs(y[1:]) / scale
        pooled.append(x)
        per_trace.append((tr, q, y, scale))
    x_all = np.sort(np.concatenate(pooled))
    if x_all.size == 0:
        raise PreconditionError("traces carry no increments")

    values = np.unique(x_all)
    survival = 1.0 - np.searchsorted(x_all, values, side="right") / x_all.size
    grid = np.concatenate([[0.0], values])
    survival = np.concatenate([[1.0], survival])

    lo, hi = np.quantile(x_all, [0.5, 0.99])
    bulk = (grid >= lo) & (grid <= hi) & (survival > 0)
    fit = stats.linregress(grid[bulk], np.log(survival[bulk])) if bulk.sum() >= 3 else None

    log_n = math.log(traces[0].n)
    if c3 is None:
        c3 = float(np.quantile(x_all, 0.999)) / log_n
    tau_q, tau_y = [], []
    for tr, q, y, scale in per_trace:
        ln = math.log(tr.n)
        tau_q.append(_first_crossing(np.abs(q), ln * ln))
        crossing = _first_crossing(np.abs(y[1:]), c3 * scale * ln)
        tau_y.append(None if crossing is None else crossing + 1)

    def frac_before(taus):
        hit = [t is not None and t <= tr.m for t, tr in zip(taus, traces)]
        return float(np.mean(hit))

    return {
        "traces": len(traces),
        "increments": int(x_all.size),
        "survival_x": grid.tolist(),
        "survival": survival.tolist(),
        "tail_rate": None if fit is None else float(-fit.slope),
        "tail_intercept": None if fit is None else float(fit.intercept),
        "tail_r2": None if fit is None else float(fit.rvalue**2),
        "c3": c3,
        "tau_q": tau_q,
        "tau_y": tau_y,
        "fraction_tau_q_within_m": frac_before(tau_q),
        "fraction_tau_y_within_m": frac_before(tau_y),
        "fraction_emptied": float(np.mean([tr.first_empty_step is not None for tr in traces])),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True)
