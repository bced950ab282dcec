"""
Experiment drivers. Each ``run_*`` takes an :class:`ExperimentConfig`, an
optional output directory and a worker count, writes CSV/JSON artifacts when
given a directory, and returns a JSON-serialisable summary.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from perceptron_lab import __version__
from perceptron_lab.analytic import (
    ModelParams,
    alpha_c,
    beta_c,
    check_assumption1,
    gap_curve,
    gauss_p,
)
from perceptron_lab.errors import PreconditionError
from perceptron_lab.harness.config import Experiment, ExperimentConfig
from perceptron_lab.harness.plot import svg_line_chart
from perceptron_lab.harness.trials import (
    TrialError,
    TrialRecord,
    derive_seed,
    evaluate_event,
    event_label,
    expected_count,
    farm,
    run_planted_trial,
    run_random_model_trial,
)
from perceptron_lab.process import fresh_increments, tail_diagnostic, trace
from perceptron_lab.sampler import make_rng, sample_random_instance
from perceptron_lab.solver import enumerate_filtration, enumerate_solutions, nearest_other
from perceptron_lab.structure import frozen_count, isolation_verdict

log = logging.getLogger(__name__)

# sub-stream tags keep the sides of an experiment on disjoint seeds
_PLANTED, _RANDOM = 1, 2


class Outputs:
    """Collects written files for the manifest."""

    def __init__(self, root: Path | None):
        self.root = Path(root) if root is not None else None
        self.files: list[str] = []
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path | None:
        if self.root is None:
            return None
        self.files.append(name)
        return self.root / name

    def text(self, name: str, content: str) -> None:
        p = self.path(name)
        if p is not None:
            p.write_text(content)

    def json(self, name: str, payload) -> None:
        self.text(name, json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def manifest(self, config: ExperimentConfig) -> None:
        if self.root is None:
            return
        payload = {
            "experiment": config.experiment.value,
            "files": sorted(self.files),
            "config": config.as_dict(),
            "config_hash": config.digest(),
            "tool_version": __version__,
        }
        (self.root / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _records_csv(records: list[TrialRecord], keys: list[str]) -> str:
    rows = [",".join(["trial", "seed", "digest", "rejected"] + keys)]
    rows += [",".join(_fmt(v) for v in r.row(keys)) for r in records]
    return "\n".join(rows) + "\n"


def _mean_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return float(values.mean()) if values.size else math.nan, math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


# ---------------------------------------------------------------- figure 1

def run_figure1(config: ExperimentConfig, out: Path | None = None, workers: int = 1) -> dict:
    """G = F_alpha - alpha log p on (0, 1/2] for each alpha, with beta_c markers."""
    outputs = Outputs(out)
    k = config.kappa
    betas = np.arange(1, config.grid_points + 1) / (2.0 * config.grid_points)
    summary = {"kappa": k, "alpha_c": alpha_c(k), "curves": {}, "skipped": []}
    chart = {}
    markers = []
    for alpha in config.alpha:
        if alpha >= alpha_c(k):
            log.warning("alpha=%s >= alpha_c=%s: beta_c undefined, curve skipped", alpha, alpha_c(k))
            summary["skipped"].append(alpha)
            continue
        params = ModelParams(k, alpha)
        curve = gap_curve(params, betas)
        report = check_assumption1(params)
        curve.critical_points = report.critical_points_in_open_interval
        values = np.array([v for _, v in curve.points])
        crossings = int(np.count_nonzero(np.sign(values[:-1]) != np.sign(values[1:])))
        summary["curves"][repr(alpha)] = {
            "beta_c": curve.roots[0],
            "min_value": float(values.min()),
            "argmin": float(betas[int(values.argmin())]),
            "value_at_first_point": float(values[0]),
            "value_at_half": float(values[-1]),
            "zero_crossings": crossings,
            "critical_points": report.critical_points_in_open_interval,
            "assumption1_holds": report.holds,
        }
        path = outputs.path(f"figure1_alpha_{alpha}.csv")
        if path is not None:
            _, sidecar = curve.write(path)
            outputs.files.append(sidecar.name)
        chart[f"alpha={alpha}"] = (betas, values)
        markers.append((curve.roots[0], 0.0))
    if chart:
        outputs.text("figure1.svg", svg_line_chart(chart, markers, xlabel="beta", ylabel="G(beta)"))
    outputs.json("figure1_summary.json", summary)
    outputs.manifest(config)
    return summary


# ---------------------------------------------------------------- concentration

def _concentration_trial(trial, n, m, kappa, seed, max_rejects):
    log_mean = n * math.log(2.0) + m * math.log(gauss_p(kappa))
    try:
        inst, s, _, rejected = run_random_model_trial(n, m, kappa, seed, max_rejects)
    except TrialError:
        obs = {"count": 0, "q": math.nan, "failed": 1}
        return TrialRecord(trial, seed, "", obs, max_rejects + 1)
    obs = {"count": len(s), "q": math.log(len(s)) - log_mean, "failed": 0}
    return TrialRecord(trial, seed, inst.digest(), obs, rejected)


def run_concentration(config: ExperimentConfig, out: Path | None = None, workers: int = 1) -> dict:
    """Q_m = log|S| - log E|S| over conditioned random instances, for each n."""
    outputs = Outputs(out)
    alpha = config.alpha[0]
    summary = {"kappa": config.kappa, "alpha": alpha, "per_n": {}}
    for ni, n in enumerate(config.n):
        m = config.constraints_for(n, alpha)
        tasks = [(i, n, m, config.kappa, derive_seed(config.seed, ni, i), config.max_rejects)
                 for i in range(config.trials)]
        records = farm(_concentration_trial, tasks, workers)
        outputs.text(f"concentration_n{n}.csv", _records_csv(records, ["count", "q", "failed"]))
        ok = [r for r in records if not r.observables["failed"]]
        q = np.array([r.observables["q"] for r in ok])
        counts = np.array([r.observables["count"] for r in ok], dtype=np.float64)
        rejected = sum(r.rejected_for_emptiness for r in records)
        # rejected attempts are unconditioned draws with |S| = 0
        all_draws = np.concatenate([counts, np.zeros(rejected)])
        mean_c, se_c = _mean_se(counts)
        mean_u, se_u = _mean_se(all_draws)
        abs_q = np.abs(q)
        q25, q75 = (np.quantile(q, [0.25, 0.75]) if q.size else (math.nan, math.nan))
        summary["per_n"][str(n)] = {
            "n": n,
            "m": m,
            "trials": len(records),
            "failed": len(records) - len(ok),
            "rejections": rejected,
            "expected_count": expected_count(n, m, config.kappa),
            "mean_count": mean_c,
            "se_count": se_c,
            "mean_count_unconditioned": mean_u,
            "se_count_unconditioned": se_u,
            "median_q": float(np.median(q)) if q.size else math.nan,
            "iqr_q": float(q75 - q25),
            "median_abs_q": float(np.median(abs_q)) if q.size else math.nan,
            "max_abs_q": float(abs_q.max()) if q.size else math.nan,
            "median_abs_q_over_log_n": float(np.median(abs_q) / math.log(n)) if q.size else math.nan,
        }
    outputs.json("concentration_summary.json", summary)
    outputs.manifest(config)
    return summary


# ---------------------------------------------------------------- freezing

def _freezing_trial(trial, model, n, m, kappa, seed, radius, max_rejects):
    try:
        if model == "planted":
            inst, s, sigma = run_planted_trial(n, m, kappa, seed)
            rejected = 0
        else:
            inst, s, sigma, rejected = run_random_model_trial(n, m, kappa, seed, max_rejects)
    except TrialError:
        obs = {"count": 0, "frozen": -1, "completely_frozen": 0, "isolated_at_radius": 0,
               "nearest": -1, "failed": 1}
        return TrialRecord(trial, seed, "", obs, max_rejects + 1)
    frozen = frozen_count(s, sigma)
    found = nearest_other(s, sigma)
    obs = {
        "count": len(s),
        "frozen": frozen,
        "completely_frozen": int(frozen == n),
        "isolated_at_radius": int(isolation_verdict(s, sigma, radius)),
        "nearest": found[0] if found is not None else 0,
        "failed": 0,
    }
    return TrialRecord(trial, seed, inst.digest(), obs, rejected)


def freezing_radius(kappa: float, alpha: float, n: int, delta: float) -> tuple[float, int, bool]:
    """beta_c, the isolation radius floor((beta_c - delta) n) clipped at 0, and whether delta < beta_c."""
    bc = beta_c(ModelParams(kappa, alpha))
    return bc, max(0, math.floor((bc - delta) * n)), delta < bc


def run_freezing(config: ExperimentConfig, out: Path | None = None, workers: int = 1) -> dict:
    """Frozen coordinates, isolation and nearest-solution distance of sigma* in both models."""
    outputs = Outputs(out)
    n = config.n[0]
    keys = ["count", "frozen", "completely_frozen", "isolated_at_radius", "nearest", "failed"]
    summary = {"n": n, "kappa": config.kappa, "delta": config.delta, "points": []}
    for ai, alpha in enumerate(config.alpha):
        m = config.constraints_for(n, alpha)
        bc, radius, delta_ok = freezing_radius(config.kappa, alpha, n, config.delta)
        point = {"alpha": alpha, "m": m, "beta_c": bc, "beta_c_n": bc * n,
                 "radius": radius, "delta_below_beta_c": delta_ok, "models": {}}
        for model in config.models:
            tag = _PLANTED if model == "planted" else _RANDOM
            tasks = [(i, model, n, m, config.kappa, derive_seed(config.seed, tag, ai, i), radius,
                      config.max_rejects) for i in range(config.trials)]
            records = farm(_freezing_trial, tasks, workers)
            outputs.text(f"freezing_{model}_alpha_{alpha}.csv", _records_csv(records, keys))
            ok = [r.observables for r in records if not r.observables["failed"]]
            frozen_frac, frozen_se = _binomial(sum(o["completely_frozen"] for o in ok), len(ok))
            iso_frac, iso_se = _binomial(sum(o["isolated_at_radius"] for o in ok), len(ok))
            nearest = [o["nearest"] for o in ok]
            point["models"][model] = {
                "trials": len(records),
                "failed": len(records) - len(ok),
                "rejections": sum(r.rejected_for_emptiness for r in records),
                "completely_frozen_fraction": frozen_frac,
                "completely_frozen_se": frozen_se,
                "isolated_at_radius_fraction": iso_frac,
                "isolated_at_radius_se": iso_se,
                "mean_frozen": float(np.mean([o["frozen"] for o in ok])) if ok else math.nan,
                "mean_nearest": float(np.mean(nearest)) if ok else math.nan,
                "nearest_histogram": {str(d): nearest.count(d) for d in sorted(set(nearest))},
            }
        if {"planted", "random"} <= set(point["models"]):
            a, b = point["models"]["planted"], point["models"]["random"]
            point["planted_vs_random_z"] = _z(a["completely_frozen_fraction"], a["completely_frozen_se"],
                                              b["completely_frozen_fraction"], b["completely_frozen_se"])
        summary["points"].append(point)
    outputs.json("freezing_summary.json", summary)
    outputs.manifest(config)
    return summary


def _binomial(hits: int, total: int) -> tuple[float, float]:
    if total == 0:
        return math.nan, math.nan
    f = hits / total
    return f, math.sqrt(f * (1 - f) / total)


def _z(a, se_a, b, se_b) -> float:
    se = math.hypot(se_a, se_b)
    if se == 0:
        return 0.0 if a == b else math.inf
    return (a - b) / se


# ---------------------------------------------------------------- contiguity

def _contiguity_trial(side, n, m, kappa, seed, events):
    if side == "planted":
        _, s, sigma = run_planted_trial(n, m, kappa, seed)
    else:
        inst = sample_random_instance(n, m, kappa, seed)
        s = enumerate_solutions(inst)
        if len(s) == 0:
            return 0, [False] * len(events)
        sigma = s.config(int(make_rng(seed, 1).integers(0, len(s))))
    return len(s), [evaluate_event(e, s, sigma) for e in events]


def run_contiguity(config: ExperimentConfig, out: Path | None = None, workers: int = 1) -> dict:
    """
    Monte Carlo check of the planted/random change of measure
    P_pl(A) = E[1_A |S|] / E|S| with unconditioned random instances on the right.
    """
    outputs = Outputs(out)
    n = config.n[0]
    m = config.constraints_for(n, config.alpha[0])
    events = config.events
    labels = [event_label(e) for e in events]
    sides = {}
    for side, tag in (("planted", _PLANTED), ("random", _RANDOM)):
        tasks = [(side, n, m, config.kappa, derive_seed(config.seed, tag, i), events)
                 for i in range(config.trials)]
        results = farm(_contiguity_trial, tasks, workers)
        counts = np.array([c for c, _ in results], dtype=np.float64)
        hits = np.array([h for _, h in results], dtype=bool).reshape(len(results), len(events))
        sides[side] = (counts, hits)
        rows = [",".join(["trial", "count"] + labels)]
        rows += [",".join([str(i), str(int(c))] + [str(int(x)) for x in h])
                 for i, (c, h) in enumerate(zip(counts, hits))]
        outputs.text(f"contiguity_{side}.csv", "\n".join(rows) + "\n")

    mean_count = expected_count(n, m, config.kappa)
    pl_counts, pl_hits = sides["planted"]
    r_counts, r_hits = sides["random"]
    report = {"n": n, "m": m, "kappa": config.kappa, "trials_per_side": config.trials,
              "expected_count": mean_count,
              "random_mean_count": float(r_counts.mean()),
              "random_nonempty_fraction": float(np.mean(r_counts > 0)),
              "events": {}}
    for j, label in enumerate(labels):
        left, left_se = _mean_se(pl_hits[:, j].astype(np.float64))
        weighted = r_hits[:, j] * r_counts / mean_count
        right, right_se = _mean_se(weighted)
        degenerate = left_se == 0 and right_se == 0
        report["events"][label] = {
            "planted": left,
            "planted_se": left_se,
            "reweighted_random": right,
            "reweighted_random_se": right_se,
            "z": _z(left, left_se, right, right_se),
            "degenerate": degenerate,
        }
    outputs.json("contiguity_report.json", report)
    outputs.manifest(config)
    return report


# ---------------------------------------------------------------- capacity scan

def _capacity_trial(n, m_values, kappa, seed):
    inst = sample_random_instance(n, max(m_values), kappa, seed)
    card = enumerate_filtration(inst).cardinalities
    return [bool(card[m] > 0) for m in m_values]


def run_capacity_scan(config: ExperimentConfig, out: Path | None = None, workers: int = 1) -> dict:
    """
    Empirical P(S nonempty) against alpha. Each trial draws one instance with
    the largest constraint count and reads every alpha off its prefixes, so
    emptiness is monotone in alpha per instance.
    """
    outputs = Outputs(out)
    ac = alpha_c(config.kappa)
    alphas = sorted(config.alpha)
    rows = ["n,alpha,m,nonempty_fraction,se,alpha_c"]
    summary = {"kappa": config.kappa, "alpha_c": ac, "per_n": {}}
    for ni, n in enumerate(config.n):
        m_values = [math.floor(a * n) for a in alphas]
        tasks = [(n, m_values, config.kappa, derive_seed(config.seed, ni, i))
                 for i in range(config.trials)]
        nonempty = np.array(farm(_capacity_trial, tasks, workers), dtype=bool)
        fractions = nonempty.mean(axis=0)
        ses = np.sqrt(fractions * (1 - fractions) / config.trials)
        for a, m, f, se in zip(alphas, m_values, fractions, ses):
            rows.append(f"{n},{a!r},{m},{float(f)!r},{float(se)!r},{ac!r}")
        summary["per_n"][str(n)] = {
            "alpha": alphas,
            "m": m_values,
            "nonempty_fraction": fractions.tolist(),
            "se": ses.tolist(),
            "half_crossing_alpha": _half_crossing(alphas, fractions),
        }
    outputs.text("capacity_scan.csv", "\n".join(rows) + "\n")
    outputs.json("capacity_summary.json", summary)
    outputs.manifest(config)
    return summary


def _half_crossing(alphas, fractions) -> float | None:
    for (a0, f0), (a1, f1) in zip(zip(alphas, fractions), zip(alphas[1:], fractions[1:])):
        if f0 >= 0.5 > f1:
            return float(a0 + (f0 - 0.5) * (a1 - a0) / (f0 - f1))
    return None


# ---------------------------------------------------------------- process diagnostics

def _process_trial(n, m, kappa, seed, regularity_steps, pair_budget):
    inst = sample_random_instance(n, m, kappa, seed)
    steps = [t for t in regularity_steps if t <= m]
    return trace(inst, steps, pair_budget, make_rng(seed, 1))


def run_process_diagnostics(config: ExperimentConfig, out: Path | None = None, workers: int = 1) -> dict:
    """Farm traces; report telescoping error, regularity ratios, tail fit and martingale means."""
    outputs = Outputs(out)
    n = config.n[0]
    m = config.constraints_for(n, config.alpha[0])
    reg_steps = config.regularity_steps if config.regularity_steps is not None else [m // 2]
    seeds = [derive_seed(config.seed, i) for i in range(config.trials)]
    traces = farm(_process_trial, [(n, m, config.kappa, s, reg_steps, config.pair_budget)
                                   for s in seeds], workers)

    rows = ["trial,t,cardinality,Q,Y,regularity_ratio"]
    telescoping = 0.0
    ratios = {t: [] for t in reg_steps}
    for i, tr in enumerate(traces):
        for line in tr.to_csv().splitlines()[1:]:
            rows.append(f"{i},{line}")
        q, y = tr.q, tr.y
        telescoping = max(telescoping, float(np.max(np.abs(q - np.cumsum(np.log1p(y))))))
        for r in tr.records:
            if r.regularity_ratio is not None:
                ratios[r.t].append(r.regularity_ratio)
    outputs.text("process_traces.csv", "\n".join(rows) + "\n")

    report = {
        "n": n, "m": m, "kappa": config.kappa, "traces": len(traces),
        "telescoping_max_error": telescoping,
        "regularity": {str(t): {"count": len(v),
                                "median": float(np.median(v)) if v else None,
                                "max": float(np.max(v)) if v else None}
                       for t, v in ratios.items()},
    }
    try:
        report["tail"] = tail_diagnostic(traces, config.c3)
    except PreconditionError as exc:
        report["tail"] = {"skipped": str(exc)}

    if config.martingale_steps:
        report["martingale"] = martingale_pool(
            n, config.kappa, config.martingale_steps, config.martingale_instances,
            config.fresh_constraints, seed=derive_seed(config.seed, 1 << 20))
    outputs.json("process_report.json", report)
    outputs.manifest(config)
    return report


def martingale_pool(n: int, kappa: float, steps, instances: int, budget: int, seed: int) -> dict:
    """
    Pooled E[Y_{t+1} | S_t] over random instances: for each instance and step t,
    S_t is held fixed and ``budget`` fresh constraints are drawn.
    """
    out = {}
    pooled = []
    for t in steps:
        ys = []
        for i in range(instances):
            inst = sample_random_instance(n, t, kappa, derive_seed(seed, t, i))
            s_t = enumerate_solutions(inst)
            if len(s_t) == 0:
                continue
            ys.append(fresh_increments(s_t, kappa, budget, make_rng(seed, t, i, 1)))
        y = np.concatenate(ys) if ys else np.empty(0)
        pooled.append(y)
        mean, se = _mean_se(y)
        out[str(t)] = {"mean": mean, "se": se, "z": mean / se if se else math.nan,
                       "samples": int(y.size), "instances": len(ys)}
    y = np.concatenate(pooled) if pooled else np.empty(0)
    mean, se = _mean_se(y)
    out["pooled"] = {"mean": mean, "se": se, "z": mean / se if se else math.nan, "samples": int(y.size)}
    return out


RUNNERS = {
    Experiment.FIGURE1: run_figure1,
    Experiment.CONCENTRATION: run_concentration,
    Experiment.FREEZING: run_freezing,
    Experiment.CONTIGUITY: run_contiguity,
    Experiment.CAPACITY_SCAN: run_capacity_scan,
    Experiment.PROCESS_DIAGNOSTICS: run_process_diagnostics,
}


def run(config: ExperimentConfig, out: Path | None = None, workers: int = 1) -> dict:
    return RUNNERS[config.experiment](config, out, workers)
