"""
The ten acceptance criteria, each at its stated tolerance and time budget.

A per-criterion PASS/FAIL line is printed in the terminal summary.
Expected values come from the independent oracles in ``oracles.py``.
"""

import math
import time

import numpy as np
import pytest

from perceptron_lab import analytic as an
from perceptron_lab.analytic import ModelParams
from perceptron_lab.harness.config import ExperimentConfig
from perceptron_lab.harness.experiments import (
    martingale_pool,
    run_concentration,
    run_contiguity,
    run_figure1,
    run_freezing,
)
from perceptron_lab.sampler import make_rng, sample_random_instance
from perceptron_lab.solver import enumerate_solutions

import oracles


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


@pytest.mark.acceptance(1)
def test_analytic_identities(detail):
    with Budget(1.0):
        for kappa in (0.5, 1.0, 2.0):
            p = oracles.mp_gauss_p(kappa)
            assert abs(an.bivariate_q(kappa, 0.5) - p * p) <= 1e-10
            assert abs(an.bivariate_q(kappa, 0.0) - p) <= 1e-10
            assert abs(an.bivariate_q(kappa, 1.0) - p) <= 1e-10
        p1 = an.gauss_p(1.0)
        assert abs(p1 - 0.6826895) <= 1e-6
        assert abs(p1 - oracles.gl_gauss_p(1.0)) <= 1e-6
        ac = an.alpha_c(1.0)
        assert abs(ac - 1.8162) <= 1e-3
    detail(f"p(1)={p1:.10f} alpha_c(1)={ac:.6f}")


@pytest.mark.acceptance(2)
def test_figure1_reproduction(detail):
    alphas = [1.69, 1.75, 1.81]
    with Budget(10.0):
        config = ExperimentConfig.from_dict({"experiment": "figure1", "alpha": alphas})
        summary = run_figure1(config)
        roots = []
        for alpha in alphas:
            curve = summary["curves"][repr(alpha)]
            params = ModelParams(1.0, alpha)
            # G(0+) -> 0
            # G(0+) -> 0; the pair-survival deficit makes |G| decay like sqrt(beta)
            near_zero = [abs(an.free_energy_gap(params, b)) for b in (1e-4, 1e-6, 1e-8, 1e-10)]
            assert all(b < 0.2 * a for a, b in zip(near_zero, near_zero[1:]))
            assert near_zero[-1] < 2e-5
            assert curve["min_value"] < 0
            assert curve["zero_crossings"] == 1
            bc = curve["beta_c"]
            assert 0 < bc < 0.5
            assert abs(an.free_energy_gap(params, bc)) <= 1e-9
            assert curve["value_at_half"] > 0
            roots.append(bc)
        assert roots[0] < roots[1] < roots[2]
    detail("beta_c=" + ", ".join(f"{r:.6f}" for r in roots))


@pytest.mark.acceptance(3)
def test_assumption1_grid(detail):
    worst = 0.0
    with Budget(30.0):
        for kappa in (0.5, 1.0, 2.0):
            for frac in (0.25, 0.5, 0.75):
                params = ModelParams(kappa, frac * an.alpha_c(kappa))
                report = an.check_assumption1(params)
                assert report.holds
                assert len(report.critical_points_in_open_interval) == 1
                assert report.second_deriv_at_half < 0
                probes = list(np.linspace(0.05, 0.45, 9)) + report.critical_points_in_open_interval
                for beta in probes:
                    # five-point stencil; the step shrinks with beta since F''' ~ 1/beta^2 near 0
                    h = min(1e-4, 1e-3 * beta)
                    f = [an.free_energy(params, beta + k * h) for k in (-2, -1, 1, 2)]
                    fd = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
                    err = abs(an.free_energy_prime(params, beta) - fd)
                    worst = max(worst, err)
                    assert err <= 1e-6
    detail(f"max |F' - finite difference| = {worst:.2e}")


@pytest.mark.acceptance(4)
def test_solver_oracle_equivalence(detail):
    rng = make_rng(2024, 4)
    total = 0
    with Budget(60.0):
        for i in range(100):
            n = int(rng.integers(2, 15))
            m = int(rng.integers(0, 2 * n + 1))
            kappa = float(rng.uniform(0.3, 2.0))
            inst = sample_random_instance(n, m, kappa, int(rng.integers(0, 2**63)))
            s = enumerate_solutions(inst)
            expected = oracles.naive_solutions(inst.constraints, kappa)
            assert np.array_equal(s.codes, expected)
            members = set(expected.tolist())
            mask = (1 << n) - 1
            assert all((c ^ mask) in members for c in members)
            assert len(s) % 2 == 0
            total += len(s)
    detail(f"100 instances, {total} solutions in total")


@pytest.mark.acceptance(5)
def test_first_moment_calibration(detail):
    n, m, kappa, trials = 10, 5, 1.0, 500
    target = 2**n * an.gauss_p(kappa) ** m
    assert abs(target - 151.8) < 0.1
    with Budget(60.0):
        counts = np.array([len(enumerate_solutions(sample_random_instance(n, m, kappa, 5_000 + i)))
                           for i in range(trials)], dtype=np.float64)
    mean = counts.mean()
    se = counts.std(ddof=1) / math.sqrt(trials)
    detail(f"mean |S| = {mean:.2f} +- {se:.2f}, target {target:.2f}")
    assert abs(mean - target) <= 4 * se


@pytest.mark.acceptance(6)
def test_martingale_property(detail):
    with Budget(300.0):
        pool = martingale_pool(14, 1.0, [5, 10, 15], instances=10, budget=10_000, seed=606)
    zs = {t: pool[t]["z"] for t in ("5", "10", "15", "pooled")}
    detail(", ".join(f"z[{t}]={z:+.2f}" for t, z in zs.items()))
    for t in ("5", "10", "15"):
        assert pool[t]["samples"] == 10 * 10_000
    assert all(abs(z) <= 4 for z in zs.values())


@pytest.mark.acceptance(7)
@pytest.mark.slow
def test_change_of_measure_identity(detail):
    config = ExperimentConfig.from_dict({"experiment": "contiguity", "seed": 707})
    assert (config.n, config.m, config.kappa, config.trials) == ([12], 10, 1.0, 100_000)
    with Budget(900.0):
        report = run_contiguity(config)
    checked = ("frozen", "size_le_8", "nearest_ge_4")
    detail(", ".join(f"{e}: z={report['events'][e]['z']:+.2f}" for e in checked))
    for label in checked:
        event = report["events"][label]
        assert not event["degenerate"]
        assert abs(event["z"]) <= 4


@pytest.mark.acceptance(8)
@pytest.mark.slow
def test_concentration_trend(detail):
    config = ExperimentConfig.from_dict({"experiment": "concentration", "seed": 808})
    assert config.n == [12, 16, 20, 24] and config.alpha == [1.0] and config.trials == 300
    with Budget(1800.0):
        summary = run_concentration(config)
    medians = {n: summary["per_n"][str(n)]["median_abs_q"] for n in config.n}
    detail(", ".join(f"n={n}: {v:.3f} (bound {3 * math.log(n):.2f})" for n, v in medians.items()))
    for n, v in medians.items():
        assert summary["per_n"][str(n)]["failed"] == 0
        assert v <= 3 * math.log(n)


@pytest.mark.acceptance(9)
@pytest.mark.slow
def test_freezing_trend(detail):
    config = ExperimentConfig.from_dict({"experiment": "freezing", "seed": 909})
    assert config.n == [20] and config.alpha == [0.5, 1.0, 1.5] and config.trials >= 300
    with Budget(1800.0):
        summary = run_freezing(config)
    planted = [pt["models"]["planted"] for pt in summary["points"]]
    fractions = [p["completely_frozen_fraction"] for p in planted]
    for a, b in zip(planted, planted[1:]):
        se = math.hypot(a["completely_frozen_se"], b["completely_frozen_se"])
        assert b["completely_frozen_fraction"] - a["completely_frozen_fraction"] >= -4 * se
    at_one = next(pt for pt in summary["points"] if pt["alpha"] == 1.0)
    detail("planted frozen fraction " + ", ".join(f"{f:.3f}" for f in fractions)
           + f"; planted vs random z at alpha=1: {at_one['planted_vs_random_z']:+.2f}")
    assert abs(at_one["planted_vs_random_z"]) <= 4


@pytest.mark.acceptance(10)
def test_boundary_inequality(detail):
    N = 10_000
    lows = {}
    with Budget(10.0):
        for kappa in (0.5, 1.0, 2.0):
            ratios = []
            for m in range(1, N // 100 + 1):
                gap = an.boundary_gap(N, m, kappa)
                assert gap > 0
                ratios.append(gap / math.sqrt(m / N))
            lows[kappa] = min(ratios)
            assert lows[kappa] > 0
    # spot-check the gap against the independent quadrature
    for kappa in (0.5, 1.0, 2.0):
        ref = oracles.mp_gauss_p(kappa) - oracles.mp_q(kappa, 1 - 37 / (2 * N))
        assert abs(an.boundary_gap(N, 37, kappa) - ref) <= 1e-12
    detail(", ".join(f"kappa={k}: min ratio {v:.4f}" for k, v in lows.items()))
