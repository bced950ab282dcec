import json
import math
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from perceptron_lab.errors import CapabilityError
from perceptron_lab.harness import (
    ConfigError,
    ExperimentConfig,
    run,
    run_capacity_scan,
    run_contiguity,
    run_freezing,
    run_planted_trial,
    run_process_diagnostics,
    run_random_model_trial,
)
from perceptron_lab.harness.cli import main
from perceptron_lab.harness.trials import TrialError, derive_seed, evaluate_event, farm

import oracles


def cfg(**kw):
    return ExperimentConfig.from_dict(kw)


def test_config_defaults_per_experiment():
    assert cfg(experiment="figure1").alpha == [1.69, 1.75, 1.81]
    assert cfg(experiment="contiguity").m == 10
    assert cfg(experiment="concentration", n=14).n == [14]


@pytest.mark.parametrize("bad", [
    {"experiment": "nope"},
    {"experiment": "freezing", "colour": 3},
    {"experiment": "freezing", "kappa": -1},
    {"experiment": "freezing", "trials": 0},
    {"experiment": "freezing", "models": ["other"]},
    {"experiment": "contiguity", "events": [{"kind": "odd"}]},
    {"n": 10},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_capability_error_for_large_n():
    with pytest.raises(CapabilityError):
        cfg(experiment="freezing", n=32)
    cfg(experiment="figure1", n=1000)


def test_config_digest_stable():
    a = cfg(experiment="freezing", seed=3)
    b = cfg(experiment="freezing", seed=3)
    c = cfg(experiment="freezing", seed=4)
    assert a.digest() == b.digest() != c.digest()


def test_derive_seed_streams():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    seeds = {derive_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(7, 1, 0) != derive_seed(7, 0, 1)


def test_random_trial_draws_uniform_solution():
    # m=0: S is the full cube, so sigma must be uniform over 16 codes
    codes = [run_random_model_trial(4, 0, 1.0, derive_seed(11, i))[2].code for i in range(3200)]
    counts = np.bincount(codes, minlength=16)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_random_trial_rejection_limit():
    with pytest.raises(TrialError):
        run_random_model_trial(4, 60, 0.05, 0, max_rejects=2)


def test_planted_trial_contains_sigma():
    inst, s, sigma = run_planted_trial(12, 15, 1.0, 99)
    assert sigma in s
    assert inst.planted == sigma


def test_evaluate_event():
    _, s, sigma = run_planted_trial(10, 12, 1.0, 5)
    assert evaluate_event({"kind": "all"}, s, sigma)
    assert evaluate_event({"kind": "member"}, s, sigma)
    assert evaluate_event({"kind": "max_size", "threshold": len(s)}, s, sigma)
    assert not evaluate_event({"kind": "max_size", "threshold": len(s) - 1}, s, sigma)
    d = oracles.pairwise_nearest(s.codes, sigma.code)
    assert evaluate_event({"kind": "min_nearest", "distance": d}, s, sigma)
    assert not evaluate_event({"kind": "min_nearest", "distance": d + 1}, s, sigma)


def _square(x):
    return x * x


def test_farm_preserves_order():
    tasks = [(i,) for i in range(50)]
    assert farm(_square, tasks, workers=1) == [i * i for i in range(50)]
    assert farm(_square, tasks, workers=2) == [i * i for i in range(50)]


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("settings", [
    {"experiment": "freezing", "n": 10, "alpha": [0.5, 1.0], "trials": 20},
    {"experiment": "contiguity", "n": 8, "m": 6, "trials": 200},
    {"experiment": "concentration", "n": [8, 10], "trials": 20},
    {"experiment": "capacity_scan", "n": [8], "alpha": [0.5, 1.0, 2.0], "trials": 20},
    {"experiment": "process_diagnostics", "n": 10, "trials": 100, "martingale_steps": [3],
     "martingale_instances": 2, "fresh_constraints": 200},
    {"experiment": "figure1", "alpha": [1.75], "grid_points": 200},
])
def test_byte_reproducible(tmp_path, settings):
    config = cfg(seed=123, **settings)
    run(config, tmp_path / "a")
    run(config, tmp_path / "b", workers=2)
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys() and "manifest.json" in a
    assert a == b
    manifest = json.loads(a["manifest.json"])
    assert manifest["config_hash"] == config.digest()
    assert set(manifest["files"]) == set(a) - {"manifest.json"}


def test_seed_changes_output(tmp_path):
    base = {"experiment": "contiguity", "n": 8, "m": 6, "trials": 50}
    run(cfg(seed=1, **base), tmp_path / "a")
    run(cfg(seed=2, **base), tmp_path / "b")
    assert _tree(tmp_path / "a")["contiguity_random.csv"] != _tree(tmp_path / "b")["contiguity_random.csv"]


def test_capacity_scan_monotone():
    summary = run_capacity_scan(cfg(experiment="capacity_scan", n=[10], trials=60, seed=4))
    fractions = summary["per_n"]["10"]["nonempty_fraction"]
    assert all(b <= a for a, b in zip(fractions, fractions[1:]))
    assert fractions[0] == 1.0


def test_freezing_small_run():
    summary = run_freezing(cfg(experiment="freezing", n=12, alpha=[0.5, 1.5], trials=40, seed=2))
    for point in summary["points"]:
        for model in ("planted", "random"):
            stats_ = point["models"][model]
            assert 0 <= stats_["completely_frozen_fraction"] <= 1
            assert sum(stats_["nearest_histogram"].values()) == 40 - stats_["failed"]
        assert point["radius"] >= 0
        assert "planted_vs_random_z" in point


def test_contiguity_small_run():
    report = run_contiguity(cfg(experiment="contiguity", n=8, m=6, trials=2000, seed=3))
    assert report["events"]["all"]["planted"] == 1.0
    # E[|S|]/E|S| = 1 on the random side
    assert abs(report["events"]["all"]["z"]) < 4
    for event in report["events"].values():
        assert abs(event["z"]) < 5


def test_process_diagnostics_small_run():
    report = run_process_diagnostics(cfg(experiment="process_diagnostics", n=10, trials=100, seed=1,
                                         martingale_steps=[2, 4], martingale_instances=3,
                                         fresh_constraints=500))
    assert report["telescoping_max_error"] < 1e-10
    assert report["tail"]["traces"] == 100
    assert set(report["martingale"]) == {"2", "4", "pooled"}


def test_cli_exit_codes(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"experiment": "figure1", "alpha": [1.75], "grid_points": 100}))
    assert main(["figure1", "--config", str(config), "--out", str(tmp_path / "out")]) == 0
    line = json.loads(capsys.readouterr().out.strip())
    assert line["experiment"] == "figure1"
    assert (tmp_path / "out" / "figure1.svg").exists()

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["freezing", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"experiment": "freezing", "n": 40}))
    assert main(["freezing", "--config", str(bad), "--out", str(tmp_path / "x")]) == 3
    bad.write_text(json.dumps({"experiment": "contiguity"}))
    assert main(["freezing", "--config", str(bad)]) == 2


def test_cli_entry_point_installed(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "perceptron_lab.harness.cli", "figure1",
                           "--seed", "5", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "figure1_summary.json").exists()


def test_figure1_skips_alpha_above_capacity():
    summary = run(cfg(experiment="figure1", alpha=[1.75, 1.9], grid_points=100))
    assert summary["skipped"] == [1.9]
    assert math.isclose(summary["curves"]["1.75"]["beta_c"], 0.180451, abs_tol=1e-6)
