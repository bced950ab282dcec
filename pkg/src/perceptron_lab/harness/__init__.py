"""Experiment configs, trial farms and the command-line interface."""

from perceptron_lab.harness.config import ConfigError, Experiment, ExperimentConfig
from perceptron_lab.harness.experiments import (
    run,
    run_capacity_scan,
    run_concentration,
    run_contiguity,
    run_figure1,
    run_freezing,
    run_process_diagnostics,
)
from perceptron_lab.harness.trials import run_planted_trial, run_random_model_trial

__all__ = [
    "ConfigError",
    "Experiment",
    "ExperimentConfig",
    "run",
    "run_capacity_scan",
    "run_concentration",
    "run_contiguity",
    "run_figure1",
    "run_freezing",
    "run_planted_trial",
    "run_process_diagnostics",
    "run_random_model_trial",
]
