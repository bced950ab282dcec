"""Experiment configuration files."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from perceptron_lab.errors import CapabilityError
from perceptron_lab.solver import MAX_N


class ConfigError(ValueError):
    pass


class Experiment(str, enum.Enum):
    FIGURE1 = "figure1"
    CONCENTRATION = "concentration"
    FREEZING = "freezing"
    CONTIGUITY = "contiguity"
    CAPACITY_SCAN = "capacity_scan"
    PROCESS_DIAGNOSTICS = "process_diagnostics"


EVENT_KINDS = ("all", "member", "frozen", "max_size", "min_nearest")

# applied by from_dict for keys the config file leaves out
EXPERIMENT_DEFAULTS = {
    Experiment.FIGURE1: {"alpha": [1.69, 1.75, 1.81]},
    Experiment.CONCENTRATION: {"n": [12, 16, 20, 24], "alpha": [1.0], "trials": 300},
    Experiment.FREEZING: {"n": [20], "alpha": [0.5, 1.0, 1.5], "trials": 300},
    Experiment.CONTIGUITY: {
        "n": [12],
        "m": 10,
        "trials": 100_000,
        "events": [
            {"kind": "all"},
            {"kind": "member"},
            {"kind": "frozen"},
            {"kind": "max_size", "threshold": 8},
            {"kind": "min_nearest", "distance": 4},
        ],
    },
    Experiment.CAPACITY_SCAN: {
        "n": [12, 16, 20, 24],
        "alpha": [0.25 * k for k in range(1, 13)],
        "trials": 200,
    },
    Experiment.PROCESS_DIAGNOSTICS: {
        "n": [20],
        "alpha": [1.0],
        "trials": 500,
        "martingale_steps": [5, 10, 15],
    },
}


@dataclass
class ExperimentConfig:
    experiment: Experiment
    n: list[int] = field(default_factory=lambda: [12])
    kappa: float = 1.0
    alpha: list[float] = field(default_factory=lambda: [1.0])
    # explicit constraint count; overrides floor(alpha * n) when set
    m: int | None = None
    trials: int = 100
    seed: int = 0
    delta: float = 0.05
    max_rejects: int = 1000
    models: list[str] = field(default_factory=lambda: ["planted", "random"])
    events: list[dict] = field(default_factory=lambda: [{"kind": "frozen"}])
    grid_points: int = 2000
    regularity_steps: list[int] | None = None
    pair_budget: int = 100_000
    martingale_steps: list[int] = field(default_factory=list)
    martingale_instances: int = 10
    fresh_constraints: int = 10_000
    c3: float | None = None

    def __post_init__(self):
        try:
            self.experiment = Experiment(self.experiment)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if isinstance(self.n, int):
            self.n = [self.n]
        if isinstance(self.alpha, (int, float)):
            self.alpha = [float(self.alpha)]
        self.n = [int(x) for x in self.n]
        self.alpha = [float(a) for a in self.alpha]
        self.validate()

    def validate(self) -> None:
        if not self.n or any(x < 1 for x in self.n):
            raise ConfigError("n must be a positive integer or a list of them")
        if self.experiment is not Experiment.FIGURE1 and max(self.n) > MAX_N:
            raise CapabilityError(f"n={max(self.n)} exceeds the enumeration limit {MAX_N}")
        if not self.kappa > 0:
            raise ConfigError("kappa must be positive")
        if not self.alpha or any(not a > 0 for a in self.alpha):
            raise ConfigError("alpha values must be positive")
        if self.m is not None and self.m < 0:
            raise ConfigError("m must be nonnegative")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.max_rejects < 0:
            raise ConfigError("max_rejects must be nonnegative")
        for model in self.models:
            if model not in ("planted", "random"):
                raise ConfigError(f"unknown model {model!r}")
        for event in self.events:
            if event.get("kind") not in EVENT_KINDS:
                raise ConfigError(f"unknown event {event!r}; known kinds: {EVENT_KINDS}")

    def constraints_for(self, n: int, alpha: float) -> int:
        return self.m if self.m is not None else math.floor(alpha * n)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["experiment"] = self.experiment.value
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' key")
        try:
            defaults = EXPERIMENT_DEFAULTS[Experiment(d["experiment"])]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        try:
            return cls(**{**defaults, **d})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)
