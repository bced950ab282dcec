"""Single-trial primitives and the trial farm."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from perceptron_lab.analytic import gauss_p
from perceptron_lab.sampler import (
    Instance,
    SpinConfig,
    make_rng,
    sample_planted_instance,
    sample_random_instance,
)
from perceptron_lab.solver import SolutionSet, enumerate_solutions, nearest_other
from perceptron_lab.structure import frozen_count


class TrialError(RuntimeError):
    """A trial could not produce a sample (e.g. too many empty instances)."""


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 64-bit seed for the sub-stream ``(master, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass
class TrialRecord:
    trial: int
    seed: int
    digest: str
    observables: dict = field(default_factory=dict)
    rejected_for_emptiness: int = 0

    def row(self, keys) -> list:
        return [self.trial, self.seed, self.digest, self.rejected_for_emptiness] + [
            self.observables[k] for k in keys
        ]


def run_random_model_trial(n: int, m: int, kappa: float, seed: int, max_rejects: int = 1000
                           ) -> tuple[Instance, SolutionSet, SpinConfig, int]:
    """
    Random-model sample: resample the instance until S is nonempty (at most
    ``max_rejects`` rejections), then pick sigma* uniformly from S.
    Returns the instance, S, sigma* and the number of rejections.
    """
    for attempt in range(max_rejects + 1):
        inst = sample_random_instance(n, m, kappa, derive_seed(seed, attempt))
        s = enumerate_solutions(inst)
        if len(s):
            pick = int(make_rng(inst.seed, 1).integers(0, len(s)))
            return inst, s, s.config(pick), attempt
    raise TrialError(f"S empty in all {max_rejects + 1} attempts (n={n}, m={m}, kappa={kappa})")


def run_planted_trial(n: int, m: int, kappa: float, seed: int
                      ) -> tuple[Instance, SolutionSet, SpinConfig]:
    sigma_star = SpinConfig.uniform(n, make_rng(seed, 1))
    inst = sample_planted_instance(n, m, kappa, sigma_star, derive_seed(seed, 0))
    return inst, enumerate_solutions(inst), sigma_star


def evaluate_event(event: dict, s: SolutionSet, sigma: SpinConfig) -> bool:
    kind = event["kind"]
    if kind == "all":
        return True
    if kind == "member":
        return sigma in s
    if kind == "frozen":
        return frozen_count(s, sigma) == s.n
    if kind == "max_size":
        return len(s) <= event["threshold"]
    if kind == "min_nearest":
        found = nearest_other(s, sigma)
        return found is None or found[0] >= event["distance"]
    raise ValueError(f"unknown event {event!r}")


def event_label(event: dict) -> str:
    kind = event["kind"]
    if kind == "max_size":
        return f"size_le_{event['threshold']}"
    if kind == "min_nearest":
        return f"nearest_ge_{event['distance']}"
    return kind


def expected_count(n: int, m: int, kappa: float) -> float:
    return math.exp(n * math.log(2.0) + m * math.log(gauss_p(kappa)))


def farm(func, tasks, workers: int = 1) -> list:
    """Apply ``func`` to every task tuple, preserving task order."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) < 2:
        return [func(*t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, *zip(*tasks), chunksize=chunk))
