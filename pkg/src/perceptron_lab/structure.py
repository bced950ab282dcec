"""Freezing and clustering observables of an enumerated solution set."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from perceptron_lab._kernels import union_find_labels
from perceptron_lab.errors import PreconditionError
from perceptron_lab.sampler import SpinConfig
from perceptron_lab.solver import SolutionSet, nearest_other


@dataclass
class ClusterReport:
    n: int
    solution_count: int
    cluster_sizes: list[int]
    isolated_count: int
    per_solution: list[tuple[int, int, int]]

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "solution_count": self.solution_count,
            "cluster_sizes": self.cluster_sizes,
            "isolated_count": self.isolated_count,
            "per_solution": [list(row) for row in self.per_solution],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def per_solution_csv(self) -> str:
        rows = ["code,frozen,nearest"] + [f"{c},{f},{d}" for c, f, d in self.per_solution]
        return "\n".join(rows) + "\n"


def _neighbour_index(s: SolutionSet, bit: int) -> np.ndarray:
    """Index in ``s.codes`` of each solution's bit-flip neighbour, or -1 when absent."""
    target = s.codes ^ (1 << bit)
    idx = np.searchsorted(s.codes, target)
    idx[idx == s.codes.size] = 0
    return np.where(s.codes[idx] == target, idx, -1)


def frozen_count(s: SolutionSet, sigma: SpinConfig) -> int:
    """Number of coordinates whose flip leaves the solution set."""
    if sigma not in s:
        raise PreconditionError("sigma is not a solution")
    return sum(sigma.flip(i) not in s for i in range(s.n))


def frozen_counts(s: SolutionSet) -> np.ndarray:
    """Vectorised ``frozen_count`` for every solution, aligned with ``s.codes``."""
    free = np.zeros(len(s), dtype=np.int64)
    for bit in range(s.n):
        free += _neighbour_index(s, bit) >= 0
    return s.n - free


def clusters(s: SolutionSet) -> ClusterReport:
    """Connected components of S under single-coordinate flips."""
    count = len(s)
    src, dst = [], []
    for bit in range(s.n):
        nb = _neighbour_index(s, bit)
        has = np.flatnonzero(nb > np.arange(count))
        src.append(has)
        dst.append(nb[has])
    src = np.concatenate(src) if src else np.empty(0, dtype=np.int64)
    dst = np.concatenate(dst) if dst else np.empty(0, dtype=np.int64)
    labels = union_find_labels(count, src.astype(np.int64), dst.astype(np.int64))
    sizes = np.bincount(labels, minlength=count)
    cluster_sizes = sorted((int(x) for x in sizes[sizes > 0]), reverse=True)

    frozen = frozen_counts(s)
    nearest = np.ones(count, dtype=np.int64)
    for i in np.flatnonzero(frozen == s.n):
        found = nearest_other(s, s.config(i))
        nearest[i] = found[0] if found is not None else 0
    per_solution = [(int(c), int(f), int(d)) for c, f, d in zip(s.codes, frozen, nearest)]
    return ClusterReport(s.n, count, cluster_sizes, int(np.sum(frozen == s.n)), per_solution)


def isolation_verdict(s: SolutionSet, sigma: SpinConfig, radius: int) -> bool:
    """True when no other solution lies within Hamming distance ``radius`` of ``sigma``."""
    if not 0 <= radius <= s.n:
        raise PreconditionError(f"radius must lie in [0, {s.n}]")
    found = nearest_other(s, sigma)
    return found is None or found[0] > radius
