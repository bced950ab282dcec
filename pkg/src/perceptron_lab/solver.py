"""
Exhaustive enumeration of the solution set S and its filtration S_0 >= S_1 >= ... >= S_m.

The walk visits only the half of the cube with the top coordinate equal to -1,
in Gray-code order, updating the m running dot products by +-2 X_ij per flip.
Every constraint is invariant under sigma -> -sigma, so the other half is
obtained by complementing; this also makes antipodal closure exact.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from perceptron_lab._kernels import walk_shard
from perceptron_lab.errors import CapabilityError, DomainError, PreconditionError
from perceptron_lab.sampler import Instance, SpinConfig

MAX_N = 30


@dataclass(frozen=True, eq=False)
class SolutionSet:
    n: int
    m: int
    codes: np.ndarray

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.int64)
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)

    def __len__(self) -> int:
        return int(self.codes.size)

    def __contains__(self, sigma) -> bool:
        code = sigma.code if isinstance(sigma, SpinConfig) else int(sigma)
        i = np.searchsorted(self.codes, code)
        return bool(i < self.codes.size and self.codes[i] == code)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SolutionSet) and self.n == other.n and self.m == other.m
                and np.array_equal(self.codes, other.codes))

    def config(self, i: int) -> SpinConfig:
        return SpinConfig(self.n, int(self.codes[i]))

    def spins(self) -> np.ndarray:
        """|S| x n matrix of +-1 entries."""
        return spins_matrix(self.codes, self.n)

    def validate(self) -> None:
        c = self.codes
        if c.size and (np.any(np.diff(c) <= 0) or c[0] < 0 or c[-1] >= 1 << self.n):
            raise DomainError("codes must be strictly increasing n-bit words")
        mask = (1 << self.n) - 1
        if not np.array_equal(np.sort(c ^ mask), c):
            raise DomainError("solution set is not closed under the antipodal map")

    def write(self, path: Path) -> None:
        """JSON header line followed by one hex codeword per line."""
        width = (self.n + 3) // 4
        header = json.dumps({"n": self.n, "m": self.m, "count": len(self)})
        body = "".join(f"{int(c):0{width}x}\n" for c in self.codes)
        Path(path).write_text(header + "\n" + body)

    @classmethod
    def read(cls, path: Path) -> "SolutionSet":
        lines = Path(path).read_text().splitlines()
        meta = json.loads(lines[0])
        codes = np.array([int(x, 16) for x in lines[1:] if x], dtype=np.int64)
        if codes.size != meta["count"]:
            raise DomainError("codeword count does not match header")
        s = cls(meta["n"], meta["m"], codes)
        s.validate()
        return s


@dataclass
class Filtration:
    cardinalities: np.ndarray
    snapshots: dict[int, SolutionSet] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.cardinalities.size - 1

    def to_csv(self) -> str:
        rows = ["t,cardinality"] + [f"{t},{int(c)}" for t, c in enumerate(self.cardinalities)]
        return "\n".join(rows) + "\n"


def spins_matrix(codes: np.ndarray, n: int) -> np.ndarray:
    bits = (np.asarray(codes, dtype=np.int64)[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.float64)


def _check_capability(instance: Instance) -> None:
    if instance.n > MAX_N:
        raise CapabilityError(f"exhaustive enumeration supports n <= {MAX_N}, got {instance.n}")


def _walk(instance: Instance, keep_from: int, workers: int):
    """Histogram of first-violation indices and the codes with index >= keep_from, both halves."""
    _check_capability(instance)
    n, m = instance.n, instance.m
    xt = np.ascontiguousarray(instance.constraints.T)
    shard_bits = min(max(0, math.ceil(math.log2(max(workers, 1)))), n - 1)
    free_bits = n - 1 - shard_bits
    threshold = instance.threshold

    def run(prefix):
        return walk_shard(xt, threshold, prefix, free_bits, keep_from)

    prefixes = range(1 << shard_bits)
    if workers > 1 and shard_bits > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, prefixes))
    else:
        parts = [run(p) for p in prefixes]

    hist = 2 * sum(part[0] for part in parts)
    half_codes = np.concatenate([part[1] for part in parts])
    half_fails = np.concatenate([part[2] for part in parts])
    mask = (1 << n) - 1
    codes = np.concatenate([half_codes, half_codes ^ mask])
    fails = np.concatenate([half_fails, half_fails])
    order = np.argsort(codes, kind="stable")
    return hist, codes[order], fails[order]


def enumerate_solutions(instance: Instance, workers: int = 1) -> SolutionSet:
    """The exact solution set of ``instance`` (requires n <= 30)."""
    _, codes, _ = _walk(instance, instance.m, workers)
    return SolutionSet(instance.n, instance.m, codes)


def enumerate_filtration(instance: Instance, snapshot_steps=(), workers: int = 1) -> Filtration:
    """|S_t| for t = 0..m, with the full set retained at each step in ``snapshot_steps``."""
    steps = sorted(set(int(t) for t in snapshot_steps))
    if steps and not (0 <= steps[0] and steps[-1] <= instance.m):
        raise DomainError("snapshot steps must lie in [0, m]")
    keep_from = steps[0] if steps else instance.m + 1
    hist, codes, fails = _walk(instance, keep_from, workers)
    # |S_t| = #{sigma : first violation index >= t}
    cardinalities = np.cumsum(hist[::-1])[::-1].copy()
    snapshots = {t: SolutionSet(instance.n, t, codes[fails >= t]) for t in steps}
    return Filtration(cardinalities, snapshots)


def overlap_histogram(s: SolutionSet, reference: SpinConfig) -> dict[int, int]:
    if reference.n != s.n:
        raise DomainError("reference has the wrong dimension")
    dist = np.bitwise_count(s.codes ^ reference.code).astype(np.int64)
    counts = np.bincount(dist, minlength=s.n + 1)
    return {s.n - 2 * d: int(counts[d]) for d in range(s.n, -1, -1)}


def nearest_other(s: SolutionSet, sigma: SpinConfig) -> tuple[int, SpinConfig] | None:
    """Minimum Hamming distance from ``sigma`` to another solution, with the smallest such codeword."""
    if sigma not in s:
        raise PreconditionError("sigma is not a solution")
    dist = np.bitwise_count(s.codes ^ sigma.code).astype(np.int64)
    dist[dist == 0] = s.n + 1
    if dist.size < 2:
        return None
    i = int(np.argmin(dist))
    return int(dist[i]), s.config(i)
