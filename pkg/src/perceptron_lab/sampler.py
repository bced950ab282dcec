"""
Random and planted perceptron instances.

Randomness always flows from an explicit ``numpy.random.Generator`` built on
PCG64; standard normals come from numpy's ziggurat sampler. A stream is
identified by ``(seed, *stream_key)`` through ``SeedSequence``, so trial ``i``
of a farm seeded with ``s`` uses ``make_rng(s, i)`` regardless of which worker
runs it.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from perceptron_lab.analytic import gauss_p
from perceptron_lab.errors import DomainError

GENERATOR = "numpy-PCG64/ziggurat-normal"

# p(kappa) below which truncated normals switch from rejection to inverse CDF
REJECTION_MIN_ACCEPT = 0.05

_MAGIC = b"ISPINST1"
_HEADER = struct.Struct("<IIdBQQ32s")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the sub-stream ``(seed, *stream)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SpinConfig:
    """A configuration in {-1, +1}^n packed into an integer; bit i set means sigma_i = +1."""

    n: int
    code: int

    def __post_init__(self):
        if not 1 <= self.n <= 63:
            raise DomainError(f"n must lie in [1, 63], got {self.n}")
        if not 0 <= self.code < (1 << self.n):
            raise DomainError(f"code {self.code} does not fit in {self.n} bits")

    @classmethod
    def from_spins(cls, spins) -> "SpinConfig":
        spins = np.asarray(spins)
        if not np.all(np.abs(spins) == 1):
            raise DomainError("spins must be +-1")
        code = 0
        for i, s in enumerate(spins):
            if s > 0:
                code |= 1 << i
        return cls(len(spins), code)

    @classmethod
    def uniform(cls, n: int, rng: np.random.Generator) -> "SpinConfig":
        return cls(n, int(rng.integers(0, 1 << n)))

    def spins(self) -> np.ndarray:
        bits = (self.code >> np.arange(self.n)) & 1
        return (2 * bits - 1).astype(np.float64)

    def flip(self, i: int) -> "SpinConfig":
        return SpinConfig(self.n, self.code ^ (1 << i))

    def antipode(self) -> "SpinConfig":
        return SpinConfig(self.n, self.code ^ ((1 << self.n) - 1))

    def overlap(self, other: "SpinConfig") -> int:
        return self.n - 2 * self.distance(other)

    def distance(self, other: "SpinConfig") -> int:
        return (self.code ^ other.code).bit_count()


class Provenance(str, enum.Enum):
    RANDOM = "random"
    PLANTED = "planted"


@dataclass(frozen=True, eq=False)
class Instance:
    n: int
    m: int
    kappa: float
    constraints: np.ndarray
    provenance: Provenance = Provenance.RANDOM
    planted: SpinConfig | None = None
    seed: int = 0
    generator: str = field(default=GENERATOR)

    def __post_init__(self):
        x = np.ascontiguousarray(self.constraints, dtype=np.float64).reshape(self.m, self.n)
        x.flags.writeable = False
        object.__setattr__(self, "constraints", x)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def threshold(self) -> float:
        return self.kappa * math.sqrt(self.n)

    def validate(self) -> None:
        if self.n < 1 or self.m < 0 or not self.kappa > 0:
            raise DomainError("invalid instance dimensions or kappa")
        if self.constraints.shape != (self.m, self.n):
            raise DomainError("constraint matrix has the wrong shape")
        if self.provenance is Provenance.PLANTED:
            if self.planted is None or self.planted.n != self.n:
                raise DomainError("planted instance without a matching planted configuration")
            dots = self.constraints @ self.planted.spins()
            if np.any(np.abs(dots) > self.threshold):
                raise DomainError("a planted row does not satisfy the planted configuration")

    def prefix(self, t: int) -> "Instance":
        """The instance made of the first ``t`` constraints."""
        if not 0 <= t <= self.m:
            raise DomainError(f"prefix length {t} outside [0, {self.m}]")
        return Instance(self.n, t, self.kappa, self.constraints[:t], self.provenance,
                        self.planted, self.seed, self.generator)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            self.n,
            self.m,
            self.kappa,
            0 if self.provenance is Provenance.RANDOM else 1,
            self.planted.code if self.planted is not None else 0,
            self.seed,
            self.generator.encode()[:32],
        )
        return _MAGIC + header + self.constraints.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Instance":
        if blob[: len(_MAGIC)] != _MAGIC:
            raise DomainError("not an instance container")
        offset = len(_MAGIC)
        n, m, kappa, prov, code, seed, gen = _HEADER.unpack_from(blob, offset)
        offset += _HEADER.size
        payload = np.frombuffer(blob, dtype="<f8", offset=offset)
        if payload.size != n * m:
            raise DomainError(f"payload holds {payload.size} values, expected {n * m}")
        planted = SpinConfig(n, code) if prov == 1 else None
        inst = cls(n, m, kappa, payload.reshape(m, n).astype(np.float64),
                   Provenance.PLANTED if prov == 1 else Provenance.RANDOM,
                   planted, seed, gen.rstrip(b"\0").decode())
        inst.validate()
        return inst

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "m": self.m,
            "kappa": self.kappa,
            "provenance": self.provenance.value,
            "planted_code": None if self.planted is None else self.planted.code,
            "seed": self.seed,
            "generator": self.generator,
            "constraints": self.constraints.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        d = json.loads(text)
        planted = None if d["planted_code"] is None else SpinConfig(d["n"], d["planted_code"])
        x = np.array(d["constraints"], dtype=np.float64).reshape(d["m"], d["n"])
        inst = cls(d["n"], d["m"], d["kappa"], x, Provenance(d["provenance"]), planted,
                   d["seed"], d["generator"])
        inst.validate()
        return inst

    def save(self, path: Path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json())
        else:
            path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Path) -> "Instance":
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_json(path.read_text())
        return cls.from_bytes(path.read_bytes())


def truncated_normal_array(kappa: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` draws of Z conditioned on |Z| <= kappa."""
    p = gauss_p(kappa)
    if p >= REJECTION_MIN_ACCEPT:
        out = np.empty(size)
        filled = 0
        while filled < size:
            z = rng.standard_normal(max(16, int(1.2 * (size - filled) / p) + 1))
            z = z[np.abs(z) <= kappa][: size - filled]
            out[filled: filled + z.size] = z
            filled += z.size
        return out
    lo = ndtr(-kappa)
    u = lo + (1.0 - 2.0 * lo) * rng.random(size)
    return np.clip(ndtri(u), -kappa, kappa)


def truncated_normal(kappa: float, rng: np.random.Generator) -> float:
    return float(truncated_normal_array(kappa, 1, rng)[0])


def sample_random_instance(n: int, m: int, kappa: float, seed: int) -> Instance:
    if n < 1 or m < 0:
        raise DomainError("need n >= 1 and m >= 0")
    rng = make_rng(seed)
    x = rng.standard_normal((m, n))
    return Instance(n, m, float(kappa), x, Provenance.RANDOM, None, int(seed))


def planted_rows(n: int, m: int, kappa: float, sigma_star: SpinConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Gaussian rows conditioned on |<X, sigma*>| <= kappa sqrt(n)."""
    u = sigma_star.spins() / math.sqrt(n)
    threshold = kappa * math.sqrt(n)
    x = np.empty((m, n))
    todo = np.arange(m)
    while todo.size:
        g = truncated_normal_array(kappa, todo.size, rng)
        w = rng.standard_normal((todo.size, n))
        w -= np.outer(w @ u, u)
        rows = w + np.outer(g, u)
        x[todo] = rows
        # float rounding can push a draw with g ~ +-kappa a hair past the boundary
        todo = todo[np.abs(rows @ sigma_star.spins()) > threshold]
    return x


def sample_planted_instance(n: int, m: int, kappa: float, sigma_star: SpinConfig,
                            seed: int) -> Instance:
    if n < 1 or m < 0:
        raise DomainError("need n >= 1 and m >= 0")
    if sigma_star.n != n:
        raise DomainError("planted configuration has the wrong dimension")
    rng = make_rng(seed)
    x = planted_rows(n, m, kappa, sigma_star, rng)
    return Instance(n, m, float(kappa), x, Provenance.PLANTED, sigma_star, int(seed))


def satisfies(x_row, sigma: SpinConfig, kappa: float) -> bool:
    x_row = np.asarray(x_row, dtype=np.float64)
    if x_row.shape != (sigma.n,):
        raise DomainError(f"row of length {x_row.shape} does not match n={sigma.n}")
    return bool(abs(float(x_row @ sigma.spins())) <= kappa * math.sqrt(sigma.n))
