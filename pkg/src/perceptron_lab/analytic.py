"""
Closed-form quantities of the symmetric (rectangle) Ising perceptron.

Everything here is a pure scalar function of ``(kappa, alpha, beta)``:
entropy, the Gaussian strip probability ``p(kappa)``, the pair survival
probability ``q_kappa(beta)``, the annealed free energy ``F_alpha`` and its
derivatives, the capacity density, the frozen-cluster radius ``beta_c`` and
the exact first-moment overlap exponents of the planted model.

All logarithms are natural.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gammaln

from perceptron_lab.errors import DomainError, NumericalError, PreconditionError

LOG2 = math.log(2.0)
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Correlations this close to +-1 are treated as the degenerate |Z2| = |Z1| case.
RHO_DEGENERATE = 1.0 - 1e-12

# bracketing scan for beta_c
_SCAN_LO = 1e-6
_SCAN_POINTS = 10_000


@dataclass(frozen=True)
class ModelParams:
    kappa: float
    alpha: float

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "alpha": self.alpha}


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    return beta


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    return kappa


def entropy(beta: float) -> float:
    """Shannon entropy (nats) of a Bernoulli(beta) variable; 0 at both endpoints."""
    beta = _check_beta(beta)
    if beta == 0.0 or beta == 1.0:
        return 0.0
    return -beta * math.log(beta) - (1.0 - beta) * math.log1p(-beta)


def entropy_prime(beta: float) -> float:
    return math.log1p(-beta) - math.log(beta)


def std_normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def std_normal_cdf(x: float) -> float:
    if x < 0:
        return 0.5 * math.erfc(-x / _SQRT2)
    return 1.0 - 0.5 * math.erfc(x / _SQRT2)


def gauss_p(kappa: float) -> float:
    """Pr(|Z| <= kappa) for a standard normal Z."""
    kappa = _check_kappa(kappa)
    return math.erf(kappa / _SQRT2)


def bivariate_pdf(x: float, y: float, rho: float) -> float:
    one_minus = (1.0 - rho) * (1.0 + rho)
    quad_form = (x * x - 2.0 * rho * x * y + y * y) / one_minus
    return math.exp(-0.5 * quad_form) / (2.0 * math.pi * math.sqrt(one_minus))


def _bivariate_pdf_drho(x: float, y: float, rho: float) -> float:
    one_minus = (1.0 - rho) * (1.0 + rho)
    bracket = rho / one_minus + (x * y * (1.0 + rho * rho) - rho * (x * x + y * y)) / one_minus**2
    return bivariate_pdf(x, y, rho) * bracket


def _rectangle_probability(kappa: float, rho: float) -> float:
    # Pr(|Z1|<=k, |Z2|<=k) = int_{-k}^{k} phi(z) Pr(|rho z + s W| <= k) dz; the
    # integrand is even in z so only [0, k] is integrated.
    s = math.sqrt((1.0 - rho) * (1.0 + rho))
    scale = s * _SQRT2

    def integrand(z):
        return math.exp(-0.5 * z * z) * (
            math.erf((kappa - rho * z) / scale) - math.erf((-kappa - rho * z) / scale)
        )

    # the conditional strip probability drops within ~s/|rho| of z = kappa
    width = s / abs(rho)
    points = [kappa - c * width for c in (0.5, 2.0, 8.0, 32.0) if kappa - c * width > 0.0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        value, _ = quad(
            integrand, 0.0, kappa, points=points or None, epsabs=1e-15, epsrel=1e-13, limit=400
        )
    return value * _INV_SQRT_2PI


def bivariate_q(kappa: float, beta: float) -> float:
    """
    Joint probability that two unit-variance Gaussians with correlation
    ``2*beta - 1`` both lie in ``[-kappa, kappa]``.

    Computed by one-dimensional adaptive quadrature of the conditional strip
    probability; correlation 0 and +-1 are returned in closed form.
    """
    kappa = _check_kappa(kappa)
    beta = _check_beta(beta)
    rho = 2.0 * beta - 1.0
    if abs(rho) >= RHO_DEGENERATE:
        return gauss_p(kappa)
    if rho == 0.0:
        p = gauss_p(kappa)
        return p * p
    return _rectangle_probability(kappa, rho)


def bivariate_q_prime(kappa: float, beta: float) -> float:
    """d q_kappa / d beta via Plackett's identity (corner densities of the rectangle)."""
    kappa = _check_kappa(kappa)
    rho = 2.0 * _check_beta(beta) - 1.0
    if abs(rho) >= RHO_DEGENERATE:
        raise DomainError("derivative of q is singular at beta in {0, 1}")
    return 4.0 * (bivariate_pdf(kappa, kappa, rho) - bivariate_pdf(kappa, -kappa, rho))


def bivariate_q_second(kappa: float, beta: float) -> float:
    rho = 2.0 * _check_beta(beta) - 1.0
    if abs(rho) >= RHO_DEGENERATE:
        raise DomainError("derivative of q is singular at beta in {0, 1}")
    return 8.0 * (_bivariate_pdf_drho(kappa, kappa, rho) - _bivariate_pdf_drho(kappa, -kappa, rho))


def free_energy(params: ModelParams, beta: float) -> float:
    """H(beta) + alpha * log q_kappa(beta); endpoints use the one-sided limits."""
    beta = _check_beta(beta)
    if beta == 0.0 or beta == 1.0:
        return params.alpha * math.log(gauss_p(params.kappa))
    return entropy(beta) + params.alpha * math.log(bivariate_q(params.kappa, beta))


def free_energy_gap(params: ModelParams, beta: float) -> float:
    """F_alpha(beta) - alpha * log p(kappa); exactly 0 at beta in {0, 1}."""
    beta = _check_beta(beta)
    if beta == 0.0 or beta == 1.0:
        return 0.0
    p = gauss_p(params.kappa)
    if beta == 0.5:
        return LOG2 + params.alpha * math.log(p)
    q = bivariate_q(params.kappa, beta)
    return entropy(beta) + params.alpha * (math.log(q) - math.log(p))


def free_energy_prime(params: ModelParams, beta: float) -> float:
    beta = _check_beta(beta)
    if beta in (0.0, 1.0):
        raise DomainError("F' diverges at the endpoints")
    if beta == 0.5:
        return 0.0
    q = bivariate_q(params.kappa, beta)
    return entropy_prime(beta) + params.alpha * bivariate_q_prime(params.kappa, beta) / q


def free_energy_second(params: ModelParams, beta: float) -> float:
    beta = _check_beta(beta)
    if beta in (0.0, 1.0):
        raise DomainError("F'' diverges at the endpoints")
    q = bivariate_q(params.kappa, beta)
    dq = bivariate_q_prime(params.kappa, beta)
    d2q = bivariate_q_second(params.kappa, beta)
    return -1.0 / (beta * (1.0 - beta)) + params.alpha * (d2q / q - (dq / q) ** 2)


def alpha_c(kappa: float) -> float:
    """Capacity density -log 2 / log p(kappa)."""
    return -LOG2 / math.log(gauss_p(kappa))


def _bisect(func, lo, hi, f_lo, tol, max_iter=200):
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        if f_mid == 0.0:
            return float(mid)
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def beta_c(params: ModelParams, tol: float = 1e-13) -> float:
    """
    The unique zero of ``free_energy_gap`` in (0, 1/2).

    A uniform 10^4-point scan on [1e-6, 1/2 - 1e-6] brackets the crossing from
    negative to positive; bisection then refines it.
    """
    if params.alpha >= alpha_c(params.kappa):
        raise PreconditionError(
            f"alpha={params.alpha} >= alpha_c({params.kappa})={alpha_c(params.kappa)}; "
            "G(1/2) <= 0 and beta_c is undefined"
        )
    grid = np.linspace(_SCAN_LO, 0.5 - _SCAN_LO, _SCAN_POINTS)
    values = np.array([free_energy_gap(params, b) for b in grid])
    crossings = np.flatnonzero((values[:-1] < 0) & (values[1:] >= 0))
    if crossings.size == 0:
        raise NumericalError(
            "no negative-to-positive sign change of G found on the scan grid",
            diagnostics={"beta": grid[:: _SCAN_POINTS // 100].tolist(),
                         "G": values[:: _SCAN_POINTS // 100].tolist()},
        )
    i = int(crossings[0])
    return _bisect(lambda b: free_energy_gap(params, b), grid[i], grid[i + 1], values[i], tol)


class CurveKind(str, enum.Enum):
    FREE_ENERGY_GAP = "FreeEnergyGap"
    FIRST_MOMENT_EXPONENT = "FirstMomentExponent"


@dataclass
class CurveTable:
    kind: CurveKind
    params: ModelParams
    points: list[tuple[float, float]]
    roots: list[float] = field(default_factory=list)
    critical_points: list[float] = field(default_factory=list)

    def __post_init__(self):
        betas = [b for b, _ in self.points]
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ValueError("curve points must be strictly increasing in beta")

    def write(self, csv_path: Path) -> tuple[Path, Path]:
        """Write ``beta,value`` CSV plus a JSON sidecar next to it."""
        csv_path = Path(csv_path)
        lines = ["beta,value"] + [f"{b!r},{v!r}" for b, v in self.points]
        csv_path.write_text("\n".join(lines) + "\n")
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return csv_path, sidecar

    def metadata(self) -> dict:
        return {
            "kind": self.kind.value,
            "params": self.params.as_dict(),
            "roots": list(self.roots),
            "critical_points": list(self.critical_points),
        }

    @classmethod
    def read(cls, csv_path: Path) -> "CurveTable":
        csv_path = Path(csv_path)
        rows = csv_path.read_text().splitlines()[1:]
        points = [tuple(float(x) for x in row.split(",")) for row in rows if row]
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        return cls(
            kind=CurveKind(meta["kind"]),
            params=ModelParams(**meta["params"]),
            points=points,
            roots=meta["roots"],
            critical_points=meta["critical_points"],
        )


def gap_curve(params: ModelParams, betas) -> CurveTable:
    points = [(float(b), free_energy_gap(params, b)) for b in betas]
    roots = [beta_c(params)] if params.alpha < alpha_c(params.kappa) else []
    return CurveTable(CurveKind.FREE_ENERGY_GAP, params, points, roots=roots)


@dataclass
class Assumption1Report:
    params: ModelParams
    second_deriv_at_half: float
    critical_points_in_open_interval: list[float]
    holds: bool
    warning: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "params": self.params.as_dict(),
                "second_deriv_at_half": self.second_deriv_at_half,
                "critical_points_in_open_interval": self.critical_points_in_open_interval,
                "holds": self.holds,
                "warning": self.warning,
            },
            indent=2,
            sort_keys=True,
        )


def second_derivative_at_half(params: ModelParams) -> float:
    # q'(1/2) = 0 and q''(1/2) = 16 kappa^2 phi(kappa)^2, H''(1/2) = -4
    p = gauss_p(params.kappa)
    phi = std_normal_pdf(params.kappa)
    return -4.0 + params.alpha * 16.0 * params.kappa**2 * phi**2 / p**2


def _sign_changes(func, grid, values):
    """Locate sign changes of ``func`` by bisection inside each bracketing cell."""
    out = []
    for i in np.flatnonzero(np.sign(values[:-1]) != np.sign(values[1:])):
        out.append(_bisect(func, grid[i], grid[i + 1], values[i], 1e-14))
    return out


def _critical_points(params: ModelParams, grid_size: int) -> list[float]:
    func = lambda b: free_energy_prime(params, b)  # noqa: E731
    inner = np.linspace(0.0, 0.5, grid_size + 2)[1:-1]
    values = np.array([func(b) for b in inner])
    # F'(0+) = -inf and F'(1/2) = 0 are known; a root below the first grid
    # point is bracketed against a point deep in the singular region.
    points = _sign_changes(func, inner, values)
    if values[0] > 0:
        lo = 1e-11
        if func(lo) < 0:
            points.insert(0, _bisect(func, lo, inner[0], func(lo), 1e-16))
    return points


def check_assumption1(params: ModelParams, grid_size: int = 1000, max_refine: int = 4) -> Assumption1Report:
    """
    Count the critical points of F_alpha on (0, 1/2) from sign changes of the
    closed-form derivative.

    The grid is refined fourfold until two consecutive resolutions agree on
    the count; if they never agree within ``max_refine`` refinements a
    :class:`NumericalError` is raised.
    """
    if grid_size < 1000:
        raise PreconditionError("grid_size must be at least 1000")
    d2 = second_derivative_at_half(params)
    previous = _critical_points(params, grid_size)
    for _ in range(max_refine):
        grid_size *= 4
        current = _critical_points(params, grid_size)
        if len(current) == len(previous):
            break
        previous = current
    else:
        raise NumericalError(
            "critical-point count did not stabilise under grid refinement",
            diagnostics={"grid_size": grid_size, "count": len(current)},
        )
    warning = None
    if d2 > 0:
        holds = True
    elif d2 == 0:
        holds = True
        warning = "F''(1/2) == 0 exactly: the condition is vacuous at this boundary"
    else:
        holds = len(current) == 1
    return Assumption1Report(params, d2, current, holds, warning)


def log_binomial(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def first_moment_overlap(N: int, m_overlap: int, params: ModelParams) -> float:
    """
    (1/N) log of the planted-model expected number of solutions at overlap
    ``m_overlap`` with the planted configuration:
    ``C(N, (N+m)/2) * (q_kappa(1/2 + m/2N) / p(kappa))^(alpha N)``.
    """
    if N < 1:
        raise DomainError("N must be positive")
    if abs(m_overlap) > N or (N - m_overlap) % 2:
        raise DomainError(f"overlap {m_overlap} incompatible with N={N}")
    k = (N + m_overlap) // 2
    beta = 0.5 + m_overlap / (2.0 * N)
    log_ratio = math.log(bivariate_q(params.kappa, beta)) - math.log(gauss_p(params.kappa))
    return (log_binomial(N, k) + params.alpha * N * log_ratio) / N


def boundary_gap(N: int, m_flip: int, kappa: float) -> float:
    """p(kappa) - q_kappa(1 - m_flip / 2N): survival deficit of an m_flip-distant pair."""
    if not 0 <= m_flip <= N:
        raise DomainError(f"m_flip must lie in [0, N], got {m_flip}")
    if m_flip == 0:
        return 0.0
    return gauss_p(kappa) - bivariate_q(kappa, 1.0 - m_flip / (2.0 * N))
