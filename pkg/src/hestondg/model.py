"""Heston model data: parameters, PDE coefficients, payoffs and boundary data.

The pricing PDE is written in the time-to-maturity ``tau`` and the spatial
variable ``z = (v, x)`` with ``x = log(S / K)``::

    U_tau - div(A grad U) + b . grad U + r_d U = 0

All coefficient functions accept scalars or numpy arrays of variances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Tuple

import numpy as np
from scipy.special import erfc

SIDES = ("v_min", "v_max", "x_min", "x_max")
DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# Variance floor used wherever A(v) must be uniformly elliptic.
V_FLOOR = 1e-8


@dataclass(frozen=True)
class HestonParams:
    """Model constants plus contract data.

    Construction does not validate; call :meth:`validate` before pricing.
    Formula-level helpers accept degenerate values (e.g. ``sigma = 0``).
    """

    kappa: float
    theta: float
    sigma: float
    rho: float
    r_d: float
    r_f: float
    T: float
    K: float
    S0: float
    v0: float

    def validate(self) -> "HestonParams":
        problems = []
        for name in ("sigma", "kappa", "theta", "T", "K", "S0"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0 (got {getattr(self, name)!r})")
        if not self.v0 >= 0:
            problems.append(f"v0 must be >= 0 (got {self.v0!r})")
        if not -1 < self.rho < 1:
            problems.append(f"rho must lie strictly inside (-1, 1) (got {self.rho!r})")
        if problems:
            raise ValueError("invalid Heston parameters: " + "; ".join(problems))
        return self

    def with_(self, **changes) -> "HestonParams":
        return replace(self, **changes)

    # Coefficient protocol used by assembly and the estimator.
    def diffusion(self, v):
        return diffusion_matrix(v, self)

    def diffusion_dv(self, v):
        v = np.asarray(v, dtype=float)
        a1 = 0.5 * np.array([[self.sigma**2, self.rho * self.sigma], [self.rho * self.sigma, 1.0]])
        return np.broadcast_to(a1, v.shape + (2, 2))

    def convection(self, v):
        return convection_field(v, self)

    @property
    def reaction(self) -> float:
        return self.r_d


@dataclass(frozen=True)
class ConstantCoefficients:
    """Constant A, b, r; handy for manufactured solutions and unit tests."""

    A: Tuple[Tuple[float, float], Tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    b: Tuple[float, float] = (0.0, 0.0)
    r: float = 0.0

    def diffusion(self, v):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.asarray(self.A, dtype=float), v.shape + (2, 2)).copy()

    def diffusion_dv(self, v):
        v = np.asarray(v, dtype=float)
        return np.zeros(v.shape + (2, 2))

    def convection(self, v):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.asarray(self.b, dtype=float), v.shape + (2,)).copy()

    @property
    def reaction(self) -> float:
        return self.r


@dataclass(frozen=True)
class Domain:
    v_min: float
    v_max: float
    x_min: float
    x_max: float

    def __post_init__(self):
        if not (self.v_min < self.v_max and self.x_min < self.x_max):
            raise ValueError(f"degenerate domain {self}")
        if self.v_min < 0:
            raise ValueError(f"v_min must be >= 0 (got {self.v_min})")

    @property
    def area(self) -> float:
        return (self.v_max - self.v_min) * (self.x_max - self.x_min)

    def contains(self, v, x, tol=1e-12) -> np.ndarray:
        v = np.asarray(v)
        x = np.asarray(x)
        return (
            (v >= self.v_min - tol)
            & (v <= self.v_max + tol)
            & (x >= self.x_min - tol)
            & (x <= self.x_max + tol)
        )


# ---------------------------------------------------------------------------
# Option kinds and payoffs


@dataclass(frozen=True)
class EuropeanCall:
    def payoff(self, x, K):
        return np.maximum(K * np.exp(x) - K, 0.0)

    def kinks(self, K):
        return (0.0,)


@dataclass(frozen=True)
class EuropeanPut:
    def payoff(self, x, K):
        return np.maximum(K - K * np.exp(x), 0.0)

    def kinks(self, K):
        return (0.0,)


@dataclass(frozen=True)
class Butterfly:
    """Long calls at K1 and K3, short two calls at K2 = (K1 + K3) / 2.

    The spatial variable is ``x = log(S / K2)``; the contract strike ``K`` in
    :class:`HestonParams` is ignored.
    """

    K1: float
    K2: float
    K3: float

    def __post_init__(self):
        if not self.K1 < self.K2 < self.K3:
            raise ValueError("butterfly strikes must satisfy K1 < K2 < K3")
        mid = 0.5 * (self.K1 + self.K3)
        if abs(self.K2 - mid) > 4 * np.finfo(float).eps * max(abs(mid), 1.0):
            raise ValueError(f"butterfly requires K2 = (K1 + K3)/2, got K2={self.K2}, midpoint={mid}")

    def payoff(self, x, K=None):
        s = self.K2 * np.exp(x)
        return (
            np.maximum(s - self.K1, 0.0)
            - 2.0 * np.maximum(s - self.K2, 0.0)
            + np.maximum(s - self.K3, 0.0)
        )

    def kinks(self, K=None):
        return (math.log(self.K1 / self.K2), 0.0, math.log(self.K3 / self.K2))


@dataclass(frozen=True)
class DigitalCall:
    def payoff(self, x, K):
        return np.where(np.asarray(x) > 0.0, 1.0, 0.0)

    def kinks(self, K):
        return (0.0,)


OptionKind = EuropeanCall | EuropeanPut | Butterfly | DigitalCall


def payoff(kind: OptionKind, x, p: HestonParams):
    """Payoff as a function of log-moneyness (independent of v)."""
    return kind.payoff(np.asarray(x, dtype=float), p.K)


# ---------------------------------------------------------------------------
# PDE coefficients


def _check_variance(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("variance must be nonnegative")
    return v


def diffusion_matrix(v, p: HestonParams) -> np.ndarray:
    """A(v) = v/2 [[sigma^2, rho sigma], [rho sigma, 1]], shape ``v.shape + (2, 2)``."""
    v = _check_variance(v)
    a1 = 0.5 * np.array([[p.sigma**2, p.rho * p.sigma], [p.rho * p.sigma, 1.0]])
    return v[..., None, None] * a1


def convection_field(v, p: HestonParams) -> np.ndarray:
    """b(v) = v (kappa, 1/2) + (-kappa theta + sigma^2/2, -(r_d - r_f) + rho sigma/2)."""
    v = _check_variance(v)
    b0 = np.array([-p.kappa * p.theta + 0.5 * p.sigma**2, -(p.r_d - p.r_f) + 0.5 * p.rho * p.sigma])
    b1 = np.array([p.kappa, 0.5])
    return v[..., None] * b1 + b0


def feller_holds(p: HestonParams) -> bool:
    return 2.0 * p.kappa * p.theta >= p.sigma**2


def ellipticity_bounds(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Smallest and largest eigenvalue of symmetric 2x2 matrices (closed form)."""
    a, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]
    mean = 0.5 * (a + d)
    rad = np.sqrt((0.5 * (a - d)) ** 2 + c**2)
    return mean - rad, mean + rad


def normal_cdf(x):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# Boundary data

BoundaryFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    value: BoundaryFn

    def __post_init__(self):
        if self.kind not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")

    def __call__(self, tau, v, x):
        v = np.asarray(v, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.value(tau, v, x), dtype=float), np.broadcast(v, x).shape)


@dataclass(frozen=True)
class BoundarySpec:
    """One condition per rectangle side; Neumann values are fluxes A grad U . n."""

    sides: Dict[str, BoundaryCondition] = field(default_factory=dict)

    def __post_init__(self):
        missing = set(SIDES) - set(self.sides)
        extra = set(self.sides) - set(SIDES)
        if missing or extra:
            raise ValueError(f"boundary spec must cover exactly {SIDES}; missing={sorted(missing)} extra={sorted(extra)}")

    def kind(self, side: str | int) -> str:
        if isinstance(side, (int, np.integer)):
            side = SIDES[side]
        return self.sides[side].kind

    def __getitem__(self, side: str | int) -> BoundaryCondition:
        if isinstance(side, (int, np.integer)):
            side = SIDES[side]
        return self.sides[side]

    @property
    def dirichlet_sides(self) -> Tuple[int, ...]:
        return tuple(i for i, s in enumerate(SIDES) if self.sides[s].kind == DIRICHLET)

    @property
    def neumann_sides(self) -> Tuple[int, ...]:
        return tuple(i for i, s in enumerate(SIDES) if self.sides[s].kind == NEUMANN)


def _zero(tau, v, x):
    return np.zeros(np.broadcast(v, x).shape)


def homogeneous(kinds: Dict[str, str]) -> BoundarySpec:
    """All-zero boundary data with the given per-side kinds."""
    return BoundarySpec({s: BoundaryCondition(kinds[s], _zero) for s in SIDES})


def black_scholes_boundary(tau, x, p: HestonParams, d: Domain, d_minus_variance: str = "v_max"):
    """Call value along v = v_min (x is log-moneyness).

    ``d_plus`` uses ``v_min``; ``d_minus`` uses the variance named by
    ``d_minus_variance``. At ``tau = 0`` the payoff is returned.
    """
    x = np.asarray(x, dtype=float)
    K = p.K
    if tau <= 0:
        return np.maximum(K * np.exp(x) - K, 0.0)
    v_plus = d.v_min
    v_minus = {"v_min": d.v_min, "v_max": d.v_max}[d_minus_variance]
    d_plus = (x + (p.r_d - p.r_f + 0.5 * v_plus) * tau) / math.sqrt(v_plus * tau)
    d_minus = (x + (p.r_d - p.r_f - 0.5 * v_minus) * tau) / math.sqrt(v_minus * tau)
    return K * np.exp(x - p.r_f * tau) * normal_cdf(d_plus) - K * math.exp(-p.r_d * tau) * normal_cdf(d_minus)


def boundary_spec(example: int, p: HestonParams, d: Domain, d_minus_variance: str = "v_max") -> BoundarySpec:
    """Boundary-condition set for test examples 1-4."""
    K = p.K

    if example == 1:
        def at_vmin(tau, v, x):
            return np.maximum(K * np.exp(x - p.r_f * tau) - K * math.exp(-p.r_d * tau), 0.0)

        def at_vmax(tau, v, x):
            return K * np.exp(x - p.r_f * tau) + 0.0 * v

        def at_xmax(tau, v, x):
            return max(K * math.exp(d.x_max - p.r_f * tau) - K * math.exp(-p.r_d * tau), 0.0) + 0.0 * v

        return BoundarySpec(
            {
                "v_min": BoundaryCondition(DIRICHLET, at_vmin),
                "v_max": BoundaryCondition(DIRICHLET, at_vmax),
                "x_min": BoundaryCondition(DIRICHLET, _zero),
                "x_max": BoundaryCondition(DIRICHLET, at_xmax),
            }
        )

    if example == 2:
        def at_vmin(tau, v, x):
            return black_scholes_boundary(tau, x, p, d, d_minus_variance) + 0.0 * v

        def at_vmax(tau, v, x):
            return K * np.exp(x - p.r_f * tau) + 0.0 * v

        def at_xmin(tau, v, x):
            lam = (v - d.v_min) / (d.v_max - d.v_min)
            hi = K * math.exp(d.x_min - p.r_f * tau)
            lo = float(black_scholes_boundary(tau, d.x_min, p, d, d_minus_variance))
            return lam * hi + (1.0 - lam) * lo

        def flux_xmax(tau, v, x):
            return 0.5 * v * K * np.exp(x - p.r_f * tau)

        return BoundarySpec(
            {
                "v_min": BoundaryCondition(DIRICHLET, at_vmin),
                "v_max": BoundaryCondition(DIRICHLET, at_vmax),
                "x_min": BoundaryCondition(DIRICHLET, at_xmin),
                "x_max": BoundaryCondition(NEUMANN, flux_xmax),
            }
        )

    if example == 3:
        return homogeneous({"v_min": NEUMANN, "v_max": NEUMANN, "x_min": DIRICHLET, "x_max": DIRICHLET})

    if example == 4:
        def at_xmax(tau, v, x):
            return math.exp(d.x_max - p.r_f * tau) + 0.0 * v

        return BoundarySpec(
            {
                "v_min": BoundaryCondition(NEUMANN, _zero),
                "v_max": BoundaryCondition(NEUMANN, _zero),
                "x_min": BoundaryCondition(DIRICHLET, _zero),
                "x_max": BoundaryCondition(DIRICHLET, at_xmax),
            }
        )

    raise ValueError(f"unknown example index {example!r}; expected 1, 2, 3 or 4")
