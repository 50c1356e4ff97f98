"""Problem parameters, the Choquard energy and the weak-form residual.

The discrete energy is

    E(u) = (t_grad + t_mass) / p - d_nonlocal / 2,

with t_grad the edge (flux) quadrature of |u'|^p, t_mass the node quadrature
of |u|^p and d_nonlocal = <I_alpha * F(u), F(u)>.  ``weak_residual`` is the
exact directional derivative of this discrete E, which is what makes the
finite-difference gradient check tight.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Callable

import numpy as np

from .grid import RadialProfile
from .riesz import RieszOperator

__all__ = [
    "EnergyReport",
    "GrowthVerdict",
    "NonlinearitySpec",
    "ProblemParams",
    "as_exact",
    "critical_exponents",
    "energy_report",
    "growth_check",
    "pohozaev_sides",
    "weak_residual",
]


def as_exact(x):
    """Exact rational for ints, Fractions, decimal/ratio strings and floats."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)) and not isinstance(x, bool):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r}")
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as a rational number")


def _positive_part(x):
    return x if x > 0 else 0 * x


def critical_exponents(N, p, alpha, exact: bool = False):
    """Lower and upper HLS critical exponents (N+alpha)p/(2N), (N+alpha)p/(2(N-p))."""
    Ne, pe, ae = as_exact(N), as_exact(p), as_exact(alpha)
    if not Ne > pe:
        raise ValueError(f"need N > p for the upper exponent, got N={N}, p={p}")
    if not (0 < ae < Ne):
        raise ValueError(f"alpha must lie in (0, N), got {alpha}")
    lower = (Ne + ae) * pe / (2 * Ne)
    upper = (Ne + ae) * pe / (2 * (Ne - pe))
    if exact:
        return lower, upper
    return float(lower), float(upper)


@dataclass(frozen=True)
class NonlinearitySpec:
    """The pair (f, F) with F(t) = int_0^t f.

    Use :meth:`power` for f(t) = |t|^{q-2} t or :meth:`custom` for user maps.
    """

    kind: str
    f: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    F: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    q: float | None = None
    q_exact: Fraction | None = field(default=None, repr=False)

    @classmethod
    def power(cls, q) -> "NonlinearitySpec":
        qe = as_exact(q)
        if not qe > 1:
            raise ValueError(f"power nonlinearity needs q > 1, got {q}")
        qf = float(qe)

        def f(t):
            t = np.asarray(t, dtype=float)
            return np.sign(t) * np.abs(t) ** (qf - 1.0)

        def F(t):
            return np.abs(np.asarray(t, dtype=float)) ** qf / qf

        return cls("power", f, F, qf, qe)

    @classmethod
    def custom(cls, f, F) -> "NonlinearitySpec":
        f0 = float(np.asarray(f(np.array([0.0])))[0])
        F0 = float(np.asarray(F(np.array([0.0])))[0])
        if f0 != 0.0:
            raise ValueError(f"custom nonlinearity needs f(0) = 0, got {f0}")
        if F0 != 0.0:
            raise ValueError(f"custom nonlinearity needs F(0) = 0, got {F0}")
        return cls("custom", f, F)

    @property
    def is_power(self) -> bool:
        return self.kind == "power"


@dataclass(frozen=True)
class ProblemParams:
    """Dimension N, exponent p, Riesz order alpha and the nonlinearity.

    Enforces p >= 2, N > p and (N - 2p)_+ < alpha < N.
    """

    N: int
    p: float
    alpha: float
    nonlinearity: NonlinearitySpec

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        Ne, pe, ae = as_exact(int(self.N)), as_exact(self.p), as_exact(self.alpha)
        if pe < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not Ne > pe:
            raise ValueError(f"need N > p, got N={self.N}, p={self.p}")
        if not (_positive_part(Ne - 2 * pe) < ae < Ne):
            raise ValueError(
                f"alpha must lie in ((N-2p)_+, N) = ({float(_positive_part(Ne - 2 * pe)):g}, {self.N}),"
                f" got {self.alpha}"
            )
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def power(cls, N, p, alpha, q) -> "ProblemParams":
        return cls(N, p, alpha, NonlinearitySpec.power(q))

    @property
    def q(self) -> float | None:
        return self.nonlinearity.q

    def critical_exponents(self, exact: bool = False):
        return critical_exponents(self.N, self.p, self.alpha, exact)


@dataclass(frozen=True)
class GrowthVerdict:
    f1_ok: bool
    f2_ok: bool
    heuristic: bool


def growth_check(spec: NonlinearitySpec, N, p, alpha, decades: int = 8) -> GrowthVerdict:
    """Check the small-|t| and large-|t| growth hypotheses on f.

    Power kind is decided exactly from q.  Custom kind samples
    |f(t)| / |t|^{q_lower - 1} at t = +-10^-k and |f(t)| / |t|^{q_upper - 1} at
    t = +-10^k, k = 1..decades, and reads off the log-log slope of each ratio:
    (f1) needs the small-t ratio to keep falling (slope > 0.01 in log t),
    (f2) needs the large-t ratio to stay bounded (slope <= 1e-3).  The verdict
    is flagged heuristic.
    """
    lower, upper = critical_exponents(N, p, alpha, exact=True)
    if spec.is_power:
        q = spec.q_exact
        return GrowthVerdict(q > lower, q <= upper, False)

    ks = np.arange(1, decades + 1, dtype=float)
    small = np.concatenate((10.0**-ks, -(10.0**-ks)))
    large = np.concatenate((10.0**ks, -(10.0**ks)))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        r0 = np.abs(spec.f(small)) / np.abs(small) ** (float(lower) - 1.0)
        rinf = np.abs(spec.f(large)) / np.abs(large) ** (float(upper) - 1.0)
    r0 = r0.reshape(2, -1).max(axis=0)
    rinf = rinf.reshape(2, -1).max(axis=0)
    f1 = f2 = False
    if np.all(np.isfinite(r0)):
        # slope of log ratio against log t (t decreasing along ks)
        slope0 = -np.polyfit(ks, np.log10(np.maximum(r0, 1e-300)), 1)[0]
        f1 = bool(slope0 > 0.01)
    if np.all(np.isfinite(rinf)):
        tail = slice(decades // 2, None)
        slope_inf = np.polyfit(ks[tail], np.log10(np.maximum(rinf[tail], 1e-300)), 1)[0]
        f2 = bool(slope_inf <= 1e-3)
    return GrowthVerdict(f1, f2, True)


@dataclass(frozen=True)
class EnergyReport:
    t_grad: float
    t_mass: float
    d_nonlocal: float
    energy: float

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def kinetic_plus_mass(self) -> float:
        return self.t_grad + self.t_mass


def _check_pair(u: RadialProfile, op: RieszOperator, params: ProblemParams | None = None):
    if not u.grid.same_as(op.grid):
        raise ValueError("profile grid does not match the Riesz operator grid")
    if params is not None:
        if params.N != op.dim:
            raise ValueError(f"params N={params.N} but operator is built for N={op.dim}")
        if params.alpha != op.alpha:
            raise ValueError(f"params alpha={params.alpha} but operator has alpha={op.alpha}")


def energy_terms(values: np.ndarray, params: ProblemParams, op: RieszOperator):
    """(t_grad, t_mass, d_nonlocal) for raw node values."""
    grid = op.grid
    p = params.p
    du = grid.edge_gradient(values)
    t_grad = grid.edge_integrate(np.abs(du) ** p)
    t_mass = grid.integrate(np.abs(values) ** p)
    Fu = params.nonlinearity.F(values)
    d = op.quadratic_form(Fu)
    return t_grad, t_mass, d


def energy_report(u: RadialProfile, params: ProblemParams, op: RieszOperator) -> EnergyReport:
    _check_pair(u, op, params)
    t_grad, t_mass, d = energy_terms(u.values, params, op)
    energy = (t_grad + t_mass) / params.p - 0.5 * d
    return EnergyReport(t_grad, t_mass, d, energy)


def energy_value(values: np.ndarray, params: ProblemParams, op: RieszOperator) -> float:
    t_grad, t_mass, d = energy_terms(values, params, op)
    return (t_grad + t_mass) / params.p - 0.5 * d


def weak_residual(u: RadialProfile, params: ProblemParams, op: RieszOperator,
                  phi: RadialProfile) -> float:
    """int |u'|^{p-2} u' phi' + int |u|^{p-2} u phi - int (I_alpha * F(u)) f(u) phi."""
    _check_pair(u, op, params)
    if not phi.grid.same_as(u.grid):
        raise ValueError("test function grid does not match the profile grid")
    grid = op.grid
    p = params.p
    v, w = u.values, phi.values
    du = grid.edge_gradient(v)
    dphi = grid.edge_gradient(w)
    grad_term = grid.edge_integrate(np.abs(du) ** (p - 2.0) * du * dphi)
    mass_term = grid.integrate(np.abs(v) ** (p - 2.0) * v * w)
    pot = op.apply_values(params.nonlinearity.F(v))
    nonlocal_term = grid.integrate(pot * params.nonlinearity.f(v) * w)
    return grad_term + mass_term - nonlocal_term


def pohozaev_sides(report: EnergyReport, N, p, alpha):
    """Both sides of the Pohozaev balance for the three integrals in ``report``.

    lhs = (N-p)/p t_grad + N/p t_mass, rhs = (N+alpha)/2 d_nonlocal.  The
    fibering derivative at t = 1 is exactly lhs - rhs.
    """
    lhs = (N - p) / p * report.t_grad + N / p * report.t_mass
    rhs = (N + alpha) / 2 * report.d_nonlocal
    return lhs, rhs
