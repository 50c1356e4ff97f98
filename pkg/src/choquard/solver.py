"""Radial ground states for the power nonlinearity F(t) = |t|^q / q.

The ground state is found by minimising T(u) = t_grad + t_mass on the
constraint d_nonlocal(u) = 1 and rescaling the minimiser afterwards.  Since
d_nonlocal is homogeneous of degree 2q, projection onto the constraint is a
plain multiplicative renormalisation.

Descent directions are preconditioned gradients: the gradient of T is mapped
through the tridiagonal operator p(p-1)(-div(a grad) + b), with a, b the
(regularised) linearisation weights of the p-energy.  For p = 2 this is the
exact Hessian of T and the iteration count no longer grows with M.  Steps
use Armijo backtracking on T after projection, so T is monotone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .functional import EnergyReport, ProblemParams, energy_report, pohozaev_sides
from .grid import RadialGrid, RadialProfile
from .identities import existence_window
from .riesz import RieszOperator

__all__ = [
    "FiberingProfile",
    "NonexistenceError",
    "Solution",
    "SolveConfig",
    "fibering_profile",
    "solve_ground_state",
]

log = logging.getLogger(__name__)

EPS_REG = 1e-12
ARMIJO = 1e-4
MIN_STEP = 1e-12


class NonexistenceError(ValueError):
    """q lies outside the open window where nontrivial solutions can exist."""


@dataclass(frozen=True)
class SolveConfig:
    max_iter: int = 2000
    grad_tol: float = 1e-8
    step0: float = 1.0
    backtrack: float = 0.5
    seed: str = "gaussian"
    seed_width: float = 2.0
    seed_values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if not self.grad_tol > 0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol!r}")
        if not self.step0 > 0:
            raise ValueError(f"step0 must be positive, got {self.step0!r}")
        if not 0 < self.backtrack < 1:
            raise ValueError(f"backtrack must lie in (0, 1), got {self.backtrack!r}")
        if self.seed not in ("gaussian", "custom"):
            raise ValueError(f"seed must be 'gaussian' or 'custom', got {self.seed!r}")
        if self.seed == "gaussian" and not self.seed_width > 0:
            raise ValueError(f"seed_width must be positive, got {self.seed_width!r}")
        if self.seed == "custom" and self.seed_values is None:
            raise ValueError("custom seed requires seed_values")


@dataclass(frozen=True)
class Solution:
    """Rescaled ground state and solver diagnostics.

    ``profile`` solves the weak equation with unit coefficient; ``mu`` is the
    Lagrange multiplier of the constrained problem and ``lam`` the factor
    applied to the constrained minimiser.
    """

    profile: RadialProfile
    report: EnergyReport
    mu: float
    lam: float
    iterations: int
    converged: bool
    grad_norm: float
    history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        out = {
            "converged": self.converged,
            "iterations": self.iterations,
            "mu": self.mu,
            "lambda": self.lam,
            "grad_norm": self.grad_norm,
        }
        out.update(self.report.to_dict())
        return out


def _seed(grid: RadialGrid, config: SolveConfig) -> np.ndarray:
    if config.seed == "gaussian":
        u = np.exp(-(grid.nodes / config.seed_width) ** 2)
    else:
        u = np.asarray(config.seed_values, dtype=float)
        if u.shape != grid.nodes.shape:
            raise ValueError(f"seed has {u.size} values, grid has {grid.size} nodes")
    u = np.maximum(u, 0.0)
    if not np.any(u > 0):
        raise ValueError("seed profile is identically zero")
    return u


class _Problem:
    """Discrete T, d and their Euclidean gradients for fixed params/operator."""

    def __init__(self, params: ProblemParams, op: RieszOperator):
        self.params = params
        self.op = op
        self.grid = op.grid
        self.p = params.p
        self.q = params.q
        self.two_q = 2.0 * self.q

    def T(self, u):
        g = self.grid
        du = g.edge_gradient(u)
        return g.edge_integrate(np.abs(du) ** self.p) + g.integrate(np.abs(u) ** self.p)

    def d(self, u):
        return self.op.quadratic_form(self.params.nonlinearity.F(u))

    def project(self, u):
        return u / self.d(u) ** (1.0 / self.two_q)

    def grad_T(self, u):
        g, p = self.grid, self.p
        du = g.edge_gradient(u)
        flux = g.edge_weights * np.abs(du) ** (p - 2.0) * du
        return p * (g.edge_gradient_transpose(flux) + g.weights * np.abs(u) ** (p - 2.0) * u)

    def grad_d(self, u):
        nl = self.params.nonlinearity
        pot = self.op.apply_values(nl.F(u))
        return 2.0 * self.grid.weights * pot * nl.f(u)

    def preconditioner(self, u):
        """Upper banded form of p(p-1)(G^T diag(c a) G + diag(w b))."""
        g, p = self.grid, self.p
        du = g.edge_gradient(u)
        if p == 2.0:
            a = np.ones_like(du)
            b = np.ones_like(u)
        else:
            a = (du * du + EPS_REG) ** (0.5 * (p - 2.0))
            b = (u * u + EPS_REG) ** (0.5 * (p - 2.0))
        kappa = g.edge_weights * a / g.edge_spacing**2
        diag = kappa.copy()
        diag[1:] += kappa[:-1]
        diag += g.weights * b
        ab = np.zeros((2, u.size))
        ab[1] = diag
        ab[0, 1:] = -kappa[:-1]
        return p * (p - 1.0) * ab


def _check_window(params: ProblemParams):
    nl = params.nonlinearity
    if not nl.is_power:
        raise ValueError("the ground-state solver supports the power nonlinearity only")
    verdict = existence_window(params.N, params.p, params.alpha, nl.q_exact)
    if not verdict.admissible:
        raise NonexistenceError(
            f"q={nl.q:g} lies outside the open window ({float(verdict.q_lower):g}, "
            f"{float(verdict.q_upper):g}); the problem does not have nontrivial weak "
            "solutions there"
        )


def solve_ground_state(params: ProblemParams, grid: RadialGrid, op: RieszOperator,
                       config: SolveConfig = SolveConfig()) -> Solution:
    """Compute a nonnegative radial ground state by constrained descent.

    Raises :class:`NonexistenceError` when q is outside the open interval
    (q_lower, q_upper).  Non-convergence within ``max_iter`` is reported
    through ``Solution.converged`` with the last iterate.
    """
    _check_window(params)
    if not grid.same_as(op.grid):
        raise ValueError("grid does not match the Riesz operator grid")
    if params.N != op.dim or params.alpha != op.alpha:
        raise ValueError("params do not match the Riesz operator (N, alpha)")

    prob = _Problem(params, op)
    u = prob.project(_seed(grid, config))
    T = prob.T(u)
    history = [T]
    converged = False
    gnorm = np.inf
    it = 0
    for it in range(1, config.max_iter + 1):
        gT = prob.grad_T(u)
        gd = prob.grad_d(u)
        ab = prob.preconditioner(u)
        zT = solveh_banded(ab, gT)
        zd = solveh_banded(ab, gd)
        coef = np.dot(gd, zT) / np.dot(gd, zd)
        step_dir = zT - coef * zd
        gnorm2 = max(np.dot(gT, zT) - coef * np.dot(gd, zT), 0.0)
        gnorm = float(np.sqrt(gnorm2))
        if gnorm < config.grad_tol * (1.0 + T):
            converged = True
            break

        tau = config.step0
        while True:
            trial = np.maximum(u - tau * step_dir, 0.0)
            if np.any(trial > 0):
                trial = prob.project(trial)
                T_trial = prob.T(trial)
                if T_trial <= T - ARMIJO * tau * gnorm2:
                    break
            tau *= config.backtrack
            if tau < MIN_STEP:
                break
        if tau < MIN_STEP:
            log.warning("line search stalled at iteration %d (grad norm %.3e)", it, gnorm)
            break
        u, T = trial, T_trial
        history.append(T)
        if it % 50 == 0:
            log.info("iter %d  T=%.12g  grad=%.3e  step=%.3g", it, T, gnorm, tau)

    q, p = prob.q, prob.p
    mu = T / q
    lam = mu ** (1.0 / (2.0 * q - p))
    v = RadialProfile(grid, lam * u)
    report = energy_report(v, params, op)
    log.info("solver %s after %d iterations: mu=%.10g lambda=%.10g",
             "converged" if converged else "stopped", it, mu, lam)
    return Solution(v, report, float(mu), float(lam), it, converged, gnorm, tuple(history))


@dataclass(frozen=True)
class FiberingProfile:
    t: np.ndarray
    energy: np.ndarray
    slope_at_one: float


def fibering_profile(u: RadialProfile, params: ProblemParams, op: RieszOperator,
                     t_values) -> FiberingProfile:
    """E(u(./t)) from the scaling of the three energy integrals.

    E(u_t) = t^{N-p}/p t_grad + t^N/p t_mass - t^{N+alpha}/2 d_nonlocal; no
    resampling is involved.
    """
    t = np.asarray(t_values, dtype=float)
    if t.ndim != 1 or np.any(~(t > 0)):
        raise ValueError("dilation factors must be positive")
    rep = energy_report(u, params, op)
    N, p, a = params.N, params.p, params.alpha
    E = (t ** (N - p) / p * rep.t_grad + t**N / p * rep.t_mass
         - t ** (N + a) / 2 * rep.d_nonlocal)
    lhs, rhs = pohozaev_sides(rep, N, p, a)
    return FiberingProfile(t, E, lhs - rhs)

