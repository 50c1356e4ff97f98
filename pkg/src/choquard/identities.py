"""Verification machinery for computed and synthetic radial profiles.

Everything here is a diagnostic: the functions evaluate identities and
iteration sequences on a given profile and return the numbers, they do not
decide pass/fail (the CLI's ``--assert`` and the acceptance tests do that).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .functional import (ProblemParams, as_exact, critical_exponents, energy_report,
                         pohozaev_sides)
from .grid import RadialGrid, RadialProfile, build_grid, differentiate
from .riesz import RieszOperator, build_kernel

__all__ = [
    "CutoffField",
    "DGMSRecord",
    "MoserRecord",
    "PohozaevReport",
    "WindowVerdict",
    "decay_fit",
    "degiorgi_sequence",
    "dgms_check",
    "existence_window",
    "hls_scaling_check",
    "lp_norm",
    "moser_ladder",
    "nehari_report",
    "pohozaev_report",
    "smoothstep_cutoff",
]

TINY = 1e-300


@dataclass(frozen=True)
class PohozaevReport:
    lhs: float
    rhs: float
    residual: float
    rel_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def pohozaev_report(u: RadialProfile, params: ProblemParams, op: RieszOperator) -> PohozaevReport:
    rep = energy_report(u, params, op)
    lhs, rhs = pohozaev_sides(rep, params.N, params.p, params.alpha)
    residual = lhs - rhs
    rel = abs(residual) / max(lhs, rhs, TINY)
    return PohozaevReport(lhs, rhs, residual, rel)


def nehari_report(u: RadialProfile, params: ProblemParams, op: RieszOperator) -> float:
    """t_grad + t_mass - q d_nonlocal (power nonlinearity only)."""
    if not params.nonlinearity.is_power:
        raise NotImplementedError("the Nehari residual is defined for the power nonlinearity")
    rep = energy_report(u, params, op)
    return rep.t_grad + rep.t_mass - params.q * rep.d_nonlocal


# ---------------------------------------------------------------------------
# existence window

@dataclass(frozen=True)
class WindowVerdict:
    q_lower: Fraction
    q_upper: Fraction
    a_coeff: Fraction
    b_coeff: Fraction
    admissible: bool

    def to_dict(self) -> dict:
        return {
            "q_lower": float(self.q_lower),
            "q_upper": float(self.q_upper),
            "a_coeff": float(self.a_coeff),
            "b_coeff": float(self.b_coeff),
            "admissible": self.admissible,
        }


def existence_window(N, p, alpha, q) -> WindowVerdict:
    """Solve the Pohozaev + Nehari system for the gradient/mass shares.

    With d = 1, (N-p)/p a + N/p b = (N+alpha)/2 and a + b = q give
    a = qN/p - (N+alpha)/2 and b = (N+alpha)/2 - q(N-p)/p.  A nontrivial
    solution needs a > 0 and b > 0.  All arithmetic is exact.
    """
    Ne, pe, ae, qe = (as_exact(v) for v in (N, p, alpha, q))
    if not qe > 0:
        raise ValueError(f"q must be positive, got {q}")
    lower, upper = critical_exponents(Ne, pe, ae, exact=True)
    a = qe * Ne / pe - (Ne + ae) / 2
    b = (Ne + ae) / 2 - qe * (Ne - pe) / pe
    return WindowVerdict(lower, upper, a, b, a > 0 and b > 0)


# ---------------------------------------------------------------------------
# DGMS identity with dilation cutoffs

@dataclass(frozen=True)
class CutoffField:
    """Radial cutoff phi with phi = 1 on [0, 1], phi = 0 on [2, inf), at scale k."""

    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    k: float = 1.0

    def at(self, k: float) -> "CutoffField":
        return replace(self, k=float(k))

    def factors(self, r: np.ndarray):
        """phi(r/k) and s phi'(s) at s = r/k."""
        s = np.asarray(r, dtype=float) / self.k
        return self.phi(s), s * self.dphi(s)

    def bound(self, samples: int = 4001) -> float:
        s = np.linspace(0.0, 3.0, samples)
        return float(np.max(np.abs(s * self.dphi(s))))


def smoothstep_cutoff(k: float = 1.0) -> CutoffField:
    """C^1 cubic transition on [1, 2]: phi = 1 - (3 tau^2 - 2 tau^3), tau = s - 1."""

    def phi(s):
        tau = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
        return 1.0 - tau * tau * (3.0 - 2.0 * tau)

    def dphi(s):
        tau = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
        return -6.0 * tau * (1.0 - tau)

    return CutoffField(phi, dphi, k)


@dataclass(frozen=True)
class DGMSRecord:
    k: float
    lhs_k: float
    mass_k: float
    nonlocal_k: float
    limit_residual: float
    rel_residual: float
    lhs_gap: float
    mass_gap: float
    nonlocal_gap: float

    def to_dict(self) -> dict:
        return asdict(self)


def dgms_check(u: RadialProfile, params: ProblemParams, op: RieszOperator,
               cutoff: CutoffField | None = None, k_values: Sequence[float] = (2, 4, 8)):
    """Finite-k terms of the variational identity with h(x) = phi(x/k) x.

    For radial u and s = r/k:

    * lhs_k = int [phi + s phi'] |u'|^p - (1/p) int [N phi + s phi'] |u'|^p
    * mass_k = -int phi r u' |u|^{p-2} u
    * nonlocal_k = int phi r u' (I_alpha * F(u)) f(u)

    For a solution lhs_k = mass_k + nonlocal_k at every k.  The gaps measure
    the distance of each term to its k -> infinity limit
    ((1 - N/p) t_grad, N/p t_mass and -(N+alpha)/2 d_nonlocal).
    """
    if cutoff is None:
        cutoff = smoothstep_cutoff()
    grid = u.grid
    rep = energy_report(u, params, op)
    N, p, a = params.N, params.p, params.alpha
    nl = params.nonlinearity
    v = u.values
    du_edge = grid.edge_gradient(v)
    gradp = np.abs(du_edge) ** p
    du_node = differentiate(grid, v).values
    pot = op.apply_values(nl.F(v))
    radial_mass = grid.nodes * du_node * np.abs(v) ** (p - 2.0) * v
    radial_nonlocal = grid.nodes * du_node * pot * nl.f(v)

    lim_lhs = (1.0 - N / p) * rep.t_grad
    lim_mass = N / p * rep.t_mass
    lim_nonlocal = -(N + a) / 2 * rep.d_nonlocal

    records = []
    for k in k_values:
        k = float(k)
        if not k > 0:
            raise ValueError(f"cutoff scale must be positive, got {k}")
        if 2.0 * k > grid.radius * (1 + 1e-12):
            raise ValueError(
                f"cutoff scale k={k:g} puts the support |x| <= 2k outside the domain R={grid.radius:g}"
            )
        field = cutoff.at(k)
        phi_e, sdphi_e = field.factors(grid.edges)
        phi_n, _ = field.factors(grid.nodes)
        lhs = grid.edge_integrate((phi_e + sdphi_e) * gradp) \
            - grid.edge_integrate((N * phi_e + sdphi_e) * gradp) / p
        mass = -grid.integrate(phi_n * radial_mass)
        nonloc = grid.integrate(phi_n * radial_nonlocal)
        resid = lhs - (mass + nonloc)
        scale = max(abs(lhs), abs(mass), abs(nonloc), TINY)
        records.append(DGMSRecord(
            k, lhs, mass, nonloc, resid, abs(resid) / scale if scale > TINY else 0.0,
            abs(lhs - lim_lhs), abs(mass - lim_mass), abs(nonloc - lim_nonlocal),
        ))
    return records


# ---------------------------------------------------------------------------
# integrability diagnostics

def lp_norm(values: np.ndarray, grid: RadialGrid, nu: float) -> float:
    """Weighted discrete L^nu norm, scaled by max|u| to survive large nu."""
    a = np.abs(np.asarray(values, dtype=float))
    m = a.max(initial=0.0)
    if m == 0.0:
        return 0.0
    return float(m * np.dot(grid.weights, (a / m) ** nu) ** (1.0 / nu))


@dataclass(frozen=True)
class MoserRecord:
    n: int
    exponent: float
    norm: float
    rel_gap_to_max: float

    def to_dict(self) -> dict:
        return asdict(self)


def moser_exponents(N, p, alpha, n_steps: int, exact: bool = False):
    """nu_n = p* (p*/q_alpha)^n with q_alpha = 2Np/(N+alpha), p* = Np/(N-p)."""
    Ne, pe, ae = as_exact(N), as_exact(p), as_exact(alpha)
    if not Ne > pe:
        raise ValueError("need N > p")
    q_alpha = 2 * Ne * pe / (Ne + ae)
    p_star = Ne * pe / (Ne - pe)
    if not p_star > q_alpha:
        raise ValueError(
            f"alpha={alpha} <= N - 2p = {float(Ne - 2 * pe):g}: p* <= 2Np/(N+alpha), "
            "the integrability ladder does not ascend"
        )
    ratio = p_star / q_alpha
    nus = [p_star * ratio**n for n in range(n_steps + 1)]
    return nus if exact else [float(x) for x in nus]


def moser_ladder(u: RadialProfile, grid: RadialGrid, params: ProblemParams, n_steps: int):
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    nus = moser_exponents(params.N, params.p, params.alpha, n_steps)
    values = u.values if isinstance(u, RadialProfile) else np.asarray(u, dtype=float)
    peak = float(np.max(np.abs(values), initial=0.0))
    out = []
    for n, nu in enumerate(nus):
        norm = lp_norm(values, grid, nu)
        gap = abs(norm - peak) / peak if peak > 0 else 0.0
        out.append(MoserRecord(n, nu, norm, gap))
    return out


def degiorgi_sequence(u: RadialProfile, grid: RadialGrid, r_exp: float, rho: float,
                      n_levels: int, params: ProblemParams | None = None) -> np.ndarray:
    """Level-set energies U_k = ||w_k||_r^r of w_k = (v - 1 + 2^-k)^+, v = u/(rho ||u||_r).

    w_0 = v^+.  Returns U_0 ... U_{n_levels}.
    """
    values = u.values if isinstance(u, RadialProfile) else np.asarray(u, dtype=float)
    if params is not None:
        p_star = params.N * params.p / (params.N - params.p)
        if not params.p < r_exp < p_star:
            raise ValueError(f"r_exp must lie in (p, p*) = ({params.p:g}, {p_star:g}), got {r_exp}")
    norm = lp_norm(values, grid, r_exp)
    if norm == 0.0:
        raise ValueError("||u||_r vanishes; the normalised iteration is undefined")
    if rho < max(1.0, 1.0 / norm) * (1 - 1e-12):
        raise ValueError(f"rho must be >= max(1, 1/||u||_r) = {max(1.0, 1.0 / norm):g}, got {rho}")
    v = values / (rho * norm)
    U = np.empty(n_levels + 1)
    U[0] = np.dot(grid.weights, np.maximum(v, 0.0) ** r_exp)
    for k in range(1, n_levels + 1):
        w = np.maximum(v - 1.0 + 2.0**-k, 0.0)
        U[k] = np.dot(grid.weights, w**r_exp)
    return U


@dataclass(frozen=True)
class DecayFit:
    rate: float
    amplitude: float
    r_squared: float

    def to_dict(self) -> dict:
        return asdict(self)


def decay_fit(u: RadialProfile, grid: RadialGrid, window) -> DecayFit:
    """Least-squares fit log u ~ log A - rate * r on the nodes inside ``window``."""
    r_a, r_b = map(float, window)
    if not 0 <= r_a < r_b:
        raise ValueError(f"bad window {window!r}")
    if r_b > 0.9 * grid.radius:
        raise ValueError(f"window end {r_b:g} too close to the truncation radius {grid.radius:g}")
    values = u.values if isinstance(u, RadialProfile) else np.asarray(u, dtype=float)
    mask = (grid.nodes >= r_a) & (grid.nodes <= r_b)
    if mask.sum() < 3:
        raise ValueError("fewer than 3 nodes in the fit window")
    y = values[mask]
    if np.any(y <= 0):
        raise ValueError("profile must be positive on the fit window")
    fit = stats.linregress(grid.nodes[mask], np.log(y))
    return DecayFit(-fit.slope, math.exp(fit.intercept), fit.rvalue**2)


# ---------------------------------------------------------------------------
# Hardy-Littlewood-Sobolev scaling

@dataclass(frozen=True)
class HLSRecord:
    lam: float
    bilinear: float
    ratio: float | None
    degenerate: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _hls_relation_ok(N, mu, r_exp, t_exp) -> bool:
    vals = (N, mu, r_exp, t_exp)
    if all(isinstance(v, (int, Fraction)) for v in vals):
        return Fraction(1) / r_exp + Fraction(mu) / N + Fraction(1) / t_exp == 2
    return abs(1 / r_exp + mu / N + 1 / t_exp - 2) <= 1e-12


def hls_scaling_check(f_profile, h_profile, mu, r_exp, t_exp, lambdas, *, N: int = 3,
                      R: float = 8.0, M: int = 256, scheme: str = "uniform"):
    """HLS quotient Q = B(f_l, h_l) / (||f_l||_r ||h_l||_t) along dilations f_l(x) = f(l x).

    ``f_profile`` and ``h_profile`` are callables of r evaluated exactly on a
    grid of radius R / l (same M), so no interpolation is involved.  B uses
    the plain kernel |x - y|^{-mu}, i.e. the Riesz operator with alpha = N - mu
    divided by its normalisation.
    """
    if not (0 < float(mu) < N):
        raise ValueError(f"mu must lie in (0, N), got {mu}")
    if not (float(r_exp) > 1 and float(t_exp) > 1):
        raise ValueError("HLS exponents must exceed 1")
    if not _hls_relation_ok(N, mu, r_exp, t_exp):
        raise ValueError("exponents violate 1/r + mu/N + 1/t = 2")
    alpha = N - float(mu)
    r_exp, t_exp = float(r_exp), float(t_exp)
    out = []
    for lam in lambdas:
        lam = float(lam)
        if not lam > 0:
            raise ValueError("dilation factors must be positive")
        grid = build_grid(R / lam, M, N, scheme)
        op = build_kernel(grid, N, alpha)
        fv = np.asarray(f_profile(lam * grid.nodes), dtype=float)
        hv = np.asarray(h_profile(lam * grid.nodes), dtype=float)
        B = float(np.dot(grid.weights * fv, op.apply_values(hv))) / op.constant
        denom = lp_norm(fv, grid, r_exp) * lp_norm(hv, grid, t_exp)
        if denom == 0.0:
            out.append(HLSRecord(lam, B, None, True))
        else:
            out.append(HLSRecord(lam, B, B / denom, False))
    return out
