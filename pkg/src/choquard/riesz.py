"""Riesz potential I_alpha * g for radial g.

For |x| = r and |y| = s the kernel |x - y|^{-(N - alpha)} is averaged over the
unit sphere, which leaves the one-dimensional angular integral

    c_N * int_0^pi sin^{N-2}(t) ((r - s)^2 + 4 r s sin^2(t/2))^{-(N-alpha)/2} dt,

c_N = omega_{N-2} / omega_{N-1}.  The integrand is nearly singular at t = 0
when r ~ s, so the t-range is split into panels graded quadratically toward
0 (t = pi * tau^2, Gauss-Legendre in tau).  Panel counts are doubled until
the row sums settle.

At r = s the integrand behaves like t^{alpha-2}.  For alpha > 1 the diagonal
is the closed-form Beta integral; for alpha <= 1 it diverges and the entry is
replaced by the kernel's mean over the node's cell.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate as sp_integrate
from scipy.special import betaln, gammaln, hyp2f1

from .grid import RadialGrid, RadialProfile

__all__ = [
    "CacheCorrupted",
    "RieszOperator",
    "angular_mean",
    "build_kernel",
    "load_or_build_kernel",
    "riesz_constant",
]

log = logging.getLogger(__name__)

PANELS = 256
MAX_PANELS = 4096
GAUSS_PER_PANEL = 4
GRADING = 2.0
ROW_SUM_RTOL = 1e-8


class CacheCorrupted(RuntimeError):
    """A kernel cache file failed its integrity check."""


def _check_alpha(N, alpha):
    if not (0.0 < alpha < N):
        raise ValueError(f"alpha must lie in (0, N) = (0, {N}), got {alpha!r}")


def riesz_constant(N: int, alpha: float) -> float:
    """Normalisation Gamma((N-alpha)/2) / (Gamma(alpha/2) pi^{N/2} 2^alpha)."""
    _check_alpha(N, alpha)
    return math.exp(
        gammaln((N - alpha) / 2) - gammaln(alpha / 2)
        - (N / 2) * math.log(math.pi) - alpha * math.log(2.0)
    )


def _sphere_ratio(N: int) -> float:
    # omega_{N-2} / omega_{N-1}
    return math.exp(gammaln(N / 2) - gammaln((N - 1) / 2)) / math.sqrt(math.pi)


def _theta_rule(panels: int, grading: float = GRADING, npts: int = GAUSS_PER_PANEL):
    """Gauss nodes/weights on [0, pi] for panels uniform in tau, t = pi tau^grading."""
    x, w = leggauss(npts)
    lo = np.arange(panels)[:, None] / panels
    half = 0.5 / panels
    tau = (lo + half * (x + 1.0)).ravel()
    wtau = np.broadcast_to(half * w, (panels, npts)).ravel()
    theta = math.pi * tau**grading
    wtheta = wtau * grading * math.pi * tau ** (grading - 1.0)
    return theta, wtheta


class _AngularRule:
    """Precomputed factors of the angular quadrature for fixed (N, beta)."""

    def __init__(self, N, beta, panels, grading=GRADING):
        theta, wtheta = _theta_rule(panels, grading)
        self.beta = beta
        self.wts = _sphere_ratio(N) * wtheta * np.sin(theta) ** (N - 2)
        self.s2 = 4.0 * np.sin(0.5 * theta) ** 2

    def __call__(self, r, s):
        """Angular mean for a scalar ``r`` against an array ``s``."""
        x = (r - s)[:, None] ** 2 + (r * s)[:, None] * self.s2
        if self.beta == 1.0:
            vals = 1.0 / np.sqrt(x)
        elif self.beta == 2.0:
            vals = 1.0 / x
        else:
            vals = x ** (-0.5 * self.beta)
        return vals @ self.wts


def angular_mean(r, s, N: int, alpha: float, panels: int = PANELS) -> np.ndarray:
    """Mean of |x - y|^{-(N-alpha)} over |x| = r, |y| = s (no Riesz constant)."""
    _check_alpha(N, alpha)
    rule = _AngularRule(N, N - alpha, panels)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return rule(float(r), s)


def _assemble(nodes, N, alpha, panels, diag=None):
    beta = N - alpha
    rule = _AngularRule(N, beta, panels)
    M = nodes.size
    K = np.empty((M, M))
    for i in range(M):
        row = rule(nodes[i], nodes[i:])
        K[i, i:] = row
        K[i:, i] = row
    np.fill_diagonal(K, _diagonal(nodes, N, alpha) if diag is None else diag)
    return K


def _diagonal(nodes, N, alpha):
    """Angular mean at r = s.

    For alpha > 1 the integrand ~ t^{alpha-2} is integrable and the integral is
    a Beta function: 2^{N-2} (2r)^{-beta} B((alpha-1)/2, (N-1)/2) times c_N.
    A graded rule converges only algebraically here, so the closed form is used.
    """
    if alpha > 1.0:
        beta = N - alpha
        log_c = math.log(_sphere_ratio(N)) + (N - 2) * math.log(2.0) \
            + betaln((alpha - 1) / 2, (N - 1) / 2)
        return math.exp(log_c) * (2.0 * nodes) ** -beta
    return _cell_averaged_diagonal(nodes, N, alpha)


def _sphere_mean_series(r, s, N, beta):
    """Angular mean via the Gegenbauer series, r != s."""
    big, small = max(r, s), min(r, s)
    return big**-beta * hyp2f1(beta / 2, beta / 2 - N / 2 + 1, N / 2, (small / big) ** 2)


def _cell_averaged_diagonal(nodes, N, alpha):
    """Diagonal for alpha <= 1, where the pointwise kernel diverges at r = s.

    The entry is replaced by the r^{N-1}-weighted mean of the angular kernel
    over the node's own cell, so w_i K_ii integrates the (integrable)
    |r - s|^{alpha-1} singularity over the cell.  The angular mean off the
    diagonal comes from the hypergeometric closed form and the s-integral
    from adaptive quadrature with the singular point as an endpoint.
    """
    beta = N - alpha
    bounds = np.concatenate(([0.0], 0.5 * (nodes[1:] + nodes[:-1]), [0.0]))
    bounds[-1] = nodes[-1] + (nodes[-1] - bounds[-2])
    out = np.empty_like(nodes)
    for i, r in enumerate(nodes):
        def f(s):
            return s ** (N - 1) * _sphere_mean_series(r, s, N, beta)

        lo, hi = bounds[i], bounds[i + 1]
        total = (sp_integrate.quad(f, lo, r, limit=200, epsrel=1e-12)[0]
                 + sp_integrate.quad(f, r, hi, limit=200, epsrel=1e-12)[0])
        out[i] = total * N / (hi**N - lo**N)
    return out


@dataclass(frozen=True, eq=False)
class RieszOperator:
    """Dense symmetric matrix realising g -> I_alpha * g on a radial grid.

    ``kernel[i, j]`` approximates the Riesz kernel averaged over the spheres
    |x| = r_i, |y| = r_j, including the normalisation constant, so that
    ``(I_alpha * g)(r_i) ~ sum_j w_j kernel[i, j] g(r_j)``.
    """

    grid: RadialGrid
    alpha: float
    constant: float
    kernel: np.ndarray
    panels: int = PANELS

    @property
    def dim(self) -> int:
        return self.grid.dim

    def apply_values(self, g: np.ndarray) -> np.ndarray:
        return self.kernel @ (self.grid.weights * g)

    def apply(self, g: RadialProfile) -> RadialProfile:
        if not g.grid.same_as(self.grid):
            raise ValueError("profile grid does not match the operator grid")
        return RadialProfile(self.grid, self.apply_values(g.values))

    def quadratic_form(self, g: np.ndarray) -> float:
        """D(g) = int (I_alpha * g) g dx."""
        return float(np.dot(self.grid.weights * g, self.apply_values(g)))


def build_kernel(grid: RadialGrid, N: int | None = None, alpha: float = 2.0,
                 panels: int = PANELS, rtol: float = ROW_SUM_RTOL) -> RieszOperator:
    """Assemble the Riesz operator on ``grid``.

    The angular rule starts with ``panels`` graded panels and doubles until
    the relative change of every row sum sum_j w_j K_ij is below ``rtol``
    (or ``MAX_PANELS`` is reached, which is logged).
    """
    if N is None:
        N = grid.dim
    if N != grid.dim:
        raise ValueError(f"dimension {N} does not match grid dimension {grid.dim}")
    _check_alpha(N, alpha)
    const = riesz_constant(N, alpha)
    nodes = grid.nodes

    diag = _cell_averaged_diagonal(nodes, N, alpha) if alpha <= 1.0 else None
    K = _assemble(nodes, N, alpha, panels, diag)
    rows = K @ grid.weights
    while True:
        if panels >= MAX_PANELS:
            log.warning("angular rule hit %d panels without row-sum convergence", panels)
            break
        K2 = _assemble(nodes, N, alpha, 2 * panels, diag)
        rows2 = K2 @ grid.weights
        panels *= 2
        change = np.max(np.abs(rows2 - rows) / np.abs(rows2))
        K, rows = K2, rows2
        log.debug("angular panels=%d row-sum change=%.2e", panels, change)
        if change < rtol:
            break
    K *= const
    K.setflags(write=False)
    return RieszOperator(grid, float(alpha), const, K, panels)


# ---------------------------------------------------------------------------
# kernel cache

def _cache_key(grid: RadialGrid, alpha: float) -> str:
    text = f"{grid.dim}|{float(alpha)!r}|{float(grid.radius)!r}|{grid.size}|{grid.scheme}"
    return hashlib.sha256(text.encode()).hexdigest()[:20]


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def cache_path(cache_dir, grid: RadialGrid, alpha: float) -> Path:
    return Path(cache_dir) / f"riesz-{_cache_key(grid, alpha)}.npz"


def save_kernel(op: RieszOperator, path) -> None:
    meta = {
        "N": op.dim, "alpha": op.alpha, "R": op.grid.radius, "M": op.grid.size,
        "scheme": op.grid.scheme, "panels": op.panels, "constant": op.constant,
        "sha256": _digest(op.kernel),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, kernel=op.kernel, nodes=op.grid.nodes, meta=np.array(json.dumps(meta)))
    tmp.replace(path)


def load_kernel(path, grid: RadialGrid, alpha: float) -> RieszOperator:
    """Load a cached kernel, verifying its checksum and grid."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            K = np.array(data["kernel"])
            nodes = np.array(data["nodes"])
            meta = json.loads(str(data["meta"]))
    except Exception as exc:  # zip/format errors of any kind
        raise CacheCorrupted(f"kernel cache {path} is unreadable ({exc}); delete it to rebuild") from exc
    if meta.get("sha256") != _digest(K):
        raise CacheCorrupted(f"kernel cache {path} failed its checksum; delete it to rebuild")
    if (meta.get("N") != grid.dim or meta.get("alpha") != float(alpha)
            or meta.get("M") != grid.size or not np.array_equal(nodes, grid.nodes)):
        raise CacheCorrupted(f"kernel cache {path} does not match the requested grid; delete it to rebuild")
    K.setflags(write=False)
    return RieszOperator(grid, float(alpha), float(meta["constant"]), K, int(meta["panels"]))


def load_or_build_kernel(grid: RadialGrid, alpha: float, cache_dir=None) -> RieszOperator:
    if cache_dir is None:
        return build_kernel(grid, grid.dim, alpha)
    path = cache_path(cache_dir, grid, alpha)
    if path.exists():
        log.info("loading Riesz kernel from %s", path)
        return load_kernel(path, grid, alpha)
    op = build_kernel(grid, grid.dim, alpha)
    save_kernel(op, path)
    return op
