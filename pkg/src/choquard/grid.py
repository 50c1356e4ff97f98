"""Radial grids and quadrature for radially symmetric functions on R^N.

A radial function g(|x|) on the ball B_R is represented by its samples on
cell midpoints.  Full-space integrals use the composite midpoint rule on the
measure omega_{N-1} r^{N-1} dr, so ``grid.integrate(g)`` approximates
``int_{B_R} g(|x|) dx``.

Besides the nodes the grid carries a staggered set of *edges* (the cell
interfaces) used for the flux form of the p-Dirichlet energy.  The last edge
sits between the outermost node and the Dirichlet ghost u(R) = 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gamma

__all__ = [
    "RadialGrid",
    "RadialProfile",
    "build_grid",
    "differentiate",
    "integrate",
    "read_profile_csv",
    "sphere_area",
    "write_profile_csv",
]

SCHEMES = ("uniform", "graded")


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere S^{N-1} in R^N."""
    return 2.0 * np.pi ** (N / 2) / gamma(N / 2)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Cell-centred radial grid on (0, R].

    Attributes
    ----------
    nodes : (M,) array
        Cell midpoints r_1 < ... < r_M.
    weights : (M,) array
        Full-space quadrature weights, ``sum(weights * g(nodes))`` ~ int g dx.
    radius : float
        Truncation radius R.
    dim : int
        Space dimension N.
    scheme : str
        ``"uniform"`` or ``"graded"`` (r = R s^2 with s uniform).
    edges : (M,) array
        Cell interfaces between consecutive nodes plus the midpoint of the
        last half cell [r_M, R].
    edge_spacing : (M,) array
        Node-to-node distances; the last entry is R - r_M.
    edge_weights : (M,) array
        Full-space quadrature weights attached to the edges.
    """

    nodes: np.ndarray
    weights: np.ndarray
    radius: float
    dim: int
    scheme: str
    edges: np.ndarray
    edge_spacing: np.ndarray
    edge_weights: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    def key(self) -> tuple:
        return (self.dim, float(self.radius), self.size, self.scheme)

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.key() == other.key() and np.array_equal(self.nodes, other.nodes)
        )

    def integrate(self, samples) -> float:
        return integrate(self, samples)

    def edge_gradient(self, values: np.ndarray) -> np.ndarray:
        """Flux-form derivative on the edges, with u(R) = 0 beyond the last node."""
        padded = np.append(values, 0.0)
        return np.diff(padded) / self.edge_spacing

    def edge_gradient_transpose(self, flux: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`edge_gradient` in the Euclidean inner product."""
        scaled = flux / self.edge_spacing
        out = -scaled.copy()
        out[1:] += scaled[:-1]
        return out

    def edge_integrate(self, samples) -> float:
        return float(np.dot(self.edge_weights, samples))

    def ball_volume(self) -> float:
        return sphere_area(self.dim) * self.radius ** self.dim / self.dim

    def rescaled(self, factor: float) -> "RadialGrid":
        """Same grid with every length multiplied by ``factor``."""
        return build_grid(self.radius * factor, self.size, self.dim, self.scheme)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Samples u(r_i) of a radial function on ``grid``."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise ValueError(
                f"profile has {values.size} values, grid has {self.grid.size} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "RadialProfile":
        return cls(grid, np.broadcast_to(func(grid.nodes), grid.nodes.shape).astype(float))

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def __mul__(self, scalar: float) -> "RadialProfile":
        return RadialProfile(self.grid, self.values * scalar)

    __rmul__ = __mul__


def build_grid(R: float, M: int, N: int, scheme: str = "uniform") -> RadialGrid:
    """Build a cell-centred radial grid on (0, R] with ``M`` nodes in dimension ``N``.

    The uniform scheme places nodes at (i - 1/2) h, h = R/M, so the origin is
    never a node.  The graded scheme uses r = R s^2 on a uniform s-grid, which
    clusters nodes near the origin; its weights are the midpoint rule in s.
    """
    if not (R > 0 and np.isfinite(R)):
        raise ValueError(f"R must be positive and finite, got {R!r}")
    if int(M) != M or M < 8:
        raise ValueError(f"M must be an integer >= 8, got {M!r}")
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N!r}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown grid scheme {scheme!r}; expected one of {SCHEMES}")
    M, N, R = int(M), int(N), float(R)
    area = sphere_area(N)

    ds = 1.0 / M
    s_nodes = (np.arange(M) + 0.5) * ds
    s_edges = np.append(np.arange(1, M) * ds, 1.0 - 0.25 * ds)
    if scheme == "uniform":
        nodes = R * s_nodes
        edges = R * s_edges
        jac_nodes = np.full(M, R)
        jac_edges = np.full(M, R)
    else:
        nodes = R * s_nodes**2
        edges = R * s_edges**2
        jac_nodes = 2.0 * R * s_nodes
        jac_edges = 2.0 * R * s_edges

    weights = area * nodes ** (N - 1) * jac_nodes * ds
    # the last edge only covers the half cell [r_M, R]
    edge_ds = np.full(M, ds)
    edge_ds[-1] = 0.5 * ds
    edge_weights = area * edges ** (N - 1) * jac_edges * edge_ds
    edge_spacing = np.diff(np.append(nodes, R))

    for arr in (nodes, weights, edges, edge_spacing, edge_weights):
        arr.setflags(write=False)
    return RadialGrid(nodes, weights, R, N, scheme, edges, edge_spacing, edge_weights)


def integrate(grid: RadialGrid, samples) -> float:
    """Approximate int_{B_R} g(|x|) dx from node samples of g."""
    if isinstance(samples, RadialProfile):
        samples = samples.values
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.nodes.shape:
        raise ValueError(
            f"sample length {samples.size} does not match grid size {grid.size}"
        )
    return float(np.dot(grid.weights, samples))


def _derivative_matrix_rows(x: np.ndarray):
    """Coefficients (a, b, c) of the three-point derivative at each interior node."""
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    a = -h2 / (h1 * (h1 + h2))
    b = (h2 - h1) / (h1 * h2)
    c = h1 / (h2 * (h1 + h2))
    return a, b, c


def differentiate(grid: RadialGrid, u) -> RadialProfile:
    """Second-order node-centred derivative u'(r_i).

    The origin side uses the even reflection u(-r) = u(r), so u'(0) = 0 is
    built in.  The outermost node uses the one-sided three-point formula.
    Both ends are exact for quadratics.
    """
    values = u.values if isinstance(u, RadialProfile) else np.asarray(u, dtype=float)
    x = grid.nodes
    ext_x = np.concatenate(([-x[0]], x))
    ext_u = np.concatenate(([values[0]], values))
    a, b, c = _derivative_matrix_rows(ext_x)
    du = np.empty_like(values)
    du[:-1] = a * ext_u[:-2] + b * ext_u[1:-1] + c * ext_u[2:]

    # one-sided Lagrange derivative at x[-1] through x[-3], x[-2], x[-1]
    x0, x1, x2 = x[-3], x[-2], x[-1]
    u0, u1, u2 = values[-3], values[-2], values[-1]
    l0 = (x2 - x1) / ((x0 - x1) * (x0 - x2))
    l1 = (x2 - x0) / ((x1 - x0) * (x1 - x2))
    l2 = (2 * x2 - x0 - x1) / ((x2 - x0) * (x2 - x1))
    du[-1] = l0 * u0 + l1 * u1 + l2 * u2
    return RadialProfile(grid, du)


def write_profile_csv(path, profile: RadialProfile) -> None:
    """Write ``r,u`` rows with round-trip exact decimal text."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "u"])
        for r, u in zip(profile.grid.nodes, profile.values):
            writer.writerow([repr(float(r)), repr(float(u))])


def read_profile_csv(path, grid: RadialGrid | None = None):
    """Read an ``r,u`` CSV file.

    Returns ``(r, u)`` arrays, or a :class:`RadialProfile` when ``grid`` is
    given, in which case the radii must match the grid nodes.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["r", "u"]:
            raise ValueError(f"{path}: expected header 'r,u', got {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(-1, 2)
    r, u = data[:, 0], data[:, 1]
    if grid is None:
        return r, u
    if r.size != grid.size or not np.allclose(r, grid.nodes, rtol=1e-12, atol=0.0):
        raise ValueError(
            f"{path}: profile radii do not match the configured grid "
            f"({r.size} rows vs {grid.size} nodes)"
        )
    return RadialProfile(grid, u)
