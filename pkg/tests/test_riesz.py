import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erf, gamma, hyp2f1

from choquard.grid import RadialProfile, build_grid
from choquard.riesz import (CacheCorrupted, angular_mean, build_kernel, cache_path, load_kernel,
                            load_or_build_kernel, riesz_constant, save_kernel)


def sphere_mean_oracle(r, s, N, alpha):
    """Mean of |x-y|^{-(N-alpha)} over |x|=r, |y|=s from the Gegenbauer series."""
    beta = N - alpha
    big, small = np.maximum(r, s), np.minimum(r, s)
    return big**-beta * hyp2f1(beta / 2, beta / 2 - N / 2 + 1, N / 2, (small / big) ** 2)


def diagonal_oracle(r, N, alpha):
    """The same series at r = s (Gauss summation), finite for alpha > 1."""
    beta = N - alpha
    a, b, c = beta / 2, beta / 2 - N / 2 + 1, N / 2
    return r**-beta * gamma(c) * gamma(c - a - b) / (gamma(c - a) * gamma(c - b))


def newton_ball(r):
    return np.where(r <= 1, (3 - r**2) / 6, 1 / (3 * r))


def test_riesz_constant_values():
    assert riesz_constant(3, 2) == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    assert riesz_constant(4, 2) == pytest.approx(1 / (4 * math.pi**2), rel=1e-14)
    N, a = 5, 1.3
    ref = gamma((N - a) / 2) / (gamma(a / 2) * math.pi ** (N / 2) * 2**a)
    assert riesz_constant(N, a) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("alpha", [0.0, 3.0, -1.0, 3.5])
def test_riesz_constant_rejects(alpha):
    with pytest.raises(ValueError):
        riesz_constant(3, alpha)


@pytest.mark.parametrize("N,alpha", [(3, 2.0), (3, 1.2), (3, 0.5), (2, 1.0), (4, 3.0), (5, 2.5), (4, 0.7)])
def test_angular_mean_against_series(N, alpha):
    s = np.array([0.05, 0.3, 0.9, 1.1, 2.0, 5.0])
    got = angular_mean(1.0, s, N, alpha, panels=1024)
    np.testing.assert_allclose(got, sphere_mean_oracle(1.0, s, N, alpha), rtol=1e-9)


def test_angular_mean_origin_limit():
    s = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(angular_mean(1e-9, s, 3, 1.5), s**-1.5, rtol=1e-7)


@pytest.mark.parametrize("N,alpha", [(3, 2.0), (3, 1.2), (3, 0.5), (4, 3.0), (2, 1.5)])
def test_kernel_offdiagonal_against_series(N, alpha):
    grid = build_grid(4.0, 48, N)
    op = build_kernel(grid, N, alpha)
    r = grid.nodes
    ri, rj = np.meshgrid(r, r, indexing="ij")
    off = ~np.eye(r.size, dtype=bool)
    exact = op.constant * sphere_mean_oracle(ri, rj, N, alpha)
    rel = np.abs(op.kernel - exact)[off] / exact[off]
    assert rel.max() < 1e-7


@pytest.mark.parametrize("N,alpha", [(3, 2.0), (3, 1.2), (3, 2.5), (4, 1.6), (2, 1.5)])
def test_kernel_diagonal_against_gauss_sum(N, alpha):
    grid = build_grid(4.0, 32, N)
    op = build_kernel(grid, N, alpha)
    exact = op.constant * diagonal_oracle(grid.nodes, N, alpha)
    np.testing.assert_allclose(np.diag(op.kernel), exact, rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_kernel_finite_for_small_alpha(alpha):
    # pointwise diagonal diverges for alpha <= 1; the cell average stays finite
    grid = build_grid(4.0, 32, 3)
    op = build_kernel(grid, 3, alpha)
    assert np.all(np.isfinite(op.kernel))
    assert np.all(np.diag(op.kernel)[:-1] > op.kernel[np.arange(31), np.arange(1, 32)])


# cell means of the angular kernel over the node's own cell on build_grid(4, 32, N),
# computed with mpmath (30 digits) quadrature of the hypergeometric closed form
CELL_MEANS = {
    (3, 0.5): {0: 1024.0, 1: 174.8995743954898, 5: 15.080575589187035},
    (3, 0.8): {0: 335.1808835936936, 1: 66.02209976091817, 5: 6.531493478981455},
    (2, 0.5): {0: 85.86332505029522, 1: 32.147628037732865, 5: 9.235863196108406},
}


@pytest.mark.parametrize("key", sorted(CELL_MEANS))
def test_cell_averaged_diagonal_frozen(key):
    N, alpha = key
    op = build_kernel(build_grid(4.0, 32, N), N, alpha)
    for i, ref in CELL_MEANS[key].items():
        assert op.kernel[i, i] / op.constant == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("N,alpha", [(3, 2.0), (3, 0.8), (4, 2.5)])
def test_kernel_symmetric_positive(N, alpha):
    op = build_kernel(build_grid(5.0, 40, N), N, alpha)
    assert np.array_equal(op.kernel, op.kernel.T)
    assert np.all(op.kernel > 0)
    assert not op.kernel.flags.writeable


def test_newton_ball_oracle():
    grid = build_grid(8.0, 256, 3)
    op = build_kernel(grid, 3, 2.0)
    ball = RadialProfile(grid, (grid.nodes <= 1).astype(float))
    W = op.apply(ball).values
    exact = newton_ball(grid.nodes)
    assert np.max(np.abs(W - exact) / exact) < 1e-3


def test_newton_gaussian_oracle():
    # -Delta W = exp(-r^2) in R^3 is solved by W = (sqrt(pi)/4) erf(r)/r
    grid = build_grid(8.0, 256, 3)
    op = build_kernel(grid, 3, 2.0)
    W = op.apply_values(np.exp(-grid.nodes**2))
    exact = math.sqrt(math.pi) / 4 * erf(grid.nodes) / grid.nodes
    assert np.max(np.abs(W - exact) / exact) < 1e-3


def test_potential_inverts_laplacian():
    grid = build_grid(4.0, 400, 3)
    op = build_kernel(grid, 3, 2.0)
    r = grid.nodes
    g = np.where(r < 1, (1 - r**2) ** 4, 0.0)
    W = op.apply_values(g)
    h = r[1] - r[0]
    lap = (W[2:] - 2 * W[1:-1] + W[:-2]) / h**2 + (W[2:] - W[:-2]) / (h * r[1:-1])
    inner = (r[1:-1] > 0.1) & (r[1:-1] < 3.0)
    resid = np.abs(-lap - g[1:-1])[inner]
    assert resid.max() / g.max() < 1e-2


def test_apply_zero_and_mismatch():
    op = build_kernel(build_grid(3.0, 24, 3), 3, 2.0)
    assert np.all(op.apply(RadialProfile(op.grid, np.zeros(24))).values == 0)
    with pytest.raises(ValueError):
        op.apply(RadialProfile(build_grid(3.0, 32, 3), np.ones(32)))
    with pytest.raises(ValueError):
        build_kernel(op.grid, 4, 2.0)
    with pytest.raises(ValueError):
        build_kernel(op.grid, 3, 3.0)


@pytest.fixture(scope="module")
def small_op():
    return build_kernel(build_grid(6.0, 48, 3), 3, 1.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bilinear_symmetry_and_positivity(small_op, seed):
    rng = np.random.default_rng(seed)
    g, h = rng.normal(size=(2, small_op.grid.size))
    gi = small_op.grid.integrate
    a = gi(small_op.apply_values(g) * h)
    b = gi(small_op.apply_values(h) * g)
    assert abs(a - b) <= 1e-10 * (abs(a) + 1)
    D = small_op.quadratic_form(g)
    assert D >= -1e-12 * float(np.dot(g, g))
    assert np.all(small_op.apply_values(np.abs(g)) >= 0)


def test_cache_round_trip(tmp_path, small_op):
    path = cache_path(tmp_path, small_op.grid, 1.5)
    save_kernel(small_op, path)
    back = load_kernel(path, small_op.grid, 1.5)
    assert np.array_equal(back.kernel, small_op.kernel)
    assert back.constant == small_op.constant and back.panels == small_op.panels


def test_cache_key_separates_parameters(tmp_path):
    g = build_grid(6.0, 48, 3)
    paths = {cache_path(tmp_path, g, 1.5), cache_path(tmp_path, g, 2.0),
             cache_path(tmp_path, build_grid(6.0, 48, 3, "graded"), 1.5),
             cache_path(tmp_path, build_grid(6.0, 64, 3), 1.5)}
    assert len(paths) == 4


def test_cache_corruption_detected(tmp_path, small_op):
    path = cache_path(tmp_path, small_op.grid, 1.5)
    save_kernel(small_op, path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CacheCorrupted, match="delete it"):
        load_kernel(path, small_op.grid, 1.5)


def test_cache_checksum_mismatch(tmp_path, small_op):
    path = cache_path(tmp_path, small_op.grid, 1.5)
    save_kernel(small_op, path)
    with np.load(path) as data:
        meta = str(data["meta"])
        K = np.array(data["kernel"])
        nodes = np.array(data["nodes"])
    K[0, 0] *= 1 + 1e-15
    np.savez(path, kernel=K, nodes=nodes, meta=np.array(meta))
    with pytest.raises(CacheCorrupted, match="checksum"):
        load_kernel(path, small_op.grid, 1.5)
    assert json.loads(meta)["M"] == 48


def test_cache_grid_mismatch(tmp_path, small_op):
    path = tmp_path / "k.npz"
    save_kernel(small_op, path)
    with pytest.raises(CacheCorrupted, match="does not match"):
        load_kernel(path, build_grid(6.0, 48, 3, "graded"), 1.5)


def test_load_or_build_reuses_cache(tmp_path):
    g = build_grid(4.0, 32, 3)
    first = load_or_build_kernel(g, 2.0, tmp_path)
    assert len(list(tmp_path.glob("riesz-*.npz"))) == 1
    second = load_or_build_kernel(g, 2.0, tmp_path)
    assert np.array_equal(first.kernel, second.kernel)
