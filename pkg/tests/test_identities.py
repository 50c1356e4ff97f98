import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from choquard.functional import (EnergyReport, NonlinearitySpec, ProblemParams, energy_report,
                                 pohozaev_sides)
from choquard.grid import RadialProfile, build_grid
from choquard.identities import (decay_fit, degiorgi_sequence, dgms_check, existence_window,
                                 hls_scaling_check, lp_norm, moser_exponents, moser_ladder,
                                 nehari_report, pohozaev_report, smoothstep_cutoff)
from choquard.riesz import build_kernel


@pytest.fixture(scope="module")
def small():
    grid = build_grid(12.0, 96, 3)
    return grid, build_kernel(grid, 3, 2.0)


def gaussian(r):
    return np.exp(-np.asarray(r) ** 2)


# --- Pohozaev and Nehari -----------------------------------------------------

def test_pohozaev_zero(small):
    grid, op = small
    rep = pohozaev_report(RadialProfile(grid, np.zeros(grid.size)), ProblemParams.power(3, 2, 2, 2), op)
    assert (rep.lhs, rep.rhs, rep.residual, rep.rel_residual) == (0, 0, 0, 0)


@pytest.mark.parametrize("N,alpha", [(3, 2), (4, 1), (5, 3)])
def test_pohozaev_coefficients_at_p_two(N, alpha):
    unit = [EnergyReport(1, 0, 0, 0), EnergyReport(0, 1, 0, 0), EnergyReport(0, 0, 1, 0)]
    sides = [pohozaev_sides(r, N, 2, alpha) for r in unit]
    assert sides[0] == ((N - 2) / 2, 0)
    assert sides[1] == (N / 2, 0)
    assert sides[2] == (0, (N + alpha) / 2)


def test_pohozaev_ground_state(ground_state_512, newton_params, newton_op_512):
    rep = pohozaev_report(ground_state_512.profile, newton_params, newton_op_512)
    assert rep.lhs > 0 and rep.rhs > 0
    assert rep.rel_residual < 1e-2


def test_nehari(small, ground_state_512, newton_params, newton_op_512):
    grid, op = small
    params = ProblemParams.power(3, 2, 2, 2)
    assert nehari_report(RadialProfile(grid, np.zeros(grid.size)), params, op) == 0
    assert abs(nehari_report(RadialProfile.from_function(grid, gaussian), params, op)) > 1e-2
    rep = ground_state_512.report
    res = nehari_report(ground_state_512.profile, newton_params, newton_op_512)
    assert abs(res) / (rep.t_grad + rep.t_mass) < 1e-6
    custom = ProblemParams(3, 2, 2, NonlinearitySpec.custom(lambda t: t, lambda t: t * t / 2))
    with pytest.raises(NotImplementedError):
        nehari_report(RadialProfile.from_function(grid, gaussian), custom, op)


# --- existence window ---------------------------------------------------------

def test_window_examples():
    v = existence_window(3, 2, 2, 2)
    assert (v.a_coeff, v.b_coeff, v.admissible) == (Fraction(1, 2), Fraction(3, 2), True)
    assert (v.q_lower, v.q_upper) == (Fraction(5, 3), 5)
    low = existence_window(3, 2, 2, Fraction(5, 3))
    assert low.a_coeff == 0 and not low.admissible
    high = existence_window(3, 2, 2, 5)
    assert high.b_coeff == 0 and not high.admissible
    six = existence_window(3, 2, 2, 6)
    assert six.b_coeff == Fraction(-1, 2) and not six.admissible
    assert existence_window(3, 2, 2, "2.5").admissible


def test_window_rejects_bad_params():
    with pytest.raises(ValueError):
        existence_window(2, 2, 1, 2)
    with pytest.raises(ValueError):
        existence_window(3, 2, 3, 2)


@settings(max_examples=200, deadline=None)
@given(N=st.integers(2, 8), p_num=st.integers(4, 30), a_num=st.integers(1, 99),
       offset=st.fractions(min_value=Fraction(-2), max_value=Fraction(2)))
def test_window_flips_exactly_at_critical_exponents(N, p_num, a_num, offset):
    p = Fraction(p_num, 4)
    assume(N > p)
    alpha = Fraction(a_num * N, 100)
    v = existence_window(N, p, alpha, 2)
    for edge in (v.q_lower, v.q_upper):
        q = edge + offset
        assume(q > 0)
        got = existence_window(N, p, alpha, q).admissible
        assert got == (v.q_lower < q < v.q_upper)


# --- DGMS ---------------------------------------------------------------------

def test_cutoff_shape():
    c = smoothstep_cutoff()
    s = np.linspace(0, 3, 3001)
    phi, dphi = c.phi(s), c.dphi(s)
    assert np.all(phi[s <= 1] == 1) and np.all(phi[s >= 2] == 0)
    assert np.all((phi >= 0) & (phi <= 1))
    assert c.dphi(np.array([1.0, 2.0])).tolist() == [0.0, 0.0]
    # derivative matches the function; phi'' jumps at s = 1, 2, where the
    # centred difference is off by about h |phi''| / 2 = 3e-3
    np.testing.assert_allclose(np.gradient(phi, s)[1:-1], dphi[1:-1], atol=5e-3)
    smooth = (np.abs(s - 1) > 0.01) & (np.abs(s - 2) > 0.01)
    np.testing.assert_allclose(np.gradient(phi, s)[smooth], dphi[smooth], atol=1e-5)
    assert c.bound() == pytest.approx(max(np.abs(s * dphi)))
    assert c.bound() <= 3.0


def test_dgms_zero(small):
    grid, op = small
    recs = dgms_check(RadialProfile(grid, np.zeros(grid.size)), ProblemParams.power(3, 2, 2, 2), op,
                      k_values=[2, 4])
    for r in recs:
        assert all(getattr(r, f) == 0 for f in ("lhs_k", "mass_k", "nonlocal_k", "limit_residual"))


def test_dgms_cutoff_inactive_on_support(small):
    grid, op = small
    params = ProblemParams.power(3, 2, 2, 2)
    half = grid.radius / 2
    u = RadialProfile.from_function(grid, lambda r: np.where(r < half - 1, (1 - (r / (half - 1)) ** 2) ** 3, 0.0))
    rec = dgms_check(u, params, op, k_values=[half])[0]
    tg = energy_report(u, params, op).t_grad
    assert rec.lhs_k == pytest.approx((1 - 3 / 2) * tg, rel=1e-13)
    assert rec.lhs_gap <= 1e-13 * abs(tg)


def test_dgms_k_too_large(small):
    grid, op = small
    u = RadialProfile.from_function(grid, gaussian)
    with pytest.raises(ValueError, match="outside the domain"):
        dgms_check(u, ProblemParams.power(3, 2, 2, 2), op, k_values=[grid.radius])


def test_dgms_ground_state(ground_state_512, newton_params, newton_op_512):
    recs = dgms_check(ground_state_512.profile, newton_params, newton_op_512, k_values=[2, 4, 8, 10])
    gaps = [r.lhs_gap for r in recs]
    assert gaps[-3] > gaps[-2] > gaps[-1]
    assert recs[-1].rel_residual < 1e-2
    assert all(r.rel_residual < 1e-2 for r in recs)


# --- Moser ladder ------------------------------------------------------------

def test_moser_exponents_exact():
    nus = moser_exponents(3, 2, 2, 3, exact=True)
    assert nus[0] == 6
    assert all(b / a == Fraction(5, 2) for a, b in zip(nus, nus[1:]))


@pytest.mark.parametrize("N,p,alpha", [(5, 2, 1), (5, 2, 0.5), (7, 2, 2)])
def test_moser_rejects_small_alpha(N, p, alpha):
    with pytest.raises(ValueError, match="does not ascend"):
        moser_exponents(N, p, alpha, 4)


def test_moser_zero_and_ground_state(small, ground_state_512, newton_params):
    grid, _ = small
    recs = moser_ladder(RadialProfile(grid, np.zeros(grid.size)), grid, ProblemParams.power(3, 2, 2, 2), 3)
    assert all(r.norm == 0 for r in recs)
    recs = moser_ladder(ground_state_512.profile, ground_state_512.profile.grid, newton_params, 8)
    big = [r for r in recs if r.exponent > 1e3]
    assert big and all(r.rel_gap_to_max < 2e-2 for r in big)


def test_lp_norm_matches_direct():
    grid = build_grid(5.0, 64, 3)
    u = np.exp(-grid.nodes)
    for nu in (2.0, 3.5, 10.0):
        direct = np.dot(grid.weights, u**nu) ** (1 / nu)
        assert lp_norm(u, grid, nu) == pytest.approx(direct, rel=1e-13)
    assert lp_norm(np.zeros(64), grid, 4.0) == 0.0


# --- De Giorgi ---------------------------------------------------------------

def test_degiorgi_zero_rejected(small):
    grid, _ = small
    with pytest.raises(ValueError):
        degiorgi_sequence(RadialProfile(grid, np.zeros(grid.size)), grid, 4.0, 1.0, 10)


def test_degiorgi_preconditions(small):
    grid, _ = small
    u = RadialProfile.from_function(grid, lambda r: 1e-3 * gaussian(r))
    with pytest.raises(ValueError, match="rho"):
        degiorgi_sequence(u, grid, 4.0, 1.0, 10)
    with pytest.raises(ValueError, match="r_exp"):
        degiorgi_sequence(u, grid, 7.0, 1e6, 10, ProblemParams.power(3, 2, 2, 2))


def test_degiorgi_geometric_bound(small):
    grid, _ = small
    u = RadialProfile.from_function(grid, lambda r: 3 * gaussian(r / 2))
    r_exp = 4.0
    norm = lp_norm(u.values, grid, r_exp)
    rho = max(1.0, u.values.max() / norm, 1.0 / norm)
    U = degiorgi_sequence(u, grid, r_exp, rho, 30)
    support = grid.weights.sum()
    k = np.arange(31)
    assert np.all(U[1:] <= support * 2.0 ** (-k[1:] * r_exp) * (1 + 1e-12))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rho=st.floats(1.0, 5.0))
def test_degiorgi_nonincreasing(small, seed, rho):
    grid, _ = small
    u = np.abs(np.random.default_rng(seed).normal(size=grid.size)) + 0.1
    U = degiorgi_sequence(RadialProfile(grid, u), grid, 3.0, rho * max(1, 1 / lp_norm(u, grid, 3.0)), 20)
    assert np.all(np.diff(U) <= 0)


def test_degiorgi_ground_state(ground_state_512, newton_params):
    u, grid = ground_state_512.profile, ground_state_512.profile.grid
    norm = lp_norm(u.values, grid, 4.0)
    rho = max(1.0, u.values.max() / norm)
    assert rho >= 1.0 / norm
    U = degiorgi_sequence(u, grid, 4.0, rho, 50, newton_params)
    assert np.all(np.diff(U) <= 0) and U[50] < 1e-12


# --- decay ---------------------------------------------------------------------

def test_decay_exact_exponential():
    grid = build_grid(20.0, 400, 3)
    fit = decay_fit(RadialProfile.from_function(grid, lambda r: 2 * np.exp(-3 * r)), grid, (2, 8))
    assert fit.rate == pytest.approx(3, rel=1e-10)
    assert fit.amplitude == pytest.approx(2, rel=1e-8)
    assert abs(fit.r_squared - 1) < 1e-8


def test_decay_power_law_flagged():
    grid = build_grid(20.0, 400, 3)
    fit = decay_fit(RadialProfile.from_function(grid, lambda r: r**-2.0), grid, (5, 10))
    assert fit.r_squared < 0.995


def test_decay_errors():
    grid = build_grid(20.0, 200, 3)
    with pytest.raises(ValueError, match="positive"):
        decay_fit(RadialProfile.from_function(grid, lambda r: np.cos(r)), grid, (2, 8))
    with pytest.raises(ValueError, match="truncation"):
        decay_fit(RadialProfile.from_function(grid, gaussian), grid, (5, 19))
    with pytest.raises(ValueError):
        decay_fit(RadialProfile.from_function(grid, gaussian), grid, (5, 5.01))


def test_decay_ground_state(ground_state_512):
    fit = decay_fit(ground_state_512.profile, ground_state_512.profile.grid, (8, 14))
    assert fit.r_squared > 0.99 and fit.rate > 0.5


# --- HLS scaling ---------------------------------------------------------------

def test_hls_gaussian_invariance():
    r = Fraction(6, 5)
    recs = hls_scaling_check(gaussian, gaussian, 1, r, r, [1, 0.5, 2, 4], M=128)
    q1 = recs[0].ratio
    assert all(abs(x.ratio / q1 - 1) < 1e-6 for x in recs)
    assert recs[0].lam == 1.0


def test_hls_bump_invariance_other_exponents():
    def bump(x):
        return np.where(x < 1, (1 - np.asarray(x) ** 2) ** 3, 0.0)

    # N = 3, mu = 2: 1/r + 1/t = 4/3
    recs = hls_scaling_check(bump, gaussian, 2, Fraction(2), Fraction(6, 5), [1, 3], M=96, R=4.0)
    assert abs(recs[1].ratio / recs[0].ratio - 1) < 1e-6


def test_hls_degenerate_and_errors():
    recs = hls_scaling_check(lambda r: 0 * r, gaussian, 1, Fraction(6, 5), Fraction(6, 5), [1], M=64)
    assert recs[0].degenerate and recs[0].ratio is None and recs[0].bilinear == 0
    with pytest.raises(ValueError, match="violate"):
        hls_scaling_check(gaussian, gaussian, 1, 2, 2, [1], M=64)
    with pytest.raises(ValueError):
        hls_scaling_check(gaussian, gaussian, 3, 2, 2, [1], M=64)
    assert math.isclose(1 / 1.2 + 1 / 3 + 1 / 1.2, 2.0)
    hls_scaling_check(gaussian, gaussian, 1.0, 1.2, 1.2, [1], M=64)
