import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fosr.basis import (
    LAMBDA_FLOOR,
    BasisState,
    build_lrtps,
    constrained_normal_draw,
    default_num_knots,
    fix_signs,
    initial_basis,
    roughness_ordered_basis,
    sample_basis_column,
    sample_lambda_f,
    truncated_gamma,
)
from fosr.data import ValidationError


def test_dimensions_and_null_space():
    spline = build_lrtps(np.linspace(0, 1, 30), num_knots=8)
    assert spline.B.shape == (30, 10)
    assert spline.Omega.shape == (10, 10)
    ev = np.linalg.eigvalsh(spline.Omega)
    assert np.sum(np.abs(ev) < 1e-10) == 2
    np.testing.assert_array_equal(spline.B[:, 0], np.ones(30))


def test_default_knots():
    assert default_num_knots(30) == 8
    assert default_num_knots(1000) == 35
    assert build_lrtps(np.linspace(0, 1, 30)).L == 10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_penalty_psd_on_random_grids(seed):
    r = np.random.default_rng(seed)
    m = int(r.integers(12, 60))
    tau = np.sort(r.uniform(0, 5, m))
    if np.min(np.diff(tau)) < 1e-6:
        return
    spline = build_lrtps(tau)
    assert np.linalg.eigvalsh(spline.Omega).min() >= -1e-10


def test_penalty_matches_radial_energy(rng):
    # psi_Z' psi_Z equals u' |Omega_K| u where Z psi_Z = Z_K u (raw cubic radial basis)
    tau = np.linspace(0, 1, 40)
    spline = build_lrtps(tau, num_knots=6)
    t = (tau - tau[0]) / (tau[-1] - tau[0])
    ZK = np.abs(t[:, None] - spline.knots[None, :]) ** 3
    OK = np.abs(spline.knots[:, None] - spline.knots[None, :]) ** 3
    w, E = np.linalg.eigh(OK)
    absOK = (E * np.abs(w)) @ E.T
    for _ in range(5):
        psi = rng.normal(size=spline.L)
        u, *_ = np.linalg.lstsq(ZK, spline.B[:, 2:] @ psi[2:], rcond=None)
        np.testing.assert_allclose(psi @ spline.Omega @ psi, u @ absOK @ u, rtol=1e-8)


def test_too_few_points():
    with pytest.raises(ValidationError):
        build_lrtps(np.linspace(0, 1, 6), num_knots=8)


def test_fix_signs():
    F = np.array([[0.1, -0.9], [-0.5, 0.2]])
    np.testing.assert_array_equal(fix_signs(F), [-1.0, -1.0])


def _state(rng, m=25, K=3):
    spline = build_lrtps(np.linspace(0, 1, m))
    Y = rng.normal(size=(15, m)).cumsum(axis=1)
    return spline, initial_basis(Y, spline, K), Y


def test_initial_and_fixed_bases_orthonormal(rng):
    spline, state, _ = _state(rng)
    np.testing.assert_allclose(state.F.T @ state.F, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(spline.B @ state.Psi, state.F, atol=1e-12)
    fixed = roughness_ordered_basis(spline, 4)
    np.testing.assert_allclose(fixed.F.T @ fixed.F, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(spline.B @ fixed.Psi, fixed.F, atol=1e-12)
    # the two smoothest directions have zero roughness: they span the linear functions
    assert np.abs(fixed.Psi[:, :2].T @ spline.Omega @ fixed.Psi[:, :2]).max() < 1e-10


def test_column_update_orthonormal_and_rescale_invariant(rng):
    spline, state, Y = _state(rng)
    BtB = spline.B.T @ spline.B
    beta = state.F.T @ Y.T
    BtY = spline.B.T @ Y.T
    for k in range(3):
        before = beta[k].copy()
        norm = sample_basis_column(k, state, beta, BtY, spline, BtB, 0.3, rng)
        np.testing.assert_allclose(state.F.T @ state.F, np.eye(3), atol=1e-10)
        # B psi* beta_old == B psi beta_new
        np.testing.assert_allclose(np.outer(state.F[:, k] * norm, before), np.outer(state.F[:, k], beta[k]),
                                   atol=1e-12)


def test_unconstrained_draw_matches_dense_inverse(rng):
    L = 6
    M = rng.normal(size=(L, L))
    Q = M @ M.T + L * np.eye(L)
    ell = rng.normal(size=L)
    z = rng.normal(size=L)
    got = constrained_normal_draw(Q, ell, None, z)
    Lq = np.linalg.cholesky(Q)
    want = np.linalg.inv(Q) @ ell + np.linalg.inv(Lq.T) @ z
    np.testing.assert_allclose(got, want, atol=1e-8)


def test_constrained_draw_moments(rng):
    # conditioning-by-kriging gives the Gaussian conditioned on C x = 0
    L = 4
    M = rng.normal(size=(L, L))
    Q = M @ M.T + np.eye(L)
    ell = rng.normal(size=L)
    C = rng.normal(size=(1, L))
    S = np.linalg.inv(Q)
    mu = S @ ell
    G = S @ C.T @ np.linalg.inv(C @ S @ C.T)
    mean = mu - G @ (C @ mu)
    cov = S - G @ C @ S
    N = 40_000
    draws = np.array([constrained_normal_draw(Q, ell, C, rng.standard_normal(L)) for _ in range(N)])
    assert np.abs(draws @ C.T).max() < 1e-10
    se = np.sqrt(np.diag(cov) / N)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.05 * np.abs(cov).max())


def test_lambda_moments(rng):
    Omega = np.diag(np.r_[0.0, 0.0, np.ones(8)])
    psi = np.zeros(10)
    psi[2] = np.sqrt(2.0)  # psi' Omega psi = 2
    N = 100_000
    x = np.array([sample_lambda_f(psi, Omega, rng)[0] for _ in range(N)])
    assert abs(x.mean() - 5.5) < 3 * np.sqrt(5.5 / N)
    y = np.array([sample_lambda_f(psi * np.sqrt(2), Omega, rng)[0] for _ in range(N)])
    assert abs(y.mean() - 5.5 / 2) < 3 * np.sqrt(5.5 / 4 / N)


def test_lambda_zero_roughness_flagged(rng):
    Omega = np.diag(np.r_[0.0, 0.0, np.ones(3)])
    val, flagged = sample_lambda_f(np.array([1.0, 1.0, 0, 0, 0]), Omega, rng)
    assert flagged and val > LAMBDA_FLOOR


def test_truncated_gamma_bound_and_law(rng):
    # shape 0.5, rate 1e6 puts about 11% of the mass below the floor
    shape, rate = 0.5, 1e6
    x = np.array([truncated_gamma(shape, rate, LAMBDA_FLOOR, rng) for _ in range(1_000_000)])
    assert x.min() > LAMBDA_FLOOR
    g = stats.gamma(shape, scale=1 / rate)
    p0 = g.cdf(LAMBDA_FLOOR)
    cdf = lambda v: (g.cdf(v) - p0) / (1 - p0)
    assert stats.kstest(x[:100_000], cdf).pvalue > 1e-3


def test_basis_state_copy_is_independent(rng):
    _, state, _ = _state(rng)
    c = state.copy()
    c.F[0, 0] += 1
    assert isinstance(c, BasisState) and c.F[0, 0] != state.F[0, 0]
