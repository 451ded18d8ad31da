"""Low-rank thin plate spline basis and the orthonormal loading curves built on it."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import gammainc, gammaincinv

from .data import NumericalError, ValidationError

LAMBDA_FLOOR = 1e-8
D = 1  # dimension of the index set


@dataclass(frozen=True)
class SplineBasis:
    B: np.ndarray
    Omega: np.ndarray
    knots: np.ndarray
    null_dim: int = D + 1

    @property
    def L(self) -> int:
        return self.B.shape[1]


@dataclass
class BasisState:
    Psi: np.ndarray  # (L, K)
    F: np.ndarray  # (m, K)
    lambda_f: np.ndarray  # (K,)

    def copy(self) -> "BasisState":
        return BasisState(self.Psi.copy(), self.F.copy(), self.lambda_f.copy())


def default_num_knots(m: int) -> int:
    return min(math.ceil(m / 4), 35)


def build_lrtps(tau, num_knots: int | None = None) -> SplineBasis:
    """Cubic low-rank thin plate spline basis on the grid ``tau``.

    Columns are ``[1, t, Z]`` with ``t`` the grid rescaled to [0, 1] and ``Z``
    the radial block ``|t - knot|^3`` premultiplied by the inverse square root
    of the knot kernel matrix, so the roughness penalty is the identity on the
    radial coefficients and zero on the linear part.
    """
    tau = np.asarray(tau, dtype=float)
    m = tau.size
    if num_knots is None:
        num_knots = default_num_knots(m)
    if num_knots < 1:
        raise ValidationError("num_knots must be positive")
    if m < num_knots + 2:
        raise ValidationError(f"too few grid points: m={m} < num_knots + 2 = {num_knots + 2}")
    if np.any(np.diff(tau) <= 0):
        raise ValidationError("tau must be strictly increasing")
    t = (tau - tau[0]) / (tau[-1] - tau[0])
    probs = np.arange(1, num_knots + 1) / (num_knots + 1)
    knots = np.quantile(t, probs)
    if np.any(np.diff(knots) <= 1e-12):
        raise ValidationError("duplicate knots")

    Z_K = np.abs(t[:, None] - knots[None, :]) ** 3
    Omega_K = np.abs(knots[:, None] - knots[None, :]) ** 3
    U, d, Vt = np.linalg.svd(Omega_K)
    # Z = Z_K (Omega_K^{1/2})^{-T} with Omega_K^{1/2} = U diag(sqrt d) V'
    Z = Z_K @ (U / np.sqrt(d)) @ Vt
    B = np.column_stack([np.ones(m), t, Z])
    if np.linalg.matrix_rank(B) < B.shape[1]:
        raise ValidationError("spline design is rank deficient; use fewer knots")
    L = B.shape[1]
    Omega = np.diag(np.r_[np.zeros(D + 1), np.ones(L - D - 1)])
    B.setflags(write=False)
    Omega.setflags(write=False)
    return SplineBasis(B=B, Omega=Omega, knots=knots)


def fix_signs(F: np.ndarray) -> np.ndarray:
    """Signs that make each column's largest-magnitude entry positive."""
    idx = np.argmax(np.abs(F), axis=0)
    s = np.sign(F[idx, np.arange(F.shape[1])])
    s[s == 0] = 1.0
    return s


def _orthonormalize(spline: SplineBasis, Psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    F = spline.B @ Psi
    Q, R = np.linalg.qr(F)
    if np.any(np.abs(np.diag(R)) < 1e-10 * max(1.0, np.abs(R).max())):
        raise ValidationError("initial loadings are rank deficient; reduce K")
    Psi = linalg.solve_triangular(R, Psi.T, trans="T").T
    return Psi, Q


def initial_basis(Y_filled: np.ndarray, spline: SplineBasis, K: int, design: np.ndarray | None = None) -> BasisState:
    """Starting loadings from the leading singular vectors of the curve residuals.

    Residuals are taken after a pointwise least-squares fit on ``design``
    (intercept included) when it has at most n/2 columns, otherwise after
    removing the mean curve. The singular vectors are projected onto the
    spline span and orthonormalized.
    """
    if K > spline.L:
        raise ValidationError(f"K={K} exceeds the spline dimension {spline.L}")
    Y = np.asarray(Y_filled, dtype=float)
    n = Y.shape[0]
    if design is not None and design.shape[1] <= n / 2:
        coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
        R = Y - design @ coef
    else:
        R = Y - Y.mean(axis=0)
    U, _, _ = np.linalg.svd(R.T, full_matrices=False)
    V = U[:, :K]
    if V.shape[1] < K:
        raise ValidationError(f"K={K} exceeds the number of curves")
    Psi, _, _, _ = np.linalg.lstsq(spline.B, V, rcond=None)
    Psi, F = _orthonormalize(spline, Psi)
    s = fix_signs(F)
    return BasisState(Psi * s, F * s, np.ones(K))


def roughness_ordered_basis(spline: SplineBasis, K: int) -> BasisState:
    """Orthonormal spline basis ordered from smoothest to roughest; first K columns.

    Used as the fixed loading matrix when the loadings are not resampled.
    """
    if K > spline.L:
        raise ValidationError(f"K={K} exceeds the spline dimension {spline.L}")
    Q, R = np.linalg.qr(spline.B)
    Rinv = linalg.solve_triangular(R, np.eye(spline.L))
    P = Rinv.T @ spline.Omega @ Rinv
    _, V = np.linalg.eigh((P + P.T) / 2)
    F = Q @ V[:, :K]
    Psi = Rinv @ V[:, :K]
    s = fix_signs(F)
    return BasisState(Psi * s, F * s, np.ones(K))


def sample_lambda_f(psi_k: np.ndarray, Omega: np.ndarray, rng: np.random.Generator):
    """Draw the smoothing precision of one loading curve.

    Gamma((L - D + 2)/2, psi' Omega psi / 2) truncated to (1e-8, inf). Returns
    ``(value, flagged)`` where ``flagged`` marks the zero-roughness fallback.
    """
    L = psi_k.size
    shape = (L - D + 1 + 1) / 2
    rate = float(psi_k @ Omega @ psi_k) / 2
    flagged = False
    if not rate > 0:
        rate, flagged = 1e-10, True
    return truncated_gamma(shape, rate, LAMBDA_FLOOR, rng), flagged


def truncated_gamma(shape: float, rate: float, lower: float, rng: np.random.Generator) -> float:
    """Gamma(shape, rate) restricted to (lower, inf).

    One unconstrained draw is accepted if it clears the bound; otherwise the
    draw comes from the inverse CDF of the truncated law. The mixture is exact.
    """
    x = rng.gamma(shape, 1.0 / rate)
    if x > lower:
        return x
    p0 = gammainc(shape, lower * rate)
    u = p0 + (1.0 - p0) * rng.random()
    x = gammaincinv(shape, min(u, 1.0 - 1e-16)) / rate
    return max(x, np.nextafter(lower, np.inf))


def constrained_normal_draw(Q: np.ndarray, ell: np.ndarray, C: np.ndarray | None, z: np.ndarray):
    """Draw from N(Q^{-1} ell, Q^{-1}) conditioned on ``C x = 0`` given standard normal ``z``.

    Cholesky of Q, forward/back substitution for the unconstrained draw, then
    the conditioning-by-kriging correction. Returns the constrained draw.
    """
    try:
        Lq = linalg.cholesky(Q, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NumericalError("loading precision is not positive definite") from None
    lbar = linalg.solve_triangular(Lq, ell, lower=True, check_finite=False)
    x0 = linalg.solve_triangular(Lq, lbar + z, lower=True, trans="T", check_finite=False)
    if C is None or C.shape[0] == 0:
        return x0
    Cbar = linalg.solve_triangular(Lq, C.T, lower=True, check_finite=False)
    Ctil = linalg.solve_triangular(Lq, Cbar, lower=True, trans="T", check_finite=False)
    G = C @ Ctil
    try:
        corr = np.linalg.solve(G, C @ x0)
    except np.linalg.LinAlgError:
        raise NumericalError("orthogonality constraints are singular (loadings collapsed)") from None
    return x0 - Ctil @ corr


def sample_basis_column(
    k: int,
    state: BasisState,
    beta: np.ndarray,
    BtY: np.ndarray,
    spline: SplineBasis,
    BtB: np.ndarray,
    sigma_eps: float,
    rng: np.random.Generator,
) -> float:
    """Resample loading curve ``k`` in place; rescales ``beta[k]`` to compensate.

    ``BtY`` is ``B' Y'`` (L x n) for the current completed data. Returns the
    norm used in the unit-length rescale.
    """
    K = state.F.shape[1]
    others = [j for j in range(K) if j != k]
    prec = 1.0 / sigma_eps**2
    bk = beta[k]
    Q = prec * BtB * float(bk @ bk) + state.lambda_f[k] * spline.Omega
    resid = BtY @ bk
    if others:
        resid = resid - BtB @ (state.Psi[:, others] @ (beta[others] @ bk))
    ell = prec * resid
    C = (state.F[:, others].T @ spline.B) if others else None
    z = rng.standard_normal(spline.L)
    psi_star = constrained_normal_draw(Q, ell, C, z)
    f_star = spline.B @ psi_star
    norm = float(np.linalg.norm(f_star))
    if not norm > 0:
        raise NumericalError(f"loading curve {k} collapsed to zero")
    state.Psi[:, k] = psi_star / norm
    state.F[:, k] = f_star / norm
    beta[k] *= norm
    return norm
