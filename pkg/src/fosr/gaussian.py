"""Exact Gaussian draws for the regression block.

Both samplers target N(Q^{-1} l, Q^{-1}) with Q = X' Sy^{-1} X + Sa^{-1} and
l = X' Sy^{-1} y, for diagonal Sy (n) and Sa (p + 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import NumericalError, ValidationError

JITTER = 1e-10


@dataclass(frozen=True)
class RegressionDrawProblem:
    X: np.ndarray  # (n, p + 1), intercept column first
    Sigma_y_diag: np.ndarray  # (n,)
    Sigma_alpha_diag: np.ndarray  # (p + 1,)
    y: np.ndarray  # (n,)

    def validate(self) -> None:
        n, q = self.X.shape
        if self.Sigma_y_diag.shape != (n,) or self.y.shape != (n,) or self.Sigma_alpha_diag.shape != (q,):
            raise ValidationError("regression problem dimensions are inconsistent")
        for name in ("Sigma_y_diag", "Sigma_alpha_diag"):
            v = getattr(self, name)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValidationError(f"{name} must be strictly positive and finite")

    def precision(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (Q, l); used by the Cholesky sampler and by test oracles."""
        Xw = self.X / self.Sigma_y_diag[:, None]
        Q = self.X.T @ Xw
        Q[np.diag_indices_from(Q)] += 1.0 / self.Sigma_alpha_diag
        return Q, Xw.T @ self.y


def _cholesky(Q: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(Q, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    Qj = Q.copy()
    Qj[np.diag_indices_from(Qj)] += JITTER * np.mean(np.diag(Q))
    try:
        return linalg.cholesky(Qj, lower=True, check_finite=False)
    except linalg.LinAlgError:
        piv = np.min(np.linalg.eigvalsh(Q))
        raise NumericalError(f"regression precision is singular (smallest eigenvalue {piv:.3e})") from None


def sample_gaussian_cholesky(prob: RegressionDrawProblem, rng: np.random.Generator) -> np.ndarray:
    """Cholesky-based draw, O(p^3); preferred when p + 1 <= n."""
    Q, ell = prob.precision()
    delta = rng.standard_normal(Q.shape[0])
    Lq = _cholesky(Q)
    lbar = linalg.solve_triangular(Lq, ell, lower=True, check_finite=False)
    return linalg.solve_triangular(Lq, lbar + delta, lower=True, trans="T", check_finite=False)


def sample_gaussian_fast(prob: RegressionDrawProblem, rng: np.random.Generator) -> np.ndarray:
    """Data-augmentation draw, O(n^2 p); preferred when p + 1 > n."""
    Sa = prob.Sigma_alpha_diag
    u = np.sqrt(Sa) * rng.standard_normal(Sa.size)
    delta = rng.standard_normal(prob.y.size)
    s = 1.0 / np.sqrt(prob.Sigma_y_diag)
    Xk = prob.X * s[:, None]
    v = Xk @ u + delta
    XS = Xk * Sa
    M = XS @ Xk.T
    M[np.diag_indices_from(M)] += 1.0
    try:
        w = linalg.solve(M, s * prob.y - v, assume_a="pos", check_finite=False)
    except linalg.LinAlgError:
        raise NumericalError("augmented n x n system could not be solved") from None
    return u + XS.T @ w


def sample_regression(prob: RegressionDrawProblem, rng: np.random.Generator) -> np.ndarray:
    """Dispatch: data augmentation when p + 1 > n, Cholesky otherwise."""
    n, q = prob.X.shape
    if q > n:
        return sample_gaussian_fast(prob, rng)
    return sample_gaussian_cholesky(prob, rng)
