"""Synthetic function-on-scalars data with known truth, and scoring against it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FunctionalDataset, ValidationError

K_STAR = 4
PREDICTOR_CORR = 0.75


@dataclass(frozen=True)
class SimTruth:
    F_star: np.ndarray  # (m, K*)
    A_star: np.ndarray  # (K*, p)
    mu_star: np.ndarray  # (K*,)
    Gamma_star: np.ndarray  # (K*, n)
    sigma_star: float
    support: np.ndarray  # (p,) bool
    Y_star: np.ndarray  # (n, m)
    rsnr: float

    @property
    def alpha_tilde(self) -> np.ndarray:
        """True coefficient functions on the grid, shape (p, m)."""
        return (self.F_star @ self.A_star).T

    def to_json_dict(self) -> dict:
        return {
            "F_star": self.F_star.tolist(),
            "A_star": self.A_star.tolist(),
            "mu_star": self.mu_star.tolist(),
            "Gamma_star": self.Gamma_star.tolist(),
            "sigma_star": self.sigma_star,
            "support": self.support.astype(int).tolist(),
            "Y_star": self.Y_star.tolist(),
            "rsnr": self.rsnr,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SimTruth":
        return cls(
            F_star=np.array(d["F_star"]), A_star=np.array(d["A_star"]), mu_star=np.array(d["mu_star"]),
            Gamma_star=np.array(d["Gamma_star"]), sigma_star=float(d["sigma_star"]),
            support=np.array(d["support"], dtype=bool), Y_star=np.array(d["Y_star"]), rsnr=float(d["rsnr"]),
        )


def orthonormal_polynomials(tau: np.ndarray, degree: int) -> np.ndarray:
    """Discrete orthonormal polynomials of degrees 0..degree on the grid (m x (degree+1))."""
    t = (tau - tau.mean()) / (tau.max() - tau.min())
    V = np.vander(t, degree + 1, increasing=True)
    Q, R = np.linalg.qr(V)
    return Q * np.sign(np.diag(R))


def true_loadings(tau: np.ndarray, k_star: int = K_STAR) -> np.ndarray:
    """Constant 1/sqrt(m) first curve, then orthonormal polynomials of degree k for k = 2..K*."""
    P = orthonormal_polynomials(tau, k_star)
    return P[:, [0] + list(range(2, k_star + 1))]


def nonnull_indices(p: int, p1: int) -> np.ndarray:
    """Evenly spaced 0-based indices of the non-null predictors."""
    return np.unique(np.round(np.linspace(1, p, p1)).astype(int)) - 1


def _truncated_poisson(rng, lam, lo, hi):
    while True:
        v = rng.poisson(lam)
        if lo <= v <= hi:
            return v


def generate_dataset(n=100, m=30, p=20, p1=10, rsnr=5.0, seed=0, missing_frac=0.0, k_star=K_STAR):
    """Draw one dataset and its truth.

    Predictors are Gaussian with AR(0.75)-type correlation; each non-null
    predictor loads on a uniformly chosen subset of the true curves whose size
    is Poisson(1) truncated to [1, K*]. ``missing_frac`` masks that fraction of
    cells at random (every curve keeps at least one observation).
    """
    if p < p1:
        raise ValidationError("p must be at least p1")
    if not 0 <= missing_frac < 1:
        raise ValidationError("missing_frac must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    tau = np.linspace(0.0, 1.0, m)
    F = true_loadings(tau, k_star)
    idx = np.arange(p)
    cov = PREDICTOR_CORR ** np.abs(idx[:, None] - idx[None, :])
    X = rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")

    support = np.zeros(p, dtype=bool)
    support[nonnull_indices(p, p1)] = True
    ks = np.arange(1, k_star + 1)
    A = np.zeros((k_star, p))
    for j in np.flatnonzero(support):
        kj = _truncated_poisson(rng, 1.0, 1, k_star)
        chosen = rng.choice(k_star, size=kj, replace=False)
        A[chosen, j] = rng.normal(0.0, 1.0 / ks[chosen])
    mu = 1.0 / ks
    G = rng.normal(0.0, 1.0, size=(k_star, n)) / ks[:, None]
    beta = mu[:, None] + A @ X.T + G
    Y_star = beta.T @ F.T
    sigma = float(np.std(Y_star, ddof=1) / rsnr)
    Y = Y_star + sigma * rng.standard_normal((n, m))

    observed = np.ones((n, m), dtype=bool)
    if missing_frac > 0:
        n_miss = int(round(missing_frac * n * m))
        cells = rng.choice(n * m, size=n_miss, replace=False)
        observed.ravel()[cells] = False
        for i in np.flatnonzero(~observed.any(axis=1)):
            observed[i, rng.integers(m)] = True
    data = FunctionalDataset(Y=Y, observed=observed, tau=tau, X=X,
                             predictor_names=tuple(f"x{j + 1}" for j in range(p)))
    truth = SimTruth(F_star=F, A_star=A, mu_star=mu, Gamma_star=G, sigma_star=sigma,
                     support=support, Y_star=Y_star, rsnr=float(rsnr))
    return data, truth


def rmse(estimate: np.ndarray, truth) -> float:
    """Root mean squared error over predictors and grid points; ``truth`` is a
    SimTruth or a (p, m) array."""
    target = truth.alpha_tilde if isinstance(truth, SimTruth) else np.asarray(truth)
    return float(np.sqrt(np.mean((np.asarray(estimate) - target) ** 2)))


def mciw_and_coverage(lo: np.ndarray, hi: np.ndarray, truth) -> tuple[float, float]:
    """Mean interval width and empirical coverage of pointwise intervals."""
    target = truth.alpha_tilde if isinstance(truth, SimTruth) else np.asarray(truth)
    lo, hi = np.asarray(lo), np.asarray(hi)
    return float(np.mean(hi - lo)), float(np.mean((lo <= target) & (target <= hi)))


def roc_points(selections, support) -> list[tuple[int, float, float]]:
    """(model_size, fpr, tpr) for each selection, one boolean vector per point."""
    support = np.asarray(support, dtype=bool)
    n_pos, n_neg = support.sum(), (~support).sum()
    out = []
    for sel in selections:
        sel = np.asarray(sel, dtype=bool)
        tpr = (sel & support).sum() / n_pos if n_pos else 0.0
        fpr = (sel & ~support).sum() / n_neg if n_neg else 0.0
        out.append((int(sel.sum()), float(fpr), float(tpr)))
    return out


def nested_selections(scores) -> list[np.ndarray]:
    """Selections from thresholding scores (higher = stronger) at every distinct value.

    Tied scores enter together, so ties produce a single point.
    """
    scores = np.asarray(scores, dtype=float)
    out = [np.zeros(scores.size, dtype=bool)]
    for thr in np.unique(scores)[::-1]:
        out.append(scores >= thr)
    return out


def average_roc(per_replicate: list[list[tuple[int, float, float]]]) -> list[tuple[int, float, float]]:
    """Average (fpr, tpr) across replicates at matched model size."""
    acc: dict[int, list] = {}
    for points in per_replicate:
        seen = set()
        for size, fpr, tpr in points:
            if size in seen:
                continue
            seen.add(size)
            acc.setdefault(size, []).append((fpr, tpr))
    return [(s, float(np.mean([v[0] for v in acc[s]])), float(np.mean([v[1] for v in acc[s]])))
            for s in sorted(acc)]


def roc_area(points) -> float:
    """Trapezoidal area under (fpr, tpr) points, anchored at (0, 0) and (1, 1).

    Points are ordered by fpr then tpr, so nested selections trace an exact
    staircase and tied entries give a diagonal segment.
    """
    pts = sorted({(0.0, 0.0), (1.0, 1.0)} | {(float(f), float(t)) for _, f, t in points})
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    return float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2))
