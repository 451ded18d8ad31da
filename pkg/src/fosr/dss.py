"""Decoupled shrinkage and selection: an adaptive group lasso path fitted to the
posterior-mean predictions, summarized through posterior variance-explained
ratios."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DrawArchive, ValidationError

log = logging.getLogger(__name__)

WEIGHT_CAP = 1e12
TOL = 1e-8
MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class DssProblem:
    mu_bar: np.ndarray  # (K,)
    A_bar: np.ndarray  # (K, p)
    F_bar: np.ndarray  # (m, K)
    X_tilde: np.ndarray  # (n, p)
    weights: np.ndarray  # (p,)

    @property
    def n(self) -> int:
        return self.X_tilde.shape[0]

    @property
    def m(self) -> int:
        return self.F_bar.shape[0]

    @property
    def scale(self) -> float:
        """Factor 2/(nm) on the gradient of the squared-error term."""
        return 2.0 / (self.n * self.m)

    def responses(self) -> np.ndarray:
        """Posterior-mean predictions mu_bar + A_bar x_i, shape (n, K)."""
        return self.mu_bar[None, :] + self.X_tilde @ self.A_bar.T


def adaptive_weights(A_bar: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(A_bar, axis=0)
    with np.errstate(divide="ignore"):
        w = np.where(norms < 1e-12, WEIGHT_CAP, 1.0 / np.maximum(norms, 1e-300))
    return np.minimum(w, WEIGHT_CAP)


def build_dss_problem(archive: DrawArchive, X_tilde: np.ndarray) -> DssProblem:
    """Posterior means from the archive; ``X_tilde`` must be on the archive's
    (standardized) design scale."""
    X_tilde = np.asarray(X_tilde, dtype=float)
    A_bar = archive.A.mean(axis=0)
    if X_tilde.ndim != 2 or X_tilde.shape[1] != A_bar.shape[1]:
        raise ValidationError("prediction design does not match the number of predictors")
    return DssProblem(
        mu_bar=archive.mu.mean(axis=0),
        A_bar=A_bar,
        F_bar=archive.F.mean(axis=0),
        X_tilde=X_tilde,
        weights=adaptive_weights(A_bar),
    )


def reduced_loss(prob: DssProblem, delta0: np.ndarray, Delta: np.ndarray) -> float:
    """Squared-error part of the penalized objective, (1/nm) sum_i ||R_i - delta0 - Delta x_i||^2."""
    r = prob.responses() - delta0[None, :] - prob.X_tilde @ Delta.T
    return float(np.sum(r**2) / (prob.n * prob.m))


@dataclass
class _Gram:
    xbar: np.ndarray
    G: np.ndarray  # centered X'X
    XtR: np.ndarray  # centered X'R, (p, K)

    @classmethod
    def of(cls, prob: DssProblem) -> "_Gram":
        xbar = prob.X_tilde.mean(axis=0)
        Xc = prob.X_tilde - xbar
        G = Xc.T @ Xc
        return cls(xbar, G, G @ prob.A_bar.T)


def critical_lambda(prob: DssProblem) -> float:
    """Smallest penalty at which the all-zero solution satisfies the optimality conditions."""
    g = _Gram.of(prob)
    grad = prob.scale * np.linalg.norm(g.XtR, axis=1)
    return float(np.max(grad / prob.weights))


@dataclass
class GroupLassoFit:
    lam: float
    delta0: np.ndarray  # (K,)
    Delta: np.ndarray  # (K, p)
    converged: bool
    sweeps: int
    kkt: float

    @property
    def support(self) -> np.ndarray:
        return np.any(self.Delta != 0, axis=0)

    @property
    def model_size(self) -> int:
        return int(self.support.sum())


def _kkt_residual(c, lam, w, XtR, G, D) -> float:
    S = c * (XtR - G @ D)  # negative gradient, (p, K)
    norms = np.linalg.norm(D, axis=1)
    active = norms > 0
    res = np.zeros(D.shape[0])
    if active.any():
        res[active] = np.linalg.norm(
            -S[active] + lam * w[active, None] * D[active] / norms[active, None], axis=1)
    inactive = ~active
    res[inactive] = np.maximum(0.0, np.linalg.norm(S[inactive], axis=1) - lam * w[inactive])
    return float(res.max()) if res.size else 0.0


def solve_group_lasso(prob: DssProblem, lam: float, init: np.ndarray | None = None,
                      tol: float = TOL, max_sweeps: int = MAX_SWEEPS, _gram: _Gram | None = None) -> GroupLassoFit:
    """Cyclic block coordinate descent for

        (1/nm) sum_i ||R_i - delta0 - Delta x_i||^2 + lam sum_j w_j ||Delta_j||_2

    Each predictor's K-vector has a closed-form group soft-threshold update;
    the intercept is profiled out by centering. ``init`` (K x p) warm-starts.
    """
    if lam < 0:
        raise ValidationError("penalty must be non-negative")
    g = _gram or _Gram.of(prob)
    c = prob.scale
    w = prob.weights
    G, XtR = g.G, g.XtR
    p, K = XtR.shape
    D = np.zeros((p, K)) if init is None else np.array(init, dtype=float).T.copy()
    GD = G @ D
    diag = np.diag(G)
    converged, sweeps, prev_change = False, 0, np.inf
    for sweeps in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            if diag[j] <= 0:
                continue
            old = D[j]
            s = c * (XtR[j] - GD[j] + diag[j] * old)
            ns = np.sqrt(s @ s)
            thr = lam * w[j]
            if ns <= thr * (1 + 1e-12):  # ties at the critical penalty stay at zero
                new = np.zeros(K)
            else:
                new = (1.0 - thr / ns) * s / (c * diag[j])
            d = new - old
            change = np.abs(d).max()
            if change > 0:
                D[j] = new
                GD += np.outer(G[:, j], d)
                if change > max_change:
                    max_change = change
        # stop once the step, and the geometric tail it implies, are below tol
        rate = max_change / prev_change if prev_change > 0 else 0.0
        prev_change = max_change
        if max_change < tol and (rate >= 1 or max_change * rate / (1 - rate) < tol):
            converged = True
            break
    GD = G @ D
    Delta = D.T
    R_mean = prob.mu_bar + prob.A_bar @ g.xbar
    delta0 = R_mean - Delta @ g.xbar
    kkt = _kkt_residual(c, lam, w, XtR, G, D)
    if not converged:
        log.warning("group lasso did not converge at lambda=%g (KKT residual %.2e)", lam, kkt)
    return GroupLassoFit(lam=float(lam), delta0=delta0, Delta=Delta, converged=converged, sweeps=sweeps, kkt=kkt)


def _fitted_sq(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """||A_s X'||_F^2 for every draw s; A is (S, K, p)."""
    return np.sum(np.einsum("skp,np->snk", A, X) ** 2, axis=(1, 2))


def _noise_total(archive: DrawArchive, n: int) -> np.ndarray:
    m = archive.F.shape[1]
    return n * m * archive.sigma_eps**2 + np.sum(archive.sigma_gamma**2, axis=(1, 2))


def rho2_draws(archive: DrawArchive, X_tilde: np.ndarray) -> np.ndarray:
    """Posterior draws of the proportion of variability explained by the predictors."""
    X_tilde = np.asarray(X_tilde, dtype=float)
    sig = _fitted_sq(archive.A, X_tilde)
    return sig / (sig + _noise_total(archive, X_tilde.shape[0]))


def rho2_lambda_draws(archive: DrawArchive, Delta: np.ndarray, X_tilde: np.ndarray) -> np.ndarray:
    """As :func:`rho2_draws` with the sparsified model's discrepancy added to the total."""
    X_tilde = np.asarray(X_tilde, dtype=float)
    sig = _fitted_sq(archive.A, X_tilde)
    disc = _fitted_sq(archive.A - np.asarray(Delta)[None], X_tilde)
    return sig / (sig + _noise_total(archive, X_tilde.shape[0]) + disc)


def _summ(x: np.ndarray) -> dict:
    q = np.quantile(x, [0.025, 0.05, 0.95, 0.975])
    return {"mean": float(x.mean()), "lo95": q[0], "lo90": q[1], "hi90": q[2], "hi95": q[3]}


@dataclass
class DssPath:
    lambda_grid: np.ndarray
    fits: list
    rho2_lambda: list  # per-lambda summary dicts
    rho2_full: dict
    selected_index: int
    flags: dict = field(default_factory=dict)

    @property
    def model_size(self) -> np.ndarray:
        return np.array([f.model_size for f in self.fits])

    @property
    def Delta_hat(self) -> list:
        return [f.Delta for f in self.fits]

    @property
    def delta0_hat(self) -> list:
        return [f.delta0 for f in self.fits]

    @property
    def selected(self) -> GroupLassoFit:
        return self.fits[self.selected_index]

    def write_csv(self, path) -> Path:
        """Selection summary plot data plus a final full-model reference row."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model_size", "lambda", "rho2_mean", "rho2_lo90", "rho2_hi90", "rho2_lo95", "rho2_hi95"])
            for fit, s in zip(self.fits, self.rho2_lambda):
                w.writerow([fit.model_size, repr(fit.lam), repr(s["mean"]), repr(float(s["lo90"])),
                            repr(float(s["hi90"])), repr(float(s["lo95"])), repr(float(s["hi95"]))])
            s = self.rho2_full
            w.writerow(["full", "", repr(s["mean"]), repr(float(s["lo90"])), repr(float(s["hi90"])),
                        repr(float(s["lo95"])), repr(float(s["hi95"]))])
        return path


def lambda_grid(prob: DssProblem, grid_size: int = 100, decades: float = 4.0) -> np.ndarray:
    return critical_lambda(prob) * np.logspace(0.0, -decades, grid_size)


def select_index(model_size: np.ndarray, rho2_lambda: list, rho2_mean: float):
    """Smallest model whose 90% interval for the sparsified ratio contains the
    full-model posterior mean; the first such point in grid order on ties.

    Returns ``(index, found)``; without a match the last (least penalized)
    point is returned.
    """
    ok = [i for i, s in enumerate(rho2_lambda) if s["lo90"] <= rho2_mean <= s["hi90"]]
    if not ok:
        return len(rho2_lambda) - 1, False
    best = min(model_size[i] for i in ok)
    return next(i for i in ok if model_size[i] == best), True


def run_selection(prob: DssProblem, archive: DrawArchive, grid_size: int = 100, decades: float = 4.0) -> DssPath:
    """Warm-started path from the critical penalty downwards, with posterior
    summaries of the variance-explained ratio at each point."""
    grid = lambda_grid(prob, grid_size, decades)
    gram = _Gram.of(prob)
    fits, summaries = [], []
    init = None
    for lam in grid:
        fit = solve_group_lasso(prob, lam, init=init, _gram=gram)
        init = fit.Delta
        fits.append(fit)
        summaries.append(_summ(rho2_lambda_draws(archive, fit.Delta, prob.X_tilde)))
    full = _summ(rho2_draws(archive, prob.X_tilde))
    sizes = np.array([f.model_size for f in fits])
    idx, found = select_index(sizes, summaries, full["mean"])
    flags = {"no_model_met_rule": not found,
             "nonconverged": int(sum(not f.converged for f in fits))}
    return DssPath(lambda_grid=grid, fits=fits, rho2_lambda=summaries, rho2_full=full,
                   selected_index=idx, flags=flags)


def dss_coefficients(prob: DssProblem, Delta: np.ndarray, scale: np.ndarray | None = None) -> np.ndarray:
    """Sparse coefficient functions ``F_bar Delta`` as (p, m), optionally mapped
    back to the raw predictor scale by dividing by ``scale``."""
    out = (prob.F_bar @ Delta).T
    if scale is not None:
        out = out / np.asarray(scale)[:, None]
    return out
