"""Gibbs sampler for the function-on-scalars model with orthonormal loading curves."""
from __future__ import annotations

import logging
import sys
import time
from dataclasses import dataclass

import numpy as np

from .basis import (
    BasisState,
    build_lrtps,
    fix_signs,
    initial_basis,
    roughness_ordered_basis,
    sample_basis_column,
    sample_lambda_f,
)
from .data import (
    DrawArchive,
    FunctionalDataset,
    McmcConfig,
    NumericalError,
    Standardization,
    standardize_design,
)
from .gaussian import RegressionDrawProblem, sample_regression
from .priors import (
    HorseshoeState,
    MgpState,
    slice_sample_hypers,
    update_horseshoe,
    update_mgp_gamma,
    update_mgp_mu,
)

log = logging.getLogger(__name__)

SSR_FLOOR = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based stream used for every chain."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


@dataclass
class RegressionState:
    beta: np.ndarray  # (K, n)
    mu: np.ndarray  # (K,)
    A: np.ndarray  # (K, p)
    Gamma: np.ndarray  # (K, n)
    y_proj: np.ndarray  # (K, n)
    sigma_eps: float


def full_loglik(Y, F, beta, sigma_eps) -> float:
    """Gaussian log-likelihood of the curves (rows of ``Y``) given loadings and factors."""
    n, m = Y.shape
    r = Y - beta.T @ F.T
    return -0.5 * n * m * np.log(2 * np.pi * sigma_eps**2) - 0.5 * np.sum(r**2) / sigma_eps**2


def working_loglik(y_proj, beta, sigma_eps) -> float:
    """Log-likelihood of the projected data treated as independent scalars."""
    r = y_proj - beta
    return -0.5 * r.size * np.log(2 * np.pi * sigma_eps**2) - 0.5 * np.sum(r**2) / sigma_eps**2


def project(F: np.ndarray, Y: np.ndarray, Psi: np.ndarray | None = None, BtY: np.ndarray | None = None):
    """Projected data ``F' Y_i`` for every subject, shape (K, n).

    When the spline coefficients and ``B' Y'`` are supplied the product is
    formed as ``Psi' (B' Y')``.
    """
    if Psi is not None and BtY is not None:
        return Psi.T @ BtY
    return F.T @ Y.T


def impute_missing(Y, missing, F, beta, sigma_eps, rng) -> np.ndarray:
    """Fill the masked cells of ``Y`` in place with draws at the current parameters."""
    rows, cols = missing
    if rows.size:
        fitted = np.einsum("kc,kc->c", F[cols].T, beta[:, rows])
        Y[rows, cols] = fitted + sigma_eps * rng.standard_normal(rows.size)
    return Y


def sample_sigma_eps(Y, F, beta, rng, prior=None):
    """Draw the observation error SD; returns ``(sigma, floored)``.

    Jeffreys prior by default; ``prior=(shape, rate)`` adds a Gamma prior on
    the precision.
    """
    n, m = Y.shape
    half_ssr = 0.5 * float(np.sum((Y - beta.T @ F.T) ** 2))
    floored = half_ssr < SSR_FLOOR
    shape, rate = m * n / 2, max(half_ssr, SSR_FLOOR)
    if prior is not None:
        shape, rate = shape + prior[0], rate + prior[1]
    return rng.gamma(shape, 1.0 / rate) ** -0.5, floored


def sample_regression_block(k, reg: RegressionState, Xd, sigma_mu, sigma_alpha, sigma_gamma_k, rng):
    """Draw (mu_k, alpha_k) with subject effects integrated out, then gamma_k given them.

    ``Xd`` is the design with the intercept column first; ``sigma_alpha`` is the
    p-vector of coefficient scales for factor k and ``sigma_gamma_k`` the
    n-vector of subject-effect scales. Updates ``reg`` in place.
    """
    s2 = reg.sigma_eps**2
    y = reg.y_proj[k]
    prob = RegressionDrawProblem(
        X=Xd,
        Sigma_y_diag=sigma_gamma_k**2 + s2,
        Sigma_alpha_diag=np.r_[sigma_mu**2, sigma_alpha**2],
        y=y,
    )
    coef = sample_regression(prob, rng)
    fit = Xd @ coef
    q = 1.0 / s2 + sigma_gamma_k**-2
    mean = (y - fit) / s2 / q
    gamma = mean + rng.standard_normal(y.size) / np.sqrt(q)
    reg.mu[k] = coef[0]
    reg.A[k] = coef[1:]
    reg.Gamma[k] = gamma
    reg.beta[k] = fit + gamma


class FosrGibbs:
    """Mutable chain state plus one-sweep update.

    ``run`` drives the full chain; ``sweep`` is exposed for tests that need to
    interleave their own steps.
    """

    def __init__(self, data: FunctionalDataset, config: McmcConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else make_rng(config.seed)
        self.data = data
        K, n, m, p = config.K, data.n, data.m, data.p
        if config.standardize:
            Xs, self.standardization = standardize_design(data.X)
        else:
            Xs, self.standardization = np.asarray(data.X, float), Standardization.identity(p)
        self.Xs = Xs
        self.Xd = np.column_stack([np.ones(n), Xs])
        self.spline = build_lrtps(data.tau, config.num_knots)
        self.BtB = self.spline.B.T @ self.spline.B
        self.missing = np.nonzero(~data.observed)
        self.missing_flat = np.flatnonzero(~data.observed.ravel())

        Y = np.array(data.Y, dtype=float)
        col_means = np.nanmean(Y, axis=0)
        col_means = np.where(np.isfinite(col_means), col_means, np.nanmean(Y))
        Y[self.missing] = col_means[self.missing[1]]
        self.Y = Y

        if config.fix_basis:
            self.basis = roughness_ordered_basis(self.spline, K)
        else:
            self.basis = initial_basis(Y, self.spline, K, self.Xd)
        F = self.basis.F
        y_proj = project(F, Y)
        beta = y_proj.copy()
        mu = beta.mean(axis=1)
        sigma_eps = float(np.sqrt(np.mean((Y - beta.T @ F.T) ** 2)))
        if not sigma_eps > 0:
            sigma_eps = float(np.std(Y)) or 1.0
        self.reg = RegressionState(beta=beta, mu=mu, A=np.zeros((K, p)), Gamma=beta - mu[:, None],
                                   y_proj=y_proj, sigma_eps=sigma_eps)
        self.hs = HorseshoeState.initial(p, K)
        self.mgp = MgpState.initial(K, n, config.fixed_hypers)
        self.flags = {"lambda_f_fallback": 0, "slice_failures": 0, "ssr_floor": 0}

    def _step(self, name, it, fn, *args):
        try:
            return fn(*args)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}, step {name}: {exc}") from exc

    def _basis_sweep(self):
        rng, b, reg = self.rng, self.basis, self.reg
        BtY = self.spline.B.T @ self.Y.T
        for k in range(self.config.K):
            lam, fell_back = sample_lambda_f(b.Psi[:, k], self.spline.Omega, rng)
            b.lambda_f[k] = lam
            self.flags["lambda_f_fallback"] += int(fell_back)
            sample_basis_column(k, b, reg.beta, BtY, self.spline, self.BtB, reg.sigma_eps, rng)
        s = fix_signs(b.F)
        if np.any(s < 0):
            b.F *= s
            b.Psi *= s
            for arr in (reg.beta, reg.Gamma, reg.A):
                arr *= s[:, None]
            reg.mu *= s
        return BtY

    def _regression(self):
        reg = self.reg
        sigma_mu = self.mgp.sigma_mu
        sigma_gamma = self.mgp.sigma_gamma_ki
        for k in range(self.config.K):
            sample_regression_block(k, reg, self.Xd, sigma_mu[k], self.hs.sigma_alpha[:, k],
                                    sigma_gamma[k], self.rng)

    def _variances(self):
        rng, reg = self.rng, self.reg
        reg.sigma_eps, floored = sample_sigma_eps(self.Y, self.basis.F, reg.beta, rng,
                                                  self.config.sigma_eps_prior)
        self.flags["ssr_floor"] += int(floored)
        self.mgp = update_mgp_mu(reg.mu, self.mgp, rng)
        self.mgp = update_mgp_gamma(reg.Gamma, self.mgp, rng)
        self.hs = update_horseshoe(reg.A, self.hs, rng)

    def _hypers(self):
        self.mgp, failed = slice_sample_hypers(self.mgp, self.rng, self.config.fixed_hypers)
        self.flags["slice_failures"] += len(failed)

    def sweep(self, it: int = 0) -> None:
        reg, b = self.reg, self.basis
        self._step("impute", it, impute_missing, self.Y, self.missing, b.F, reg.beta, reg.sigma_eps, self.rng)
        if self.config.fix_basis:
            reg.y_proj = project(b.F, self.Y)
        else:
            BtY = self._step("basis", it, self._basis_sweep)
            reg.y_proj = project(b.F, self.Y, b.Psi, BtY)
        self._step("regression", it, self._regression)
        self._step("variances", it, self._variances)
        self._step("hyperparameters", it, self._hypers)

    def snapshot(self) -> dict:
        reg = self.reg
        return {
            "F": self.basis.F.copy(),
            "mu": reg.mu.copy(),
            "A": reg.A.copy(),
            "Gamma": reg.Gamma.copy(),
            "sigma_eps": reg.sigma_eps,
            "sigma_gamma": self.mgp.sigma_gamma_ki,
            "Y_imputed": self.Y[self.missing].copy(),
        }

    def run(self) -> DrawArchive:
        cfg = self.config
        S = cfg.n_saved
        keep = {name: [] for name in ("F", "mu", "A", "Gamma", "sigma_eps", "sigma_gamma", "Y_imputed")}
        seconds = np.empty(cfg.n_iter)
        t_start = time.perf_counter()
        for it in range(cfg.n_iter):
            t0 = time.perf_counter()
            self.sweep(it)
            seconds[it] = time.perf_counter() - t0
            t = it + 1 - cfg.burn_in
            if t > 0 and t % cfg.thin == 0 and len(keep["F"]) < S:
                for name, v in self.snapshot().items():
                    keep[name].append(v)
            if cfg.progress and (it + 1) % 100 == 0:
                print(f"iter {it + 1} {time.perf_counter() - t_start:.2f}s sigma_eps={self.reg.sigma_eps:.4g}",
                      file=sys.stderr, flush=True)
        arrays = {name: np.array(v, dtype=float) for name, v in keep.items()}
        arrays["Y_imputed"] = arrays["Y_imputed"].reshape(S, self.missing[0].size)
        return DrawArchive(
            **arrays,
            iter_seconds=seconds,
            tau=np.asarray(self.data.tau),
            missing_index=self.missing_flat,
            standardization=self.standardization,
            predictor_names=self.data.predictor_names,
            seed=cfg.seed,
            thin=cfg.thin,
            burn_in=cfg.burn_in,
            n_iter=cfg.n_iter,
            flags=dict(self.flags),
        )


def run_gibbs(data: FunctionalDataset, config: McmcConfig, rng: np.random.Generator | None = None) -> DrawArchive:
    """Run one chain and return its thinned post-burn-in draws."""
    return FosrGibbs(data, config, rng).run()
