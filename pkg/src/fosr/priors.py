"""Variance-component updates: grouped horseshoe, multiplicative gamma processes,
and slice-sampled shrinkage hyperparameters."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

NU_BOUNDS = (2.0, 128.0)
A_WIDTH = 1.0  # slice width for log(a)
NU_WIDTH = 8.0
MAX_STEPS = 100


@dataclass(frozen=True)
class HorseshoeState:
    sigma_alpha: np.ndarray  # (p, K)
    xi_alpha: np.ndarray  # (p, K)
    lambda_j: np.ndarray  # (p,)
    xi_lambda_j: np.ndarray  # (p,)
    lambda_0: float
    xi_lambda_0: float

    @classmethod
    def initial(cls, p: int, K: int) -> "HorseshoeState":
        return cls(np.ones((p, K)), np.ones((p, K)), np.ones(p), np.ones(p), 1.0, 1.0)


def _gamma(rng, shape, rate):
    return rng.gamma(shape, 1.0 / np.asarray(rate))


def update_horseshoe(alpha: np.ndarray, hs: HorseshoeState, rng: np.random.Generator) -> HorseshoeState:
    """One pass of the parameter-expanded half-Cauchy hierarchy.

    ``alpha`` is K x p. Blocks run in order: coefficient scales and their
    auxiliaries, predictor scales, then the global scale.
    """
    a2 = np.asarray(alpha).T ** 2  # (p, K)
    p, K = a2.shape
    prec_alpha = _gamma(rng, 1.0, hs.xi_alpha + a2 / 2)
    xi_alpha = _gamma(rng, 1.0, hs.lambda_j[:, None] ** -2 + prec_alpha)

    prec_j = _gamma(rng, (K + 1) / 2, hs.xi_lambda_j + xi_alpha.sum(axis=1))
    xi_lambda_j = _gamma(rng, 1.0, hs.lambda_0**-2 + prec_j)

    prec_0 = _gamma(rng, (p + 1) / 2, hs.xi_lambda_0 + xi_lambda_j.sum())
    xi_lambda_0 = _gamma(rng, 1.0, p + prec_0)
    return HorseshoeState(
        sigma_alpha=prec_alpha**-0.5,
        xi_alpha=xi_alpha,
        lambda_j=prec_j**-0.5,
        xi_lambda_j=xi_lambda_j,
        lambda_0=float(prec_0) ** -0.5,
        xi_lambda_0=float(xi_lambda_0),
    )


def half_cauchy_px_step(prec, xi, scale, rng, sum_sq=0.0, n_obs=0):
    """Gibbs step for the expansion ``prec | xi ~ Gamma(1/2, xi)``, ``xi ~ Gamma(1/2, scale^-2)``.

    ``sum_sq``/``n_obs`` add a Gaussian likelihood; with ``n_obs=0`` the chain
    targets the prior, whose marginal for ``prec^-1/2`` is half-Cauchy(0, scale).
    """
    prec = _gamma(rng, 0.5 + n_obs / 2, xi + sum_sq / 2)
    xi = _gamma(rng, 1.0, scale**-2.0 + prec)
    return prec, xi


@dataclass(frozen=True)
class MgpState:
    delta_mu: np.ndarray  # (K,)
    delta_gamma: np.ndarray  # (K,)
    xi_gamma: np.ndarray  # (K, n)
    nu_gamma: float
    a_mu1: float
    a_mu2: float
    a_gamma1: float
    a_gamma2: float

    @property
    def sigma_mu(self) -> np.ndarray:
        return np.cumprod(self.delta_mu) ** -0.5

    @property
    def sigma_gamma_k(self) -> np.ndarray:
        return np.cumprod(self.delta_gamma) ** -0.5

    @property
    def sigma_gamma_ki(self) -> np.ndarray:
        return self.sigma_gamma_k[:, None] / np.sqrt(self.xi_gamma)

    @property
    def hypers(self) -> dict:
        return {name: getattr(self, name) for name in ("a_mu1", "a_mu2", "a_gamma1", "a_gamma2", "nu_gamma")}

    @classmethod
    def initial(cls, K: int, n: int, fixed: dict | None = None) -> "MgpState":
        """Unit precisions with hyperparameters at their prior means (or fixed values)."""
        h = {"a_mu1": 2.0, "a_mu2": 2.0, "a_gamma1": 2.0, "a_gamma2": 2.0, "nu_gamma": sum(NU_BOUNDS) / 2}
        h.update(fixed or {})
        return cls(np.ones(K), np.ones(K), np.ones((K, n)), **{k: float(v) for k, v in h.items()})

    @classmethod
    def from_prior(cls, K: int, n: int, rng: np.random.Generator, fixed: dict | None = None) -> "MgpState":
        h = {
            "a_mu1": rng.gamma(2.0), "a_mu2": rng.gamma(2.0),
            "a_gamma1": rng.gamma(2.0), "a_gamma2": rng.gamma(2.0),
            "nu_gamma": rng.uniform(*NU_BOUNDS),
        }
        h.update(fixed or {})
        dmu = np.r_[rng.gamma(h["a_mu1"]), rng.gamma(h["a_mu2"], size=K - 1)]
        dga = np.r_[rng.gamma(h["a_gamma1"]), rng.gamma(h["a_gamma2"], size=K - 1)]
        nu = h["nu_gamma"]
        xi = rng.gamma(nu / 2, 2.0 / nu, size=(K, n))
        return cls(dmu, dga, xi, **{k: float(v) for k, v in h.items()})


def _mgp_sweep(delta, weighted_sq, a1, a2, mult, rng):
    """Sequential update of MGP increments.

    ``weighted_sq[k]`` is the sum of squares attached to factor k and ``mult``
    the number of terms per factor.
    """
    delta = delta.copy()
    K = delta.size
    for ell in range(K):
        d = delta.copy()
        d[ell] = 1.0
        tau = np.cumprod(d)[ell:]
        shape = (a1 if ell == 0 else a2) + mult * (K - ell) / 2
        rate = 1.0 + 0.5 * float(tau @ weighted_sq[ell:])
        delta[ell] = rng.gamma(shape, 1.0 / rate)
    return delta


def update_mgp_mu(mu: np.ndarray, state: MgpState, rng: np.random.Generator) -> MgpState:
    delta = _mgp_sweep(state.delta_mu, np.asarray(mu) ** 2, state.a_mu1, state.a_mu2, 1, rng)
    return replace(state, delta_mu=delta)


def update_mgp_gamma(gamma: np.ndarray, state: MgpState, rng: np.random.Generator) -> MgpState:
    """Update the subject-effect increments, then the per-subject heavy-tail weights."""
    gamma = np.asarray(gamma)
    n = gamma.shape[1]
    g2 = gamma**2
    delta = _mgp_sweep(state.delta_gamma, (g2 * state.xi_gamma).sum(axis=1),
                       state.a_gamma1, state.a_gamma2, n, rng)
    prec_k = np.cumprod(delta)
    nu = state.nu_gamma
    xi = rng.gamma(nu / 2 + 0.5, 1.0 / (nu / 2 + g2 * prec_k[:, None] / 2))
    return replace(state, delta_gamma=delta, xi_gamma=xi)


def slice_sample(x0: float, logp, width: float, rng: np.random.Generator, max_steps: int = MAX_STEPS):
    """Univariate slice sampling with stepping out and shrinkage.

    Returns ``(x, ok)``; ``ok`` is False when no acceptable point is found and
    the current value is kept.
    """
    lp0 = logp(x0)
    if not np.isfinite(lp0):
        return x0, False
    log_y = lp0 - rng.exponential()
    left = x0 - width * rng.random()
    right = left + width
    j = int(math.floor(max_steps * rng.random()))
    k = max_steps - 1 - j
    while j > 0 and logp(left) > log_y:
        left -= width
        j -= 1
    while k > 0 and logp(right) > log_y:
        right += width
        k -= 1
    for _ in range(max_steps):
        x1 = left + (right - left) * rng.random()
        if logp(x1) > log_y:
            return x1, True
        if x1 < x0:
            left = x1
        else:
            right = x1
    return x0, False


def _log_gamma_unit_rate(x_log_sum, x_sum, count, a):
    return (a - 1.0) * x_log_sum - x_sum - count * gammaln(a)


def _a_logpost(deltas):
    deltas = np.asarray(deltas, dtype=float)
    ls, s, c = float(np.log(deltas).sum()), float(deltas.sum()), deltas.size

    def logp(eta):
        if eta > 50 or eta < -50:
            return -np.inf
        a = math.exp(eta)
        # Gamma(2, 1) prior on a, Jacobian of the log transform
        return math.log(a) - a + eta + _log_gamma_unit_rate(ls, s, c, a)

    return logp


def _nu_logpost(xi):
    ls, s, c = float(np.log(xi).sum()), float(xi.sum()), xi.size

    def logp(nu):
        if not NU_BOUNDS[0] <= nu <= NU_BOUNDS[1]:
            return -np.inf
        h = nu / 2
        return c * (h * math.log(h) - gammaln(h)) + (h - 1.0) * ls - h * s

    return logp


def slice_sample_hypers(state: MgpState, rng: np.random.Generator, fixed: dict | None = None):
    """Independent slice updates of the four MGP shape parameters and nu_gamma.

    Hyperparameters named in ``fixed`` are left untouched. Returns
    ``(state, failures)`` where ``failures`` lists any parameter kept because
    its slice search failed.
    """
    fixed = fixed or {}
    new, failures = {}, []
    targets = {
        "a_mu1": state.delta_mu[:1],
        "a_mu2": state.delta_mu[1:],
        "a_gamma1": state.delta_gamma[:1],
        "a_gamma2": state.delta_gamma[1:],
    }
    for name, deltas in targets.items():
        if name in fixed:
            continue
        eta, ok = slice_sample(math.log(getattr(state, name)), _a_logpost(deltas), A_WIDTH, rng)
        new[name] = math.exp(eta)
        if not ok:
            failures.append(name)
    if "nu_gamma" not in fixed:
        nu, ok = slice_sample(state.nu_gamma, _nu_logpost(state.xi_gamma), NU_WIDTH, rng)
        new["nu_gamma"] = nu
        if not ok:
            failures.append("nu_gamma")
    if not new:
        return state, failures
    return replace(state, **new), failures
