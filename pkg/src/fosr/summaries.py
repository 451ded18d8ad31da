"""Posterior summaries of the coefficient functions: means, pointwise and
simultaneous credible bands, and band-based marginal selection."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DrawArchive, ValidationError

MIN_DRAWS_FOR_BANDS = 100


def coefficient_draws(archive: DrawArchive, raw: bool = True) -> np.ndarray:
    """Per-draw coefficient functions ``F A`` as an (S, p, m) array."""
    return archive.coefficient_functions(raw=raw)


def _max_statistic(draws: np.ndarray):
    mean = draws.mean(axis=0)
    sd = draws.std(axis=0, ddof=1)
    live = sd > 0
    if not live.any():
        return mean, sd, live, np.zeros(draws.shape[0])
    z = np.abs(draws[:, live] - mean[live]) / sd[live]
    return mean, sd, live, z.max(axis=1)


def simultaneous_band(draws: np.ndarray, level: float = 0.95):
    """Band ``mean +/- q * sd`` where q is the ``level`` quantile over draws of the
    largest standardized deviation across the grid.

    Grid points with zero posterior SD are left out of the maximum and the
    band collapses to the mean there.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] < MIN_DRAWS_FOR_BANDS:
        raise ValidationError(f"need at least {MIN_DRAWS_FOR_BANDS} draws for a simultaneous band")
    mean, sd, live, M = _max_statistic(draws)
    q = np.quantile(M, level)
    half = np.where(live, q * sd, 0.0)
    return mean - half, mean + half


def pointwise_band(draws: np.ndarray, level: float = 0.95):
    a = (1 - level) / 2
    lo, hi = np.quantile(draws, [a, 1 - a], axis=0)
    return lo, hi


@dataclass(frozen=True)
class CoefficientSummary:
    tau: np.ndarray
    predictor_names: tuple
    alpha_tilde_mean: np.ndarray  # (p, m)
    pointwise_lo: np.ndarray
    pointwise_hi: np.ndarray
    simult_lo: np.ndarray
    simult_hi: np.ndarray
    level: float


def summarize_coefficients(archive: DrawArchive, level: float = 0.95, raw: bool = True) -> CoefficientSummary:
    """Posterior mean plus both bands for every predictor.

    The simultaneous band is widened where needed to contain the pointwise
    band, which can poke out of a symmetric band under skewed posteriors.
    """
    draws = coefficient_draws(archive, raw=raw)
    S, p, m = draws.shape
    mean = draws.mean(axis=0)
    pw_lo, pw_hi = pointwise_band(draws, level)
    sim_lo, sim_hi = np.empty((p, m)), np.empty((p, m))
    for j in range(p):
        sim_lo[j], sim_hi[j] = simultaneous_band(draws[:, j, :], level)
    return CoefficientSummary(
        tau=np.asarray(archive.tau),
        predictor_names=tuple(archive.predictor_names),
        alpha_tilde_mean=mean,
        pointwise_lo=pw_lo,
        pointwise_hi=pw_hi,
        simult_lo=np.minimum(sim_lo, pw_lo),
        simult_hi=np.maximum(sim_hi, pw_hi),
        level=level,
    )


def gbpv_select(summary: CoefficientSummary) -> np.ndarray:
    """Keep predictor j when its simultaneous band excludes zero at some grid point."""
    return np.any((summary.simult_lo > 0) | (summary.simult_hi < 0), axis=1)


def gbpv_scores(draws: np.ndarray) -> np.ndarray:
    """Largest band level at which each predictor is still selected.

    For predictor j this is the fraction of draws whose max standardized
    deviation falls below ``max_l |mean_l| / sd_l``; sweeping the band level
    and selecting scores above it reproduces the level sweep. ``draws`` is
    (S, p, m). One minus the score is the global Bayesian p-value.
    """
    draws = np.asarray(draws, dtype=float)
    out = np.empty(draws.shape[1])
    for j in range(draws.shape[1]):
        mean, sd, live, M = _max_statistic(draws[:, j, :])
        t = np.max(np.abs(mean[live]) / sd[live]) if live.any() else 0.0
        out[j] = np.mean(M < t)
    return out


def write_coefficient_csvs(summary: CoefficientSummary, directory) -> list[Path]:
    """One CSV per predictor: tau, mean, pw_lo, pw_hi, sim_lo, sim_hi."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, name in enumerate(summary.predictor_names):
        path = d / f"coef_{j:03d}_{_safe(name)}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "mean", "pw_lo", "pw_hi", "sim_lo", "sim_hi"])
            for row in zip(summary.tau, summary.alpha_tilde_mean[j], summary.pointwise_lo[j],
                           summary.pointwise_hi[j], summary.simult_lo[j], summary.simult_hi[j]):
                w.writerow([repr(float(v)) for v in row])
        paths.append(path)
    return paths


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
