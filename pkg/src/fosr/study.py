"""Replicated simulation study: fit the full model and the fixed spline-basis
ablation, score estimates, and trace selection ROC curves."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import McmcConfig
from .dss import build_dss_problem, run_selection
from .gibbs import run_gibbs
from .simulate import (
    average_roc,
    generate_dataset,
    mciw_and_coverage,
    nested_selections,
    rmse,
    roc_area,
    roc_points,
)
from .summaries import coefficient_draws, gbpv_scores, summarize_coefficients

log = logging.getLogger(__name__)


@dataclass
class StudyConfig:
    n: int = 100
    m: int = 30
    p_values: tuple = (20,)
    p1: int = 10
    rsnr: float = 5.0
    replicates: int = 20
    seed: int = 0
    mcmc: McmcConfig = field(default_factory=lambda: McmcConfig(n_iter=3000, burn_in=1000, thin=2))
    jobs: int = 1


def replicate_seeds(master: int, n: int) -> list[tuple[int, int]]:
    """(data seed, chain seed) per replicate, all derived from one master seed."""
    out = []
    for child in np.random.SeedSequence(master).spawn(n):
        a, b = child.generate_state(2, dtype=np.uint32)
        out.append((int(a), int(b)))
    return out


def dss_roc(path, support) -> list[tuple[int, float, float]]:
    """One ROC point per distinct model size along the penalty path."""
    seen, sels = set(), []
    for fit in path.fits:
        if fit.model_size not in seen:
            seen.add(fit.model_size)
            sels.append(fit.support)
    return roc_points(sels, support)


def run_replicate(cfg: StudyConfig, p: int, replicate: int, data_seed: int, chain_seed: int) -> dict:
    data, truth = generate_dataset(n=cfg.n, m=cfg.m, p=p, p1=cfg.p1, rsnr=cfg.rsnr, seed=data_seed)
    out = {"p": p, "replicate": replicate, "metrics": [], "roc": {}}
    for method, fix in (("fosr", False), ("basis_spline", True)):
        mc = replace(cfg.mcmc, seed=chain_seed, fix_basis=fix, progress=False)
        archive = run_gibbs(data, mc)
        summ = summarize_coefficients(archive)
        width, cover = mciw_and_coverage(summ.pointwise_lo, summ.pointwise_hi, truth)
        out["metrics"].append({"method": method, "p": p, "replicate": replicate,
                               "rmse": rmse(summ.alpha_tilde_mean, truth), "mciw": width, "coverage": cover})
        if method == "fosr":
            prob = build_dss_problem(archive, archive.standardization.apply(np.asarray(data.X)))
            path = run_selection(prob, archive)
            out["roc"]["dss"] = dss_roc(path, truth.support)
            out["roc"]["gbpv"] = roc_points(nested_selections(gbpv_scores(coefficient_draws(archive))), truth.support)
            out["selected_size"] = path.selected.model_size
            out["selection_flags"] = path.flags
    log.info("p=%d replicate %d done", p, replicate)
    return out


def _run_one(args):
    return run_replicate(*args)


def run_study(cfg: StudyConfig) -> list[dict]:
    tasks = []
    for p in cfg.p_values:
        for r, (ds, cs) in enumerate(replicate_seeds(cfg.seed + 1000 * p, cfg.replicates)):
            tasks.append((cfg, p, r, ds, cs))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            return list(ex.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def summarize_study(results: list[dict]) -> dict:
    """Means of every metric per (method, p), averaged ROC curves and mean ROC areas."""
    out = {}
    for p in sorted({r["p"] for r in results}):
        rs = [r for r in results if r["p"] == p]
        block = {}
        for method in ("fosr", "basis_spline"):
            rows = [m for r in rs for m in r["metrics"] if m["method"] == method]
            block[method] = {k: float(np.mean([row[k] for row in rows])) for k in ("rmse", "mciw", "coverage")}
        for method in ("dss", "gbpv"):
            curves = [r["roc"][method] for r in rs]
            block[method] = {"roc_area": float(np.mean([roc_area(c) for c in curves])),
                             "roc": average_roc(curves)}
        block["selected_sizes"] = [r["selected_size"] for r in rs]
        out[p] = block
    return out


def write_study_csvs(results: list[dict], directory) -> tuple[Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    res_path, roc_path = d / "results.csv", d / "roc.csv"
    with open(res_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "p", "replicate", "rmse", "mciw", "coverage"])
        for r in results:
            for m in r["metrics"]:
                w.writerow([m["method"], m["p"], m["replicate"], repr(m["rmse"]), repr(m["mciw"]), repr(m["coverage"])])
    summary = summarize_study(results)
    with open(roc_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "p", "model_size", "fpr", "tpr"])
        for p, block in summary.items():
            for method in ("dss", "gbpv"):
                for size, fpr, tpr in block[method]["roc"]:
                    w.writerow([method, p, size, repr(fpr), repr(tpr)])
    return res_path, roc_path


def study_config_dict(cfg: StudyConfig) -> dict:
    d = asdict(cfg)
    d["p_values"] = list(cfg.p_values)
    return d
