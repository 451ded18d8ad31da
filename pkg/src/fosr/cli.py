"""Command-line entry point: ``fosr {simulate,fit,summarize,select,study}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data import (
    DrawArchive,
    McmcConfig,
    NumericalError,
    ValidationError,
    load_dataset,
    load_design,
    write_dataset,
)
from .dss import build_dss_problem, dss_coefficients, run_selection
from .gibbs import run_gibbs
from .simulate import generate_dataset
from .study import StudyConfig, run_study, study_config_dict, summarize_study, write_study_csvs
from .summaries import coefficient_draws, gbpv_scores, gbpv_select, summarize_coefficients, write_coefficient_csvs

log = logging.getLogger("fosr")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
MANIFEST = "run_manifest.json"
# Flag name -> McmcConfig field for options that may also come from --config.
MCMC_FLAGS = {"K": "K", "iters": "n_iter", "burnin": "burn_in", "thin": "thin", "seed": "seed",
              "fix_basis": "fix_basis", "num_knots": "num_knots"}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, inputs: dict, seed, started: float) -> Path:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in inputs.items() if v is not None},
        "seed": seed,
        "versions": {"fosr": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_seconds": time.time() - started,
    }
    path = Path(out_dir) / MANIFEST
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def mcmc_config_from_args(args) -> McmcConfig:
    """Defaults, overridden by the JSON config, overridden by explicit flags."""
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise ValidationError("config file must hold a JSON object")
    for flag, name in MCMC_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[name] = v
    if getattr(args, "progress", False):
        base["progress"] = True
    return McmcConfig.from_dict(base)


def load_archive(path) -> DrawArchive:
    """A single archive directory, or a fit directory holding ``chain_*`` archives."""
    path = Path(path)
    if (path / "manifest.json").exists():
        return DrawArchive.load(path)
    chains = sorted(path.glob("chain_*"))
    if not chains:
        raise ValidationError(f"no draw archive found in {path}")
    return DrawArchive.concatenate([DrawArchive.load(c) for c in chains])


def chain_seeds(seed: int, chains: int) -> list[int]:
    if chains == 1:
        return [int(seed)]
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in np.random.SeedSequence(seed).spawn(chains)]


def _fit_chain(args):
    data, cfg, out = args
    archive = run_gibbs(data, cfg)
    archive.save(out)
    return str(out)


# --- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data, truth = generate_dataset(n=args.n, m=args.m, p=args.p, p1=args.p1, rsnr=args.rsnr,
                                   seed=args.seed, missing_frac=args.missing_frac)
    write_dataset(data, out / "curves.csv", out / "design.csv")
    with open(out / "truth.json", "w") as fh:
        json.dump(truth.to_json_dict(), fh)
    cfg = {k: getattr(args, k) for k in ("n", "m", "p", "p1", "rsnr", "seed", "missing_frac")}
    write_manifest(out, "simulate", cfg, {}, args.seed, started)
    return EXIT_OK


def cmd_fit(args) -> int:
    started = time.time()
    cfg = mcmc_config_from_args(args)
    if args.chains < 1:
        raise ValidationError("--chains must be at least 1")
    data = load_dataset(args.curves, args.design)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = chain_seeds(cfg.seed, args.chains)
    if args.chains == 1:
        tasks = [(data, cfg, out)]
    else:
        tasks = [(data, replace(cfg, seed=s), out / f"chain_{i}") for i, s in enumerate(seeds)]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            list(ex.map(_fit_chain, tasks))
    else:
        for t in tasks:
            _fit_chain(t)
    conf = asdict(cfg)
    conf.update(chains=args.chains, chain_seeds=seeds)
    write_manifest(out, "fit", conf, {"curves": args.curves, "design": args.design}, cfg.seed, started)
    return EXIT_OK


def cmd_summarize(args) -> int:
    started = time.time()
    archive = load_archive(args.archive)
    out = Path(args.out)
    summary = summarize_coefficients(archive, level=args.level)
    write_coefficient_csvs(summary, out)
    selected = gbpv_select(summary)
    scores = gbpv_scores(coefficient_draws(archive))
    with open(out / "gbpv.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predictor", "selected", "score"])
        for name, s, sc in zip(summary.predictor_names, selected, scores):
            w.writerow([name, int(s), repr(float(sc))])
    write_manifest(out, "summarize", {"level": args.level}, {"archive": Path(args.archive) / _any_manifest(args.archive)},
                   archive.seed, started)
    return EXIT_OK


def _any_manifest(path) -> str:
    path = Path(path)
    if (path / "manifest.json").exists():
        return "manifest.json"
    return str(sorted(path.glob("chain_*"))[0].relative_to(path) / "manifest.json")


def cmd_select(args) -> int:
    started = time.time()
    archive = load_archive(args.archive)
    names, X = load_design(args.predict_design or args.design)
    if tuple(names) != tuple(archive.predictor_names):
        raise ValidationError("design columns do not match the fitted predictors")
    X_tilde = archive.standardization.apply(X)
    prob = build_dss_problem(archive, X_tilde)
    path = run_selection(prob, archive, grid_size=args.grid_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path.write_csv(out / "selection_summary.csv")
    fit = path.selected
    coefs = dss_coefficients(prob, fit.Delta, archive.standardization.scale)
    with open(out / "dss_coefficients.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predictor"] + [repr(float(t)) for t in archive.tau])
        for name, row in zip(archive.predictor_names, coefs):
            w.writerow([name] + [repr(float(v)) for v in row])
    report = {
        "selected_predictors": [n for n, s in zip(archive.predictor_names, fit.support) if s],
        "model_size": fit.model_size,
        "lambda": fit.lam,
        "selected_index": path.selected_index,
        "rho2_full": {k: float(v) for k, v in path.rho2_full.items()},
        "rho2_selected": {k: float(v) for k, v in path.rho2_lambda[path.selected_index].items()},
        "flags": path.flags,
    }
    with open(out / "selected_model.json", "w") as fh:
        json.dump(report, fh, indent=2)
    inputs = {"design": args.design, "predict_design": args.predict_design,
              "archive": Path(args.archive) / _any_manifest(args.archive)}
    write_manifest(out, "select", {"grid_size": args.grid_size}, inputs, archive.seed, started)
    return EXIT_OK


def cmd_study(args) -> int:
    started = time.time()
    mcmc = mcmc_config_from_args(args)
    if args.iters is None and not args.config:
        mcmc = replace(mcmc, n_iter=3000, burn_in=1000 if args.burnin is None else args.burnin,
                       thin=2 if args.thin is None else args.thin)
    cfg = StudyConfig(n=args.n, m=args.m, p_values=tuple(args.p), p1=args.p1, rsnr=args.rsnr,
                      replicates=args.replicates, seed=mcmc.seed, mcmc=mcmc, jobs=args.jobs)
    results = run_study(cfg)
    out = Path(args.out)
    write_study_csvs(results, out)
    summary = summarize_study(results)
    with open(out / "study_summary.json", "w") as fh:
        json.dump({str(p): {k: v for k, v in b.items()} for p, b in summary.items()}, fh, indent=2)
    write_manifest(out, "study", study_config_dict(cfg), {}, mcmc.seed, started)
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def _add_mcmc_flags(sp, seed_default=None):
    sp.add_argument("--config", help="JSON file of sampler settings (flags override it)")
    sp.add_argument("--K", type=int, help="number of loading curves (default 6)")
    sp.add_argument("--iters", type=int, help="total MCMC iterations")
    sp.add_argument("--burnin", type=int, help="iterations discarded as burn-in")
    sp.add_argument("--thin", type=int, help="keep every thin-th draw after burn-in")
    sp.add_argument("--seed", type=int, default=seed_default)
    sp.add_argument("--num-knots", dest="num_knots", type=int)
    sp.add_argument("--fix-basis", dest="fix_basis", action="store_const", const=True, default=None,
                    help="hold the loading curves at a fixed spline basis")
    sp.add_argument("--progress", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fosr", description="Bayesian function-on-scalars regression")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a synthetic dataset with known truth")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--m", type=int, default=30)
    sp.add_argument("--p", type=int, default=20)
    sp.add_argument("--p1", type=int, default=10)
    sp.add_argument("--rsnr", type=float, default=5.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--missing-frac", dest="missing_frac", type=float, default=0.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="run the Gibbs sampler and store the draws")
    sp.add_argument("--curves", required=True)
    sp.add_argument("--design", required=True)
    _add_mcmc_flags(sp)
    sp.add_argument("--chains", type=int, default=1)
    sp.add_argument("--jobs", type=int, default=1, help="worker processes for multiple chains")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("summarize", help="coefficient means and credible bands")
    sp.add_argument("--archive", required=True)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("select", help="penalized posterior summary and model selection")
    sp.add_argument("--archive", required=True)
    sp.add_argument("--design", required=True, help="design used for fitting")
    sp.add_argument("--predict-design", dest="predict_design", help="alternative design for prediction")
    sp.add_argument("--grid-size", dest="grid_size", type=int, default=100)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("study", help="replicated simulation study")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--m", type=int, default=30)
    sp.add_argument("--p", type=int, nargs="+", default=[20])
    sp.add_argument("--p1", type=int, default=10)
    sp.add_argument("--rsnr", type=float, default=5.0)
    sp.add_argument("--replicates", type=int, default=20)
    _add_mcmc_flags(sp)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_study)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
