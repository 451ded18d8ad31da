import csv
import json

import numpy as np
import pytest

from fosr.cli import EXIT_INVALID, EXIT_NUMERICAL, MANIFEST, main
from fosr.data import DrawArchive, NumericalError, load_dataset


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(d), "--seed", "3"]) == 0
    return d


def test_simulate_defaults(sim_dir):
    data = load_dataset(sim_dir / "curves.csv", sim_dir / "design.csv")
    assert (data.n, data.m, data.p) == (100, 30, 20)
    truth = json.loads((sim_dir / "truth.json").read_text())
    assert sum(truth["support"]) == 10
    man = json.loads((sim_dir / MANIFEST).read_text())
    assert man["command"] == "simulate" and man["seed"] == 3


def test_simulate_reproducible(tmp_path, sim_dir):
    assert main(["simulate", "--out", str(tmp_path), "--seed", "3"]) == 0
    for f in ("curves.csv", "design.csv", "truth.json"):
        assert (tmp_path / f).read_bytes() == (sim_dir / f).read_bytes()


def test_simulate_missing_fraction(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--missing-frac", "0.06"]) == 0
    data = load_dataset(tmp_path / "curves.csv", tmp_path / "design.csv")
    assert abs((~data.observed).mean() - 0.06) < 0.005


def test_pipeline(tmp_path, sim_dir):
    fit = tmp_path / "fit"
    rc = main(["fit", "--curves", str(sim_dir / "curves.csv"), "--design", str(sim_dir / "design.csv"),
               "--iters", "400", "--burnin", "100", "--thin", "2", "--seed", "1", "--out", str(fit)])
    assert rc == 0
    arch = DrawArchive.load(fit)
    assert arch.n_draws == 150 and arch.seed == 1
    assert main(["summarize", "--archive", str(fit), "--out", str(tmp_path / "summ")]) == 0
    assert len(list((tmp_path / "summ").glob("coef_*.csv"))) == 20
    assert (tmp_path / "summ" / MANIFEST).exists()
    assert main(["select", "--archive", str(fit), "--design", str(sim_dir / "design.csv"),
                 "--out", str(tmp_path / "sel")]) == 0
    report = json.loads((tmp_path / "sel" / "selected_model.json").read_text())
    assert report["model_size"] == len(report["selected_predictors"])
    with open(tmp_path / "sel" / "selection_summary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[-1][0] == "full" and len(rows) == 102
    man = json.loads((tmp_path / "sel" / MANIFEST).read_text())
    assert set(man["inputs"]) == {"design", "archive"}


def test_chains(tmp_path, sim_dir):
    out = tmp_path / "fit"
    rc = main(["fit", "--curves", str(sim_dir / "curves.csv"), "--design", str(sim_dir / "design.csv"),
               "--iters", "60", "--burnin", "10", "--thin", "1", "--chains", "4", "--out", str(out)])
    assert rc == 0
    seeds = {DrawArchive.load(out / f"chain_{i}").seed for i in range(4)}
    assert len(seeds) == 4
    man = json.loads((out / MANIFEST).read_text())
    assert sorted(man["config"]["chain_seeds"]) == sorted(seeds)
    assert main(["summarize", "--archive", str(out), "--out", str(tmp_path / "s")]) == 0


def test_config_precedence(tmp_path, sim_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"K": 2, "n_iter": 30, "burn_in": 10, "thin": 5}))
    out = tmp_path / "fit"
    rc = main(["fit", "--curves", str(sim_dir / "curves.csv"), "--design", str(sim_dir / "design.csv"),
               "--config", str(cfg), "--thin", "1", "--out", str(out)])
    assert rc == 0
    arch = DrawArchive.load(out)
    assert arch.F.shape[2] == 2 and arch.n_draws == 20


def test_exit_codes(tmp_path, sim_dir, monkeypatch):
    args = ["fit", "--curves", str(tmp_path / "missing.csv"), "--design", str(sim_dir / "design.csv"),
            "--out", str(tmp_path / "o")]
    assert main(args) == EXIT_INVALID
    args = ["fit", "--curves", str(sim_dir / "curves.csv"), "--design", str(sim_dir / "design.csv"),
            "--iters", "10", "--burnin", "20", "--out", str(tmp_path / "o")]
    assert main(args) == EXIT_INVALID

    import fosr.cli as cli

    def boom(*a, **k):
        raise NumericalError("collapsed")

    monkeypatch.setattr(cli, "run_gibbs", boom)
    args = ["fit", "--curves", str(sim_dir / "curves.csv"), "--design", str(sim_dir / "design.csv"),
            "--out", str(tmp_path / "o")]
    assert main(args) == EXIT_NUMERICAL


def test_study_small(tmp_path):
    rc = main(["study", "--p", "20", "--replicates", "5", "--iters", "300", "--burnin", "100", "--thin", "2",
               "--n", "40", "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10 and {r["method"] for r in rows} == {"fosr", "basis_spline"}
    with open(tmp_path / "roc.csv") as fh:
        roc = list(csv.DictReader(fh))
    assert {r["method"] for r in roc} == {"dss", "gbpv"}
    assert all(0 <= float(r["fpr"]) <= 1 and 0 <= float(r["tpr"]) <= 1 for r in roc)
    assert (tmp_path / MANIFEST).exists()
