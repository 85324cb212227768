import json

import pandas as pd
import pytest

from ncbsts.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main

FAST = ["--set", "mcmc.n_iter=1100", "--set", "mcmc.n_burn=100", "--set", "mcmc.thin=1"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["make-data", "--out", str(d), "--quarters", "30", "--seed", "5"]) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def estimate_run(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("est")
    assert main(["estimate", "-c", str(dataset / "config.yaml"), "-o", str(out), *FAST]) == EXIT_OK
    return out


def test_make_data_outputs(dataset):
    m = pd.read_csv(dataset / "monthly.csv")
    assert list(m.columns) == ["date", "series", "value"]
    q = pd.read_csv(dataset / "quarterly.csv")
    assert list(q.columns) == ["date", "value"] and len(q) == 30


def test_estimate_schemas(estimate_run):
    inc = pd.read_csv(estimate_run / "inclusion.csv")
    assert list(inc.columns) == ["rank", "variable", "series", "offset", "probability", "sign_weight", "rule"]
    assert len(inc) == 48 and inc.probability.is_monotonic_decreasing
    ds = pd.read_csv(estimate_run / "savage_dickey.csv")
    assert ds.parameter.tolist() == ["sigma_tau", "sigma_alpha"] and (ds.ratio >= 0).all()
    size = pd.read_csv(estimate_run / "model_size.csv")
    assert size.probability.sum() == pytest.approx(1.0)
    summ = pd.read_csv(estimate_run / "posterior_summary.csv")
    assert summ.parameter.tolist() == ["tau0", "alpha0", "sigma_tau", "sigma_alpha", "sigma2"]
    man = json.loads((estimate_run / "manifest.json").read_text())
    assert man["command"] == "estimate" and man["config"]["mcmc"]["n_iter"] == 1100
    assert all(len(h) == 64 for h in man["data_paths"].values())


def test_replay_is_byte_identical(estimate_run, tmp_path):
    assert main(["replay", str(estimate_run / "manifest.json"), "--out", str(tmp_path)]) == EXIT_OK
    for name in ("inclusion.csv", "savage_dickey.csv", "model_size.csv", "posterior_summary.csv"):
        assert (tmp_path / name).read_bytes() == (estimate_run / name).read_bytes()


def test_replay_detects_changed_data(dataset, tmp_path):
    d = tmp_path / "copy"
    assert main(["make-data", "--out", str(d), "--quarters", "30", "--seed", "5"]) == EXIT_OK
    run = tmp_path / "run"
    args = ["nowcast", "-c", str(d / "config.yaml"), "-o", str(run), "--set", "mcmc.n_iter=60", "--set", "mcmc.n_burn=10"]
    assert main(args) == EXIT_OK
    with open(d / "quarterly.csv", "a") as fh:
        fh.write("2007-07-01,1.0\n")
    assert main(["replay", str(run / "manifest.json")]) == EXIT_DATA


def test_nowcast_all_vintages(dataset, tmp_path):
    args = ["nowcast", "-c", str(dataset / "config.yaml"), "-o", str(tmp_path), "--all",
            "--set", "mcmc.n_iter=200", "--set", "mcmc.n_burn=50"]
    assert main(args) == EXIT_OK
    now = pd.read_csv(tmp_path / "nowcast.csv")
    assert list(now.columns) == ["vintage", "n_observed", "mean", "sd", "q05", "q25", "q50", "q75", "q95"]
    assert now.vintage.tolist() == list(range(31))
    assert now.n_observed.iloc[0] == 0 and now.n_observed.is_monotonic_increasing
    assert (now.q05 <= now.q95).all()


def test_evaluate_tidy_output(dataset, tmp_path):
    args = ["evaluate", "-c", str(dataset / "config.yaml"), "-o", str(tmp_path), "--window", "28", "30",
            "--set", "mcmc.n_iter=120", "--set", "mcmc.n_burn=20", "--set", "evaluate.models=[horseshoe, ar2]"]
    assert main(args) == EXIT_OK
    m = pd.read_csv(tmp_path / "rt_metrics.csv")
    assert list(m.columns) == ["vintage", "model", "metric", "value"]
    assert len(m) == 2 * 31 * 3


def test_config_errors(dataset, tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  prior_kind: horseshoe\nmcmc:\n  n_iters: 10\n")
    assert main(["estimate", "-c", str(bad), "-o", str(tmp_path / "o")]) == EXIT_CONFIG
    assert f"{bad}:4:" in capsys.readouterr().err
    args = ["estimate", "-c", str(dataset / "config.yaml"), "-o", str(tmp_path / "o2"), "--set", "mcmc.n_iter=1500"]
    assert main(args) == EXIT_CONFIG
    assert "at least 1000" in capsys.readouterr().err
    args = ["nowcast", "-c", str(dataset / "config.yaml"), "-o", str(tmp_path / "o3"), "--vintage", "31"]
    assert main(args) == EXIT_CONFIG
    assert "0..30" in capsys.readouterr().err


def test_missing_data_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("data:\n  monthly: nope.csv\n  quarterly: nope.csv\n")
    assert main(["estimate", "-c", str(cfg), "-o", str(tmp_path / "o")]) == EXIT_DATA
