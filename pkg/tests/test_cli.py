import csv
import json
import time

import numpy as np
import pytest

from doubledid.cli import main
from helpers import staggered_panel


def _write_panel(path, seed=0, n=40, periods=4, covariate=False):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "year", "y", "z", "d", "x"])
        for i in range(n):
            a = rng.normal()
            for t in range(periods):
                d = int(i < n // 2 and t == periods - 1)
                w.writerow([f"u{i}", 2000 + t, a + 0.3 * t + rng.normal() + 0.5 * d, rng.normal(), d, rng.normal()])
    return path


@pytest.fixture
def panel_csv(tmp_path):
    return str(_write_panel(tmp_path / "panel.csv"))


def _base(path, outcome="y"):
    return ["--data", path, "--unit", "id", "--time", "year", "--outcome", outcome, "--treatment", "d"]


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_assess(panel_csv, tmp_path, capsys):
    out = tmp_path / "assess.json"
    code, text, _ = _run(["assess", *_base(panel_csv, "y,z"), "--bootstrap", "50", "--output", str(out)], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert [(r["outcome"], r["order"]) for r in doc["results"]] == [("y", 1), ("y", 2), ("z", 1), ("z", 2)]
    for r in doc["results"]:
        assert r["equiv_bound"] > 0 and r["ci_lower"] <= r["point"] <= r["ci_upper"]
    assert doc["rng"] and doc["seed"] == 0 and doc["config"]["bootstrap"] == 50
    assert (tmp_path / "assess.txt").read_text() == text
    assert "equivalence CI" in text


@pytest.mark.parametrize("regime, n_components", [("extended", 3), ("trends-in-trends", 2)])
def test_estimate_regimes(panel_csv, tmp_path, capsys, regime, n_components):
    out = tmp_path / "est.json"
    code, _, _ = _run(["estimate", *_base(panel_csv), "--regime", regime, "--bootstrap", "60",
                       "--output", str(out)], capsys)
    assert code == 0
    r = json.loads(out.read_text())["results"][0]
    assert len(r["weights"]) == len(r["components"]) == n_components
    assert sum(r["weights"]) == pytest.approx(1.0)
    assert r["weight_provenance"] == "estimated-optimal"


def test_estimate_with_covariates(panel_csv, capsys):
    code, text, _ = _run(["estimate", *_base(panel_csv), "--regime", "extended", "--covariates", "x",
                          "--bootstrap", "40"], capsys)
    assert code == 0 and "standard-regression" in text


def test_estimate_staggered(tmp_path, capsys):
    data = staggered_panel(np.random.default_rng(0), [2] * 10 + [3] * 10 + [None] * 10, 5)
    path = tmp_path / "sa.csv"
    data.to_csv(path)
    code, text, _ = _run(["estimate", "--data", str(path), "--unit", "unit", "--time", "time", "--outcome", "outcome",
                          "--treatment", "treatment", "--design", "sa", "--regime", "extended", "--bootstrap", "40"],
                         capsys)
    assert code == 0
    assert "average" in text and "period 2" in text and "period 3" in text


def test_plot_data(panel_csv, tmp_path, capsys):
    out = tmp_path / "means.csv"
    code, _, _ = _run(["plot-data", *_base(panel_csv), "--output", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert list(rows[0]) == ["group", "time", "mean", "n"]
    assert len(rows) == 8 and all(int(r["n"]) == 20 for r in rows)


def test_simulate_small_and_fast(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    start = time.perf_counter()
    code, text, _ = _run(["simulate", "--n", "200", "-M", "1", "--bootstrap", "50", "--output", str(out)], capsys)
    assert time.perf_counter() - start < 1.0
    assert code == 0
    assert len(list(csv.DictReader(open(out)))) == 4
    assert json.loads(out.with_suffix(".json").read_text())["config"]["simulation"]["replications"] == 1
    assert "double" in text


@pytest.mark.parametrize("argv, message", [
    (["simulate", "--rho", "1.0", "-M", "1"], "rho"),
    (["assess", "--data", "/no/such.csv", "--unit", "id", "--time", "year", "--outcome", "y",
      "--treatment", "d"], "no such file"),
])
def test_domain_errors_exit_2(argv, message, capsys):
    code, _, err = _run(argv, capsys)
    assert code == 2 and message in err


def test_too_few_pre_periods_exit_2(tmp_path, capsys):
    path = str(_write_panel(tmp_path / "short.csv", periods=2))
    code, _, err = _run(["estimate", *_base(path), "--regime", "trends-in-trends", "--bootstrap", "20"], capsys)
    assert code == 2 and "pre-treatment" in err


def test_missing_column_exit_2(panel_csv, capsys):
    code, _, err = _run(["assess", *_base(panel_csv, "income")], capsys)
    assert code == 2 and "income" in err


def test_outputs_byte_identical(panel_csv, tmp_path, capsys):
    out = tmp_path / "r.json"
    argv = ["estimate", *_base(panel_csv), "--regime", "extended", "--bootstrap", "60", "--output", str(out)]
    main(argv)
    first = out.read_bytes()
    main(argv + ["--workers", "3"])
    assert out.read_bytes() == first
    capsys.readouterr()
