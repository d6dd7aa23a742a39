"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

import json
import os
import time
from dataclasses import replace

import numpy as np
from scipy.stats import norm

from doubledid.cli import main
from doubledid.did_estimators import did_extended, did_kdid, did_sequential, did_standard, kdid_contrast
from doubledid.fe_regression import RESULTS, did_regression, double_did_regression, equivalence_oracles
from doubledid.gmm import (
    MomentVector, WeightMatrix, double_did, gmm_combine, objective, optimal_weight, preset_weight,
)
from doubledid.inference import BootstrapSpec, bootstrap_vcov, equivalence_ci, pretrend_test
from doubledid.monte_carlo import SimulationConfig, analytic_bias, run_study
from doubledid.panel_data import PanelDataset
from doubledid.staggered import cohort_shares, sa_component, sa_double_did, sa_pretrend, sa_regression
from helpers import polynomial_panel, random_panel, random_rcs, staggered_panel

PANEL_ONLY = {"standard-twfe", "extended-twfe", "sequential-transformed-panel", "sequential-unit-trends",
              "leads-panel"}


def _oracle_data(which, i):
    rng = np.random.default_rng(1000 + i)
    if which in PANEL_ONLY:
        return random_panel(rng, periods=int(rng.integers(3, 6)), start=int(rng.integers(-3, 3)))
    if i % 3 == 0:
        return random_rcs(rng, periods=int(rng.integers(3, 6)))
    return random_panel(rng, periods=int(rng.integers(3, 6)), balanced=i % 3 == 2)


def test_criterion_1_regression_equivalences(criterion):
    start = time.perf_counter()
    worst = {}
    for which in RESULTS:
        gaps = []
        for i in range(200):
            lhs, rhs = equivalence_oracles(_oracle_data(which, i), which)
            gaps.append(abs(lhs - rhs))
        worst[which] = max(gaps)
    elapsed = time.perf_counter() - start
    ok = all(v < 1e-8 for v in worst.values()) and elapsed < 30
    criterion(1, "regression/DID equivalence oracles, 200 datasets each", ok,
              f"max gap {max(worst.values()):.1e}, {elapsed:.1f} s")


def test_criterion_2_preset_recovery(criterion):
    worst = 0.0
    for i in range(100):
        data = random_panel(np.random.default_rng(i), balanced=i % 2 == 0)
        m = MomentVector([did_standard(data).value, did_sequential(data).value])
        pairs = [("standard", did_standard(data).value), ("extended", did_extended(data).value),
                 ("sequential", did_sequential(data).value)]
        for name, want in pairs:
            worst = max(worst, abs(gmm_combine(m, preset_weight(name)).point - want))
    criterion(2, "preset weight matrices reproduce the three DID estimators", worst < 1e-12, f"max gap {worst:.1e}")


def _random_pd(rng, k):
    a = rng.normal(size=(k, k))
    return a @ a.T + 0.1 * np.eye(k)


def test_criterion_3_gmm_closed_form(criterion):
    rng = np.random.default_rng(3)
    worst_obj = worst_sum = 0.0
    dominance = True
    for _ in range(500):
        k = int(rng.integers(2, 5))
        V = _random_pd(rng, k)
        m = MomentVector(rng.normal(size=k))
        w = optimal_weight(V)
        res = gmm_combine(m, w, V)
        lo, hi = m.estimates.min() - 1, m.estimates.max() + 1
        grid = np.linspace(lo, hi, 20001)
        # refine around the coarse minimum
        c = grid[np.argmin([objective(t, m, w) for t in grid])]
        fine = np.linspace(c - 2e-4, c + 2e-4, 4001)
        gmin = min(objective(t, m, w) for t in fine)
        worst_obj = max(worst_obj, objective(res.point, m, w) - gmin)
        worst_sum = max(worst_sum, abs(res.weights.sum() - 1))
        others = [WeightMatrix(np.diag(rng.uniform(0.1, 2, k))), WeightMatrix(np.eye(k))]
        if k == 2:
            others += [preset_weight(p) for p in ("standard", "extended", "sequential")]
        for o in others:
            v = gmm_combine(m, o, V).variance
            dominance &= res.variance <= v * (1 + 1e-12)
    ok = worst_obj < 1e-10 and worst_sum < 1e-12 and dominance
    criterion(3, "closed-form GMM minimizer, weight sum, variance dominance", ok,
              f"objective excess {worst_obj:.1e}, weight-sum error {worst_sum:.1e}")


def test_criterion_4_kdid(criterion):
    worst_red = 0.0
    for i in range(50):
        data = random_panel(np.random.default_rng(i), periods=4, balanced=i % 2 == 0)
        worst_red = max(worst_red, abs(did_kdid(data, 1, 0).value - did_standard(data).value),
                        abs(did_kdid(data, 2, 0).value - did_sequential(data).value))
    worst_poly = 0.0
    for k in range(1, 5):
        for s in range(4):
            coefs = np.random.default_rng(10 * k + s).normal(size=k)
            data = polynomial_panel(coefs, tau=0.7, periods=4 + s + 1, onset=4)
            worst_poly = max(worst_poly, abs(did_kdid(data, k, s).value - 0.7))
    ok = worst_red < 1e-12 and worst_poly < 1e-9
    criterion(4, "k-th order reductions and polynomial recovery (k<=4, s<=3)", ok,
              f"reduction gap {worst_red:.1e}, polynomial gap {worst_poly:.1e}")


def test_criterion_5_simulation(criterion):
    workers = int(os.environ.get("DDID_WORKERS", min(4, os.cpu_count() or 1)))
    base = SimulationConfig(n=1000, rho=0.6, replications=1000, seed=2024, bootstrap_iterations=200)
    t0 = time.perf_counter()
    s1 = run_study(replace(base, scenario="1"), workers)
    t1 = time.perf_counter()
    s2 = run_study(replace(base, scenario="2"), workers)
    t2 = time.perf_counter()
    b1, se1, b2 = s1.abs_bias, s1.se, s2.abs_bias
    ext_oracle = analytic_bias(s2.config)["extended"]
    ok1 = all(b1[e] < 0.02 for e in ("double", "extended", "sequential")) and \
        se1["double"] <= se1["extended"] + 0.005 and se1["double"] <= se1["sequential"] + 0.005
    ok2 = b2["double"] < 0.02 and b2["sequential"] < 0.02 and b2["extended"] > 0.1 and \
        abs(b2["extended"] - ext_oracle) < 0.02
    ok = ok1 and ok2 and t1 - t0 < 180 and t2 - t1 < 180
    criterion(5, "simulation study, both scenarios at n=1000, rho=0.6, M=1000", ok,
              f"scenario 1 bias double/extended/sequential {b1['double']:.3f}/{b1['extended']:.3f}/"
              f"{b1['sequential']:.3f}, SE {se1['double']:.3f}/{se1['extended']:.3f}/{se1['sequential']:.3f}; "
              f"scenario 2 bias {b2['double']:.3f}/{b2['extended']:.3f} (oracle {ext_oracle:.2f})/"
              f"{b2['sequential']:.3f}; {t1 - t0:.0f} s + {t2 - t1:.0f} s")


def test_criterion_6_coverage(criterion):
    workers = int(os.environ.get("DDID_WORKERS", min(4, os.cpu_count() or 1)))
    res = run_study(SimulationConfig(n=500, scenario="1", replications=500, seed=77, bootstrap_iterations=200), workers)
    cov = res.coverage(0.90)["standard"]
    criterion(6, "90% bootstrap CI coverage of the standard DID", abs(cov - 0.90) <= 0.04, f"coverage {cov:.3f}")


def test_criterion_7_equivalence(criterion):
    rng = np.random.default_rng(7)
    z = norm.ppf(0.95)
    exact = True
    for _ in range(1000):
        point, se = rng.normal(scale=2), rng.exponential()
        eq = equivalence_ci(point, se)
        exact &= eq.bound == max(abs(point - z * se), abs(point + z * se))
        exact &= eq.bound == max(abs(eq.ci_lower), abs(eq.ci_upper))
    # worked example: estimate -0.007 with SE 0.096 on a standardized outcome
    worked = equivalence_ci(-0.007, 0.096, baseline=(0.0, 1.0)).bound
    ok = exact and abs(worked - 0.165) < 5e-4
    criterion(7, "equivalence bound is the larger endpoint of the 90% CI", ok, f"worked example bound {worked:.4f}")


def test_criterion_8_staggered(criterion):
    worst = 0.0
    spec = BootstrapSpec(100, seed=8)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        sa = staggered_panel(rng, [3] * 10 + [None] * 12, 5)
        x = rng.normal(size=(sa.n_obs, 1))
        sa = PanelDataset.from_arrays(sa.unit, sa.time, sa.outcome, sa.treated, covariates=x,
                                      covariate_names=("x",), design="staggered")
        basic = PanelDataset.from_arrays(sa.unit, sa.time, sa.outcome, sa.treated, covariates=x,
                                         covariate_names=("x",))
        rep = sa_double_did(sa, spec=spec)
        ref = double_did(basic, "extended", spec=spec)
        gap = sa_pretrend(sa, spec=spec)[0].report
        pre = pretrend_test(basic, 1, spec)
        worst = max(worst,
                    abs(rep.per_period[0].gmm.point - ref.point), abs(rep.average.point - ref.point),
                    abs(rep.average.se - ref.se), abs(gap.point - pre.point), abs(gap.se - pre.se),
                    abs(sa_regression(sa, 3, True) - did_regression(basic, True)),
                    abs(sa_regression(sa, 3, True, "sequential") - did_regression(basic, True, "sequential")),
                    *(abs(sa_component(sa, 3, s, k).value - did_kdid(basic, k, s).value)
                      for k in (1, 2, 3) for s in (0, 1)))
    toy = staggered_panel(np.random.default_rng(0), [2, 2, 3, None], 5)
    pi = cohort_shares(toy, [2, 3])
    three = cohort_shares(staggered_panel(np.random.default_rng(0), [1, 2, 2, 2, 3, 3, None], 5))
    ok_pi = abs(pi[2] - 2 / 3) < 1e-15 and abs(pi[3] - 1 / 3) < 1e-15 and \
        abs(sum(three.values()) - 1) < 1e-15 and abs(three[2] - 0.5) < 1e-15
    criterion(8, "single-cohort staggered reductions and cohort shares", worst < 1e-12 and ok_pi,
              f"max gap {worst:.1e}")


def _json_runs(tmp_path, argv, workers):
    out = tmp_path / "run.json"
    os.environ["DDID_WORKERS"] = str(workers)
    try:
        assert main(argv + ["--output", str(out)]) == 0
    finally:
        del os.environ["DDID_WORKERS"]
    path = out.with_suffix(".json") if argv[0] == "simulate" else out
    return path.read_bytes()


def test_criterion_9_determinism(criterion, tmp_path, capsys):
    rng = np.random.default_rng(9)
    data = random_panel(rng, n_units=30, periods=4, covariates=1)
    csv_path = tmp_path / "panel.csv"
    data.to_csv(csv_path)
    sa = staggered_panel(rng, [2] * 8 + [3] * 8 + [None] * 8, 5)
    sa_path = tmp_path / "sa.csv"
    sa.to_csv(sa_path)
    cols = ["--unit", "unit", "--time", "time", "--outcome", "outcome", "--treatment", "treatment"]

    def library(workers):
        spec = BootstrapSpec(60, seed=5, workers=workers)
        fns = [lambda d, w: kdid_contrast(d, 1).value(d, w)]
        doc = {
            "bootstrap": bootstrap_vcov(data, fns, spec).vcov.tolist(),
            "double": double_did(data, "extended", spec=spec).point,
            "regression": double_did_regression(data, True, spec).point,
            "pretrend": json.loads(pretrend_test(data, 2, spec).to_json()),
            "sa": sa_double_did(sa, spec=spec).average.point,
            "sa_pretrend": [json.loads(g.report.to_json()) for g in sa_pretrend(sa, spec=spec)],
        }
        return json.dumps(doc, sort_keys=True).encode()

    runs = {
        "library": [library(1), library(1), library(3)],
        "assess": [_json_runs(tmp_path, ["assess", "--data", str(csv_path), *cols, "--bootstrap", "40"], w)
                   for w in (1, 1, 3)],
        "estimate": [_json_runs(tmp_path, ["estimate", "--data", str(csv_path), *cols, "--regime", "extended",
                                           "--covariates", "x0", "--bootstrap", "40"], w) for w in (1, 1, 3)],
        "estimate-sa": [_json_runs(tmp_path, ["estimate", "--data", str(sa_path), *cols, "--design", "sa",
                                              "--regime", "extended", "--bootstrap", "40"], w) for w in (1, 1, 3)],
        "simulate": [_json_runs(tmp_path, ["simulate", "--n", "100", "-M", "6", "--bootstrap", "30"], w)
                     for w in (1, 1, 2)],
    }
    capsys.readouterr()
    same = {k: len(set(v)) == 1 for k, v in runs.items()}
    criterion(9, "byte-identical JSON across runs and worker counts", all(same.values()),
              ", ".join(f"{k}: {'same' if v else 'differs'}" for k, v in same.items()))
