"""Command-line interface: ``ddid {assess,estimate,simulate,plot-data}``.

Every run writes a JSON document (the machine interface) embedding the
tool version, the fully resolved configuration and the seed; the text
shown on stdout is rendered from that document. Exit codes: 0 success,
1 internal error, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .exceptions import DataError, DomainError
from .fe_regression import double_did_regression
from .gmm import default_orders, double_did, gmm_combine, preset_weight
from .inference import RNG_NAME, BootstrapSpec, default_workers, make_report, pretrend_test
from .monte_carlo import SimulationConfig, run_study
from .panel_data import BASIC, STAGGERED, ColumnSchema, group_time_means, load_csv
from .staggered import sa_double_did, sa_pretrend


@dataclass
class RunConfig:
    subcommand: str
    data: str | None = None
    unit: str | None = None
    time: str | None = None
    outcome: list[str] = field(default_factory=list)
    treatment: str | None = None
    cluster: str | None = None
    group: str | None = None
    covariates: list[str] = field(default_factory=list)
    mode: str = "panel"
    design: str = "basic"
    regime: str | None = None
    orders: list[int] | None = None
    lead: int = 0
    bootstrap: int = 500
    seed: int = 0
    level: float = 0.95
    depth: int = 1
    periods: list[int] | None = None
    output: str | None = None
    simulation: dict | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _csv_list(text: str | None, cast=str) -> list:
    if not text:
        return []
    return [cast(x.strip()) for x in text.split(",") if x.strip()]


def _add_data_args(p: argparse.ArgumentParser, outcome_help: str):
    p.add_argument("--data", required=True, help="long-format CSV file (UTF-8, header row)")
    p.add_argument("--unit", required=True, help="unit identifier column")
    p.add_argument("--time", required=True, help="integer period column")
    p.add_argument("--outcome", required=True, help=outcome_help)
    p.add_argument("--treatment", required=True, help="treatment indicator column (0/1/true/false)")
    p.add_argument("--cluster", help="resampling/assignment cluster column (default: unit)")
    p.add_argument("--group", help="treatment-group column (repeated cross-sections)")
    p.add_argument("--mode", choices=["panel", "rcs"], default="panel")
    p.add_argument("--design", choices=["basic", "sa"], default="basic")
    p.add_argument("--output", help="write the JSON report here (text goes to a .txt sibling)")


def _add_boot_args(p: argparse.ArgumentParser):
    p.add_argument("--bootstrap", type=int, default=500, help="bootstrap iterations (default 500)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")
    p.add_argument("--workers", type=int, default=None, help="threads for resampling (env DDID_WORKERS)")
    p.add_argument("--periods", help="comma-separated adoption periods (staggered design)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddid", description="Double difference-in-differences toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("assess", help="pre-trend estimates, p-values and equivalence intervals")
    _add_data_args(p, "outcome column(s), comma-separated")
    _add_boot_args(p)
    p.add_argument("--depth", type=int, default=1, help="number of pre-trend gaps (staggered design)")

    p = sub.add_parser("estimate", help="double DID estimate of the treatment effect")
    _add_data_args(p, "outcome column(s), comma-separated")
    _add_boot_args(p)
    p.add_argument("--regime", required=True, choices=["extended", "trends-in-trends"],
                   help="identifying assumption (chosen by the analyst)")
    p.add_argument("--orders", help="comma-separated difference orders to combine")
    p.add_argument("--lead", type=int, default=0, help="periods after adoption (default 0)")
    p.add_argument("--covariates", help="comma-separated covariate columns (regression path)")

    p = sub.add_parser("simulate", help="Monte Carlo study on simulated panels")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--periods", type=int, default=5)
    p.add_argument("--scenario", default="extended-parallel-trends",
                   help="extended-parallel-trends (1), trends-in-trends (2) or polynomial")
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--tau", type=float, default=0.2)
    p.add_argument("--replications", "-M", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--innovation-var", type=float, default=3.0)
    p.add_argument("--poly-coefs", help="comma-separated confounding polynomial coefficients")
    p.add_argument("--max-order", type=int)
    p.add_argument("--bootstrap", type=int, default=200)
    p.add_argument("--workers", type=int, default=None, help="processes (env DDID_WORKERS)")
    p.add_argument("--output", help="results CSV path (JSON written to a .json sibling)")

    p = sub.add_parser("plot-data", help="group-by-period means for plotting")
    _add_data_args(p, "outcome column")
    return parser


# --------------------------------------------------------------- commands
def _schema(args, outcome: str, covariates=()) -> ColumnSchema:
    return ColumnSchema(args.unit, args.time, outcome, args.treatment, args.cluster, tuple(covariates), args.group)


def _load(args, outcome: str, covariates=()):
    design = STAGGERED if args.design == "sa" else BASIC
    return load_csv(args.data, _schema(args, outcome, covariates), mode=args.mode, design=design)


def _config(args, **extra) -> RunConfig:
    cfg = RunConfig(args.subcommand)
    for k in ("data", "unit", "time", "treatment", "cluster", "group", "mode", "design", "regime", "lead",
              "bootstrap", "seed", "level", "depth", "output"):
        if hasattr(args, k):
            setattr(cfg, k, getattr(args, k))
    if hasattr(args, "outcome") and isinstance(args.outcome, str):
        cfg.outcome = _csv_list(args.outcome)
    cfg.covariates = _csv_list(getattr(args, "covariates", None))
    if getattr(args, "periods", None) and args.subcommand != "simulate":
        cfg.periods = _csv_list(args.periods, int)
    for k, v in extra.items():
        setattr(cfg, k, v)
    return cfg


def _spec(args) -> BootstrapSpec:
    workers = args.workers if args.workers is not None else default_workers()
    return BootstrapSpec(args.bootstrap, args.seed, workers=workers)


def _gmm_report(kind, g, level, extra_notes=()):
    comps = [(lab, v, se) for lab, v, se in zip(g.moments.labels, g.moments.estimates,
                                                 (g.vcov.diagonal() ** 0.5) if g.vcov is not None else
                                                 [None] * len(g.moments))]
    rep = make_report(kind, g.point, g.se, level, weights=g.weights, components=comps,
                      notes=tuple(extra_notes) + g.notes)
    d = rep.to_dict()
    d["weight_provenance"] = g.weight_matrix.provenance
    d["j_stat"] = g.j_stat
    return d


def cmd_assess(args) -> tuple[RunConfig, list]:
    cfg = _config(args)
    spec = _spec(args)
    results = []
    for outcome in cfg.outcome:
        data = _load(args, outcome)
        if data.design == STAGGERED:
            for gap in sa_pretrend(data, cfg.periods, args.depth, spec, args.level):
                row = {"outcome": outcome, "gap": gap.gap, "periods": list(gap.periods)}
                row.update(gap.report.to_dict())
                results.append(row)
        else:
            orders = [1, 2] if data.onset >= 3 else [1]
            for order in orders:
                rep = pretrend_test(data, order, spec, args.level)
                row = {"outcome": outcome, "order": order}
                row.update(rep.to_dict())
                results.append(row)
    return cfg, results


def cmd_estimate(args) -> tuple[RunConfig, list]:
    cfg = _config(args)
    orders = _csv_list(args.orders, int) or None
    spec = _spec(args)
    results = []
    for outcome in cfg.outcome:
        data = _load(args, outcome, cfg.covariates)
        if data.design == STAGGERED:
            rep = sa_double_did(data, cfg.periods, args.lead, spec, args.regime, orders)
            row = {"outcome": outcome, "orders": list(rep.orders), "periods": list(rep.periods),
                   "average": _gmm_report("sa-double-did", rep.average, args.level, data.notes + rep.notes),
                   "per_period": [
                       dict(period=p.period, share=p.share, n_treated=p.n_treated,
                            **_gmm_report("double-did", p.gmm, args.level)) for p in rep.per_period
                   ]}
            cfg.orders = list(rep.orders)
        elif cfg.covariates:
            if orders or args.lead:
                raise DomainError("--orders and --lead are not available with covariates")
            g = double_did_regression(data, cfg.covariates, spec)
            if args.regime == "trends-in-trends":
                g = gmm_combine(g.moments, preset_weight("sequential"), g.vcov)
            row = {"outcome": outcome, **_gmm_report("double-did-regression", g, args.level, data.notes)}
        else:
            use = orders or list(default_orders(args.regime, data.onset))
            g = double_did(data, args.regime, use, args.lead, spec)
            cfg.orders = use
            row = {"outcome": outcome, **_gmm_report("double-did", g, args.level, data.notes)}
        results.append(row)
    return cfg, results


def cmd_simulate(args) -> tuple[RunConfig, list]:
    sim = SimulationConfig(
        n=args.n, periods=args.periods, scenario=args.scenario, rho=args.rho, tau=args.tau,
        replications=args.replications, seed=args.seed, innovation_var=args.innovation_var,
        poly_coefs=tuple(_csv_list(args.poly_coefs, float)), max_order=args.max_order,
        bootstrap_iterations=args.bootstrap,
    )
    workers = args.workers if args.workers is not None else default_workers()
    res = run_study(sim, workers)
    cfg = RunConfig("simulate", seed=sim.seed, output=args.output, bootstrap=sim.bootstrap_iterations,
                    simulation={**asdict(sim), "orders": list(sim.orders)})
    if args.output:
        res.write_csv(args.output)
    rows = res.rows()
    cov = res.coverage()
    for r in rows:
        r["coverage"] = cov[r["estimator"]]
    return cfg, rows


def cmd_plot_data(args) -> tuple[RunConfig, list]:
    cfg = _config(args)
    results = []
    if len(cfg.outcome) != 1:
        raise DomainError("plot-data takes exactly one outcome column")
    data = _load(args, cfg.outcome[0])
    table = group_time_means(data, by_cohort=data.design == STAGGERED)
    for rec in table.to_dict("records"):
        results.append({"group": rec["group"], "time": int(rec["time"]),
                        "mean": float(rec["mean"]), "n": int(rec["n"])})
    return cfg, results


# --------------------------------------------------------------- rendering
def document(cfg: RunConfig, results: list) -> dict:
    return {"tool": "ddid", "version": __version__, "rng": RNG_NAME, "seed": cfg.seed,
            "config": cfg.to_dict(), "results": results}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    if v is None:
        return "-"
    return str(v)


def render_text(doc: dict) -> str:
    """Human-readable rendering of a JSON report document."""
    cfg = doc["config"]
    lines = [f"ddid {doc['version']} {cfg['subcommand']} (seed {doc['seed']})"]
    sub = cfg["subcommand"]
    for r in doc["results"]:
        if sub == "plot-data":
            lines.append(f"group={r['group']}  time={r['time']}  mean={_fmt(r['mean'])}  n={r['n']}")
        elif sub == "simulate":
            lines.append(f"{r['estimator']:<11} abs_bias={_fmt(r['abs_bias'])}  se={_fmt(r['se'])}  "
                         f"coverage={_fmt(r['coverage'])}  (n={r['n']}, rho={r['rho']}, M={r['M']})")
        elif sub == "assess":
            tag = f"gap {r['gap']}" if "gap" in r else f"order {r['order']}"
            lines.append(f"{r['outcome']} [{tag}] estimate={_fmt(r['point'])}  se={_fmt(r['se'])}  "
                         f"p={_fmt(r['p_value'])}  equivalence CI=[-{_fmt(r['equiv_bound'])}, {_fmt(r['equiv_bound'])}]")
        else:
            blocks = [("average", r["average"])] + [(f"period {p['period']}", p) for p in r["per_period"]] \
                if "average" in r else [("", r)]
            for name, b in blocks:
                head = f"{r['outcome']} {name}".rstrip()
                lines.append(f"{head}: estimate={_fmt(b['point'])}  se={_fmt(b['se'])}  "
                             f"CI=[{_fmt(b['ci_lower'])}, {_fmt(b['ci_upper'])}]  "
                             f"weights=({', '.join(_fmt(w) for w in b['weights'])})")
                for c in b.get("components", []):
                    lines.append(f"    {c['label']:<12} {_fmt(c['point'])}  (se {_fmt(c['se'])})")
                for note in b["notes"]:
                    lines.append(f"    note: {note}")
        if sub == "assess":
            for note in r.get("notes", []):
                lines.append(f"    note: {note}")
    return "\n".join(lines) + "\n"


COMMANDS = {"assess": cmd_assess, "estimate": cmd_estimate, "simulate": cmd_simulate, "plot-data": cmd_plot_data}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, results = COMMANDS[args.subcommand](args)
        doc = document(cfg, results)
        text = render_text(doc)
        payload = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        out = getattr(args, "output", None)
        if out and args.subcommand == "simulate":
            Path(out).with_suffix(".json").write_text(payload, encoding="utf-8")
        elif out and args.subcommand == "plot-data":
            _write_plot_csv(out, results)
        elif out:
            Path(out).write_text(payload, encoding="utf-8")
            Path(out).with_suffix(".txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return 0
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - reported, not handled
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _write_plot_csv(path, results):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "time", "mean", "n"])
        for r in results:
            w.writerow([r["group"], r["time"], repr(r["mean"]), r["n"]])


if __name__ == "__main__":
    sys.exit(main())
