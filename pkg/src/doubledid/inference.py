"""Cluster bootstrap, confidence intervals, equivalence bounds and reports.

Resampling draws whole clusters with replacement. A replicate is
represented by its multiplicity vector (how often each cluster was drawn);
estimators evaluated with those multiplicities as observation weights give
exactly the estimate on the duplicated-cluster sample.

Random streams are counter-based: replicate ``b`` (and its ``r``-th redraw)
always uses ``Philox`` seeded from ``SeedSequence(seed, spawn_key=(*stream,
b, r))``, so results do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .did_estimators import DidContrast, kdid_contrast
from .exceptions import DataError, DomainError, UnstableResamplingError
from .panel_data import PanelDataset

Estimator = DidContrast | Callable[[PanelDataset, "np.ndarray | None"], float]

RNG_NAME = "numpy.random.Philox (4x64, counter-based) via SeedSequence spawn keys"
MAX_DEGENERATE_FRACTION = 0.2


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("DDID_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class BootstrapSpec:
    """Settings for the cluster bootstrap.

    ``cluster_level`` is ``"cluster"`` (the dataset's cluster column, which
    defaults to the unit) or ``"unit"``.
    """

    iterations: int = 500
    seed: int = 0
    cluster_level: str = "cluster"
    max_redraws: int = 50
    workers: int = field(default_factory=default_workers)

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 2:
            raise DomainError("bootstrap iterations must be an integer >= 2")
        if self.cluster_level not in ("cluster", "unit"):
            raise DomainError("cluster_level must be 'cluster' or 'unit'")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


def replicate_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def _cluster_codes(data: PanelDataset, level: str) -> tuple[np.ndarray, int]:
    if level == "unit":
        return data.unit, data.n_units
    return data.cluster, data.n_clusters


def draw_multiplicities(spec: BootstrapSpec, n_clusters: int, b: int, redraw: int = 0,
                        stream: Sequence[int] = ()) -> np.ndarray:
    rng = replicate_rng(spec.seed, *stream, b, redraw)
    return np.bincount(rng.integers(0, n_clusters, n_clusters), minlength=n_clusters).astype(float)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Full-sample estimates, replicate matrix (B x K) and its covariance."""

    estimates: np.ndarray
    replicates: np.ndarray
    vcov: np.ndarray
    redraws: int
    multiplicities: np.ndarray | None = field(default=None, repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov))


def empirical_vcov(replicates: np.ndarray) -> np.ndarray:
    """Covariance of replicate rows with divisor B (not B - 1)."""
    r = np.asarray(replicates, dtype=float)
    c = r - r.mean(axis=0)
    v = c.T @ c / r.shape[0]
    return (v + v.T) / 2


class _CellEngine:
    """Vectorized replicate evaluation for batteries of linear contrasts."""

    def __init__(self, data: PanelDataset, contrasts: Sequence[DidContrast], codes: np.ndarray, n_clusters: int):
        keys: dict = {}
        sums, counts = [], []
        coef_rows = []
        for con in contrasts:
            row = {}
            for _, mask, t, c in con.cells():
                key = (mask.tobytes(), t)
                if key not in keys:
                    sel = mask[data.unit] & (data.time == t)
                    keys[key] = len(sums)
                    sums.append(np.bincount(codes[sel], weights=data.outcome[sel], minlength=n_clusters))
                    counts.append(np.bincount(codes[sel], minlength=n_clusters).astype(float))
                j = keys[key]
                row[j] = row.get(j, 0.0) + c
            coef_rows.append(row)
        self.sums = np.array(sums)
        self.counts = np.array(counts)
        self.coefs = np.zeros((len(contrasts), len(sums)))
        for i, row in enumerate(coef_rows):
            for j, c in row.items():
                self.coefs[i, j] = c

    def evaluate(self, mult: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (values B x K, degenerate flags B) for multiplicity rows ``mult``."""
        s = mult @ self.sums.T
        n = mult @ self.counts.T
        bad = np.any(n == 0, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(n > 0, s / np.where(n > 0, n, 1.0), 0.0)
        return means @ self.coefs.T, bad


def bootstrap_vcov(data: PanelDataset, battery: Sequence[Estimator], spec: BootstrapSpec,
                   stream: Sequence[int] = ()) -> BootstrapResult:
    """Cluster-bootstrap covariance of a battery of estimators.

    Each battery item is either a :class:`DidContrast` (fast vectorized
    path) or a callable ``f(data, obs_weights) -> float`` where
    ``obs_weights`` is ``None`` for the full sample. Replicates on which some
    estimator is undefined (an empty cell, a rank-deficient design) are
    redrawn from the next stream counter; if more than 20% of first draws
    are degenerate, or redraws run out, :class:`UnstableResamplingError` is
    raised.
    """
    battery = list(battery)
    if not battery:
        raise DomainError("empty estimator battery")
    codes, n_clusters = _cluster_codes(data, spec.cluster_level)
    B = int(spec.iterations)
    linear = all(isinstance(e, DidContrast) for e in battery)

    if linear:
        estimates = np.array([e.value(data) for e in battery])
        engine = _CellEngine(data, battery, codes, n_clusters)

        def run(bs: np.ndarray, redraw: int):
            mult = np.array([draw_multiplicities(spec, n_clusters, b, redraw, stream) for b in bs])
            vals, bad = engine.evaluate(mult)
            return vals, bad, mult
    else:
        estimates = np.array([_call(e, data, None) for e in battery])

        def one(b: int, redraw: int):
            mult = draw_multiplicities(spec, n_clusters, b, redraw, stream)
            w = mult[codes]
            try:
                return np.array([_call(e, data, w) for e in battery]), False, mult
            except DataError:
                return np.full(len(battery), np.nan), True, mult

        def run(bs: np.ndarray, redraw: int):
            if spec.workers > 1 and len(bs) > 1:
                with ThreadPoolExecutor(spec.workers) as ex:
                    out = list(ex.map(lambda b: one(int(b), redraw), bs))
            else:
                out = [one(int(b), redraw) for b in bs]
            return (np.array([o[0] for o in out]), np.array([o[1] for o in out], dtype=bool),
                    np.array([o[2] for o in out]))

    reps, bad, mults = run(np.arange(B), 0)
    n_bad = int(bad.sum())
    if n_bad > MAX_DEGENERATE_FRACTION * B:
        raise UnstableResamplingError(
            f"{n_bad} of {B} bootstrap replicates hit an undefined estimator (empty cell); "
            "too few clusters in some group/period"
        )
    redraws = 0
    for r in range(1, spec.max_redraws + 1):
        idx = np.flatnonzero(bad)
        if len(idx) == 0:
            break
        redraws += len(idx)
        vals, still, m = run(idx, r)
        reps[idx] = vals
        bad[idx] = still
        mults[idx] = m
    if bad.any():
        raise UnstableResamplingError(f"bootstrap replicates still degenerate after {spec.max_redraws} redraws")
    return BootstrapResult(estimates, reps, empirical_vcov(reps), redraws, mults)


def _call(est, data, w) -> float:
    if isinstance(est, DidContrast):
        return est.value(data, w)
    return float(est(data, w))


# ---------------------------------------------------------- intervals
def normal_ci(point: float, se: float, level: float) -> tuple[float, float]:
    z = norm.ppf(0.5 + level / 2)
    return point - z * se, point + z * se


def p_value(point: float, se: float) -> float:
    """Two-sided normal p-value for H0: effect = 0."""
    if se == 0:
        return 0.0 if point != 0 else 1.0
    return float(2 * norm.sf(abs(point) / se))


@dataclass(frozen=True)
class EquivalenceCI:
    """Symmetric equivalence interval ``[-bound, bound]``.

    ``ci_lower``/``ci_upper`` are the (possibly standardized) ends of the
    ``1 - 2 * (1 - level)`` normal CI that the bound is read from.
    """

    bound: float
    standardized: bool
    baseline_mean: float | None
    baseline_sd: float | None
    ci_lower: float
    ci_upper: float
    level: float = 0.95

    @property
    def interval(self) -> tuple[float, float]:
        return -self.bound, self.bound


def equivalence_ci(point: float, se: float, baseline: tuple[float, float] | None = None,
                   level: float = 0.95) -> EquivalenceCI:
    """Smallest symmetric range around zero consistent with the data.

    Takes the normal CI with two-sided coverage ``2 * level - 1`` (90% for
    the default 95% equivalence level) and returns ``b = max(|lower|,
    |upper|)``. With ``baseline = (mean, sd)`` both ends are divided by the
    baseline standard deviation first.
    """
    if se < 0 or not math.isfinite(se):
        raise DomainError("standard error must be finite and nonnegative")
    if not 0.5 < level < 1:
        raise DomainError("equivalence level must lie in (0.5, 1)")
    z = norm.ppf(level)
    lo, hi = point - z * se, point + z * se
    mean = sd = None
    if baseline is not None:
        mean, sd = float(baseline[0]), float(baseline[1])
        if not sd > 0:
            raise DomainError("baseline standard deviation is zero; cannot standardize")
        lo, hi = lo / sd, hi / sd
    return EquivalenceCI(max(abs(lo), abs(hi)), baseline is not None, mean, sd, lo, hi, level)


def baseline_stats(data: PanelDataset) -> tuple[float, float]:
    """Mean and SD (ddof=1) of control outcomes in the earliest period.

    Controls are never-treated units; if there are none, every unit
    untreated in the earliest period.
    """
    never = ~np.isfinite(data.adoption)
    first = data.time == 0
    sel = first & (never[data.unit] if never.any() else ~data.treated)
    y = data.outcome[sel]
    if len(y) < 2:
        raise DomainError("need at least two control observations in the earliest period to standardize")
    return float(y.mean()), float(y.std(ddof=1))


# ------------------------------------------------------------- reports
def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class EstimateReport:
    kind: str
    point: float
    se: float | None
    level: float
    ci_lower: float | None
    ci_upper: float | None
    p_value: float | None
    weights: tuple = ()
    equivalence: EquivalenceCI | None = None
    components: tuple = ()
    notes: tuple = ()

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "point": _num(self.point),
            "se": _num(self.se),
            "level": self.level,
            "ci_lower": _num(self.ci_lower),
            "ci_upper": _num(self.ci_upper),
            "p_value": _num(self.p_value),
            "equiv_bound": None if self.equivalence is None else _num(self.equivalence.bound),
            "weights": [_num(w) for w in self.weights],
            "notes": list(self.notes),
        }
        if self.equivalence is not None:
            e = self.equivalence
            d["equivalence"] = {
                "bound": _num(e.bound), "standardized": e.standardized, "level": e.level,
                "baseline_mean": _num(e.baseline_mean), "baseline_sd": _num(e.baseline_sd),
                "ci_lower": _num(e.ci_lower), "ci_upper": _num(e.ci_upper),
            }
        if self.components:
            d["components"] = [{"label": lab, "point": _num(v), "se": _num(s)} for lab, v, s in self.components]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def make_report(kind: str, point: float, se: float | None, level: float = 0.95, *, weights=(),
                equivalence: EquivalenceCI | None = None, components=(), notes=()) -> EstimateReport:
    if not 0 < level < 1:
        raise DomainError("confidence level must lie in (0, 1)")
    lo = hi = p = None
    if se is not None:
        lo, hi = normal_ci(point, se, level)
        p = p_value(point, se)
    return EstimateReport(kind, float(point), None if se is None else float(se), level, lo, hi, p,
                          tuple(float(w) for w in weights), equivalence, tuple(components), tuple(notes))


# ------------------------------------------------------------ pre-trends
def pretrend_contrast(data: PanelDataset, order: int = 1, onset: int | None = None, masks=None) -> DidContrast:
    """Placebo contrast treating the last pre-period as if it were treated."""
    onset = data.onset if onset is None else onset
    if order not in (1, 2):
        raise DomainError("pre-trend order must be 1 (levels) or 2 (trends)")
    need = order + 1
    if onset < need:
        raise DomainError(
            f"a pre-trend test of order {order} needs {need} pre-treatment periods; data have {onset}"
        )
    c = kdid_contrast(data, order, 0, onset=onset - 1, masks=masks,
                      kind="pretrend" if order == 1 else "pretrend-trend")
    return c


def pretrend_test(data: PanelDataset, order: int = 1, spec: BootstrapSpec | None = None, level: float = 0.95,
                  baseline: tuple[float, float] | None | str = "auto") -> EstimateReport:
    """Pre-trend placebo estimate with bootstrap SE, p-value and equivalence CI.

    ``order=1`` is the DID between the last two pre-periods; ``order=2`` the
    sequential DID on the last three. ``baseline="auto"`` standardizes by
    :func:`baseline_stats`; ``None`` leaves the bound unstandardized.
    """
    spec = spec or BootstrapSpec()
    con = pretrend_contrast(data, order)
    boot = bootstrap_vcov(data, [con], spec)
    point, se = float(boot.estimates[0]), float(boot.se[0])
    if isinstance(baseline, str):
        baseline = baseline_stats(data)
    eq = equivalence_ci(point, se, baseline)
    notes = list(data.notes)
    if boot.redraws:
        notes.append(f"{boot.redraws} degenerate bootstrap replicates redrawn")
    return make_report(con.kind, point, se, level, equivalence=eq, notes=notes)


__all__ = [
    "BootstrapSpec", "BootstrapResult", "EquivalenceCI", "EstimateReport", "RNG_NAME",
    "baseline_stats", "bootstrap_vcov", "draw_multiplicities", "empirical_vcov", "equivalence_ci",
    "make_report", "normal_ci", "p_value", "pretrend_contrast", "pretrend_test", "replicate_rng",
]
