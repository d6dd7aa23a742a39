"""Least squares with fixed-effect expansion, covariate-adjusted DID
regressions, and regression-side oracles for the DID estimators.

Categorical blocks (period, unit, unit-by-trend) are expanded into dummy
columns. The first categorical block keeps every level only when the model
has no intercept; every later block drops its first level. The solver is a
column-pivoted QR decomposition, which both solves the problem stably and
identifies collinear columns by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .did_estimators import (
    extended_contrast, sequential_contrast, standard_contrast,
)
from .exceptions import DomainError, EmptyCellError, PreconditionError, RankDeficiencyError
from .gmm import GmmResult, MomentVector, combine_optimal
from .inference import BootstrapSpec, bootstrap_vcov
from .panel_data import PANEL, PanelDataset

TERMS = (
    "intercept", "group", "period", "post", "group_x_post", "treatment", "trend",
    "group_x_trend", "unit", "unit_x_trend", "lead", "covariates",
)
_CATEGORICAL = ("period", "unit", "unit_x_trend")
RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionSpec:
    """Terms of a linear model and the coefficient of interest.

    ``response`` is ``"outcome"``, ``"delta-group"`` (outcome minus the
    group's mean outcome one period earlier) or ``"delta-unit"`` (first
    difference within unit, panel data only).
    """

    terms: tuple[str, ...]
    estimand: str
    response: str = "outcome"

    def __post_init__(self):
        bad = [t for t in self.terms if t not in TERMS]
        if bad:
            raise DomainError(f"unknown regression term(s): {bad}")
        if self.response not in ("outcome", "delta-group", "delta-unit"):
            raise DomainError(f"unknown response {self.response!r}")


@dataclass(frozen=True, eq=False)
class RegressionFit:
    coefficients: dict
    names: tuple[str, ...]
    residuals: np.ndarray = field(repr=False)
    design: np.ndarray = field(repr=False)
    n_obs: int = 0
    notes: tuple[str, ...] = ()

    def __getitem__(self, name):
        return self.coefficients[name]


def wls_solve(X: np.ndarray, y: np.ndarray, names: Sequence[str], weights=None) -> RegressionFit:
    """Weighted least squares via column-pivoted QR.

    Raises :class:`RankDeficiencyError` naming the columns that pivoting
    pushed past the numerical rank.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = tuple(names)
    if X.shape[1] != len(names):
        raise DomainError("one name per design column required")
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        Xw, yw = X * sw[:, None], y * sw
    else:
        Xw, yw = X, y
    if X.shape[1] == 0:
        return RegressionFit({}, names, y.copy(), X, len(y))
    if Xw.shape[0] < Xw.shape[1]:
        raise RankDeficiencyError(list(names[Xw.shape[0]:]))
    Q, R, piv = qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1e-300))) if diag.size else 0
    if rank < X.shape[1]:
        raise RankDeficiencyError([names[j] for j in piv[rank:]])
    z = solve_triangular(R, Q.T @ yw)
    beta = np.empty_like(z)
    beta[piv] = z
    return RegressionFit(dict(zip(names, beta.tolist())), names, y - X @ beta, X, len(y))


# ----------------------------------------------------------- sample frames
@dataclass(frozen=True, eq=False)
class _Frame:
    rows: np.ndarray
    y: np.ndarray
    group: np.ndarray
    t: np.ndarray
    unit: np.ndarray
    w: np.ndarray | None


def _frame(data: PanelDataset, periods, treated, control, weights, response: str) -> _Frame:
    periods = np.asarray(periods)
    in_sample = (treated | control)[data.unit]
    if weights is not None:
        in_sample &= weights > 0
    base = np.flatnonzero(in_sample & np.isin(data.time, periods))
    group = treated[data.unit].astype(float)
    y = data.outcome.copy()
    if response == "delta-group":
        y = _delta_group(data, in_sample, treated, control, periods, weights)
    elif response == "delta-unit":
        y = _delta_unit(data, in_sample, periods)
        base = base[np.isfinite(y[base])]
    w = None if weights is None else weights[base]
    return _Frame(base, y[base], group[base], data.time[base], data.unit[base], w)


def _delta_group(data, in_sample, treated, control, periods, weights) -> np.ndarray:
    y = np.full(data.n_obs, np.nan)
    for mask, label in ((treated, 1), (control, 0)):
        for t in periods:
            sel_prev = in_sample & mask[data.unit] & (data.time == t - 1)
            w = np.ones(data.n_obs) if weights is None else weights
            n = w[sel_prev].sum()
            if t - 1 < 0 or n == 0:
                raise EmptyCellError(label, data.period_label(t - 1) if t >= 1 else "before first period")
            prev = w[sel_prev] @ data.outcome[sel_prev] / n
            sel = in_sample & mask[data.unit] & (data.time == t)
            y[sel] = data.outcome[sel] - prev
    return y


def _delta_unit(data, in_sample, periods) -> np.ndarray:
    if data.mode != PANEL:
        raise PreconditionError("unit-level differencing needs panel data")
    y = np.full(data.n_obs, np.nan)
    lookup = np.full((data.n_units, data.n_periods), np.nan)
    lookup[data.unit, data.time] = data.outcome
    for t in periods:
        if t < 1:
            continue
        sel = in_sample & (data.time == t)
        y[sel] = data.outcome[sel] - lookup[data.unit[sel], t - 1]
    return y


def _design(data: PanelDataset, fr: _Frame, terms, onset: int, origin: int):
    cols, names = [], []
    has_intercept = "intercept" in terms
    first_cat_done = False
    tt = (fr.t - origin).astype(float)
    g = fr.group
    for term in terms:
        if term == "intercept":
            cols.append(np.ones(len(fr.rows)))
            names.append("intercept")
        elif term == "group":
            cols.append(g)
            names.append("group")
        elif term == "post":
            cols.append((fr.t >= onset).astype(float))
            names.append("post")
        elif term in ("group_x_post", "treatment"):
            cols.append(g * (fr.t >= onset))
            names.append(term)
        elif term == "lead":
            cols.append(g * (fr.t + 1 >= onset))
            names.append("lead")
        elif term == "trend":
            cols.append(tt)
            names.append("trend")
        elif term == "group_x_trend":
            cols.append(g * tt)
            names.append("group_x_trend")
        elif term == "covariates":
            X = data.covariates[fr.rows]
            for j, nm in enumerate(data.covariate_names):
                cols.append(X[:, j])
                names.append(nm)
        elif term in _CATEGORICAL:
            codes = fr.t if term == "period" else fr.unit
            levels = np.unique(codes)
            if term == "unit_x_trend":
                drop = 1 if ("period" in terms or "trend" in terms) else 0
            else:
                drop = 0 if (not has_intercept and not first_cat_done) else 1
                first_cat_done = True
            labels = data.time_labels if term == "period" else data.unit_labels
            for lev in levels[drop:]:
                ind = (codes == lev).astype(float)
                cols.append(ind * tt if term == "unit_x_trend" else ind)
                names.append(f"{term}[{labels[lev]}]")
    X = np.column_stack(cols) if cols else np.zeros((len(fr.rows), 0))
    return X, names


def fit(data: PanelDataset, spec: RegressionSpec, periods: Sequence[int], *, onset: int | None = None,
        masks=None, weights=None, origin: int | None = None, method: str = "dummies") -> RegressionFit:
    """Fit ``spec`` on the rows at period indices ``periods``.

    ``masks`` = (treated units, control units) restricts the sample and
    defines the group indicator; by default the basic-design groups.
    ``weights`` are per-observation (e.g. bootstrap multiplicities); rows
    with zero weight are dropped before dummy expansion.
    ``method="within"`` sweeps unit and period effects out by two-way
    demeaning (balanced, unweighted samples only).
    """
    onset = data.onset if onset is None else onset
    if masks is None:
        g = data.unit_group
        masks = (g == 1, g == 0)
    treated, control = (np.asarray(m, dtype=bool) for m in masks)
    periods = sorted(int(p) for p in periods)
    origin = periods[0] if origin is None else origin
    fr = _frame(data, periods, treated, control, weights, spec.response)
    if len(fr.rows) == 0:
        raise EmptyCellError("sample", [data.period_label(p) for p in periods])
    if method == "within":
        return _fit_within(data, spec, fr, onset, origin)
    if method != "dummies":
        raise DomainError(f"unknown method {method!r}")
    X, names = _design(data, fr, spec.terms, onset, origin)
    if spec.estimand not in names:
        raise DomainError(f"estimand {spec.estimand!r} is not a design column")
    return wls_solve(X, fr.y, names, fr.w)


def _fit_within(data, spec, fr: _Frame, onset, origin) -> RegressionFit:
    if fr.w is not None:
        raise PreconditionError("the within transform is implemented for unweighted fits only")
    if not {"unit", "period"} <= set(spec.terms) or {"intercept", "unit_x_trend"} & set(spec.terms):
        raise PreconditionError("the within transform needs unit and period effects and no intercept or unit trends")
    units, uidx = np.unique(fr.unit, return_inverse=True)
    times, tidx = np.unique(fr.t, return_inverse=True)
    if len(fr.rows) != len(units) * len(times):
        raise PreconditionError("the within transform needs a balanced sample")
    rest = tuple(t for t in spec.terms if t not in ("unit", "period"))
    X, names = _design(data, fr, rest, onset, origin)

    def sweep(v):
        grid = np.zeros((len(units), len(times)))
        grid[uidx, tidx] = v
        return v - grid.mean(axis=1)[uidx] - grid.mean(axis=0)[tidx] + grid.mean()

    Xs = np.column_stack([sweep(X[:, j]) for j in range(X.shape[1])])
    return wls_solve(Xs, sweep(fr.y), names)


# --------------------------------------------------------- DID regressions
def _masks(data, masks):
    if masks is None:
        g = data.unit_group
        return g == 1, g == 0
    return masks


def did_regression(data: PanelDataset, covariates: Sequence[str] | bool = (), variant: str = "standard", *,
                   weights=None, onset: int | None = None, masks=None) -> float:
    """Interaction coefficient of a (covariate-adjusted) DID regression.

    ``standard``: outcome on intercept, group, post, group x post and
    covariates over the last pre-period and the onset period.
    ``sequential``: the same regression on the outcome minus its group mean
    one period earlier. Without covariates these equal the standard and
    sequential DID estimators exactly.
    """
    onset = data.onset if onset is None else onset
    terms = ("intercept", "group", "post", "group_x_post")
    if covariates:
        names = data.covariate_names if covariates is True else tuple(covariates)
        missing = [c for c in names if c not in data.covariate_names]
        if missing:
            raise DomainError(f"unknown covariate(s): {missing}")
        if tuple(names) != tuple(data.covariate_names):
            data = _select_covariates(data, names)
        terms = terms + ("covariates",)
    if variant == "standard":
        if onset < 1:
            raise DomainError("the standard DID regression needs a pre-treatment period")
        spec = RegressionSpec(terms, "group_x_post")
    elif variant == "sequential":
        if onset < 2:
            raise DomainError("the sequential DID regression needs two pre-treatment periods")
        spec = RegressionSpec(terms, "group_x_post", response="delta-group")
    else:
        raise DomainError(f"unknown variant {variant!r}")
    res = fit(data, spec, [onset - 1, onset], onset=onset, masks=_masks(data, masks), weights=weights)
    return res["group_x_post"]


def _select_covariates(data: PanelDataset, names) -> PanelDataset:
    from dataclasses import replace
    idx = [data.covariate_names.index(c) for c in names]
    cov = np.ascontiguousarray(data.covariates[:, idx])
    cov.setflags(write=False)
    return replace(data, covariates=cov, covariate_names=tuple(names))


def double_did_regression(data: PanelDataset, covariates: Sequence[str] | bool = (),
                          spec: BootstrapSpec | None = None, stream: Sequence[int] = (),
                          onset: int | None = None, masks=None) -> GmmResult:
    """Optimal GMM combination of the standard and sequential DID regressions.

    Both coefficients are bootstrapped jointly (whole clusters) and the
    inverse of their covariance is the weight matrix.
    """
    spec = spec or BootstrapSpec()
    battery = [
        lambda d, w: did_regression(d, covariates, "standard", weights=w, onset=onset, masks=masks),
        lambda d, w: did_regression(d, covariates, "sequential", weights=w, onset=onset, masks=masks),
    ]
    boot = bootstrap_vcov(data, battery, spec, stream)
    moments = MomentVector(boot.estimates, ("standard-regression", "sequential-regression"))
    res = combine_optimal(moments, boot.vcov)
    notes = list(res.notes)
    if boot.redraws:
        notes.append(f"{boot.redraws} degenerate bootstrap replicates redrawn")
    return GmmResult(res.point, res.weights, res.variance, res.weight_matrix, moments, boot.vcov,
                     res.j_stat, tuple(notes), boot)


# ------------------------------------------------------------ oracles
RESULTS = (
    "standard-interaction",
    "standard-twfe",
    "extended-weighted",
    "extended-twfe",
    "sequential-transformed-rcs",
    "sequential-transformed-panel",
    "sequential-group-trends",
    "sequential-unit-trends",
    "leads-rcs",
    "leads-panel",
)
_PANEL_RESULTS = {"standard-twfe", "extended-twfe", "sequential-transformed-panel",
                  "sequential-unit-trends", "leads-panel"}


def lambda_weight(n11: float, n01: float, n10: float, n00: float) -> float:
    """Weight on DID(2,1) in the three-period group/period dummy regression.

    ``n_gt`` is the size of group ``g`` in pre-period ``t`` (1 = last,
    0 = first).
    """
    a = n11 * n01 * (n10 + n00)
    b = n10 * n00 * (n11 + n01)
    return a / (a + b)


def _check(data: PanelDataset, which: str, periods: list[int]):
    if min(periods) < 0:
        raise PreconditionError(f"{which}: needs {len(periods)} periods ending at the onset")
    if which in _PANEL_RESULTS:
        if data.mode != PANEL:
            raise PreconditionError(f"{which}: requires panel data")
        units_in = np.zeros(data.n_units, dtype=bool)
        units_in[data.unit] = True
        sub = np.isin(data.time, periods)
        count = np.bincount(data.unit[sub], minlength=data.n_units)
        if np.any(count[units_in] != len(periods)):
            raise PreconditionError(f"{which}: requires a panel balanced over the periods used")


def equivalence_oracles(data: PanelDataset, which: str, method: str = "dummies") -> tuple[float, float]:
    """Return ``(regression value, mean-based value)`` for an equivalence result.

    The pair is equal (up to rounding) whenever the data meet the result's
    conditions; a :class:`PreconditionError` naming the result is raised
    otherwise. Periods are anchored at the onset ``T*``.
    """
    if which not in RESULTS:
        raise DomainError(f"unknown result {which!r}; choose from {RESULTS}")
    T = data.onset
    lab = data.period_label
    if which == "standard-interaction":
        _check(data, which, [T - 1, T])
        lhs = fit(data, RegressionSpec(("intercept", "group", "post", "group_x_post"), "group_x_post"),
                  [T - 1, T])["group_x_post"]
        return lhs, standard_contrast(data, lab(T), lab(T - 1)).value(data)
    if which == "standard-twfe":
        _check(data, which, [T - 1, T])
        lhs = fit(data, RegressionSpec(("unit", "period", "treatment"), "treatment"), [T - 1, T],
                  method=method)["treatment"]
        return lhs, standard_contrast(data, lab(T), lab(T - 1)).value(data)
    if which == "extended-weighted":
        _check(data, which, [T - 2, T - 1, T])
        lhs = fit(data, RegressionSpec(("group", "period", "treatment"), "treatment"),
                  [T - 2, T - 1, T])["treatment"]
        g = data.unit_group
        n = {(gg, t): float(np.sum((g[data.unit] == gg) & (data.time == t))) for gg in (0, 1) for t in (T - 1, T - 2)}
        lam = lambda_weight(n[1, T - 1], n[0, T - 1], n[1, T - 2], n[0, T - 2])
        d21 = standard_contrast(data, lab(T), lab(T - 1)).value(data)
        d20 = standard_contrast(data, lab(T), lab(T - 2)).value(data)
        return lhs, lam * d21 + (1 - lam) * d20
    if which == "extended-twfe":
        _check(data, which, [T - 2, T - 1, T])
        lhs = fit(data, RegressionSpec(("unit", "period", "treatment"), "treatment"), [T - 2, T - 1, T],
                  method=method)["treatment"]
        rhs = extended_contrast(data, lab(T), [lab(T - 1), lab(T - 2)]).value(data)
        return lhs, rhs
    seq = sequential_contrast(data, lab(T), lab(T - 1), lab(T - 2)).value(data) if T >= 2 else None
    if which == "sequential-transformed-rcs":
        _check(data, which, [T - 2, T - 1, T])
        spec = RegressionSpec(("intercept", "group", "post", "group_x_post"), "group_x_post", "delta-group")
        return fit(data, spec, [T - 1, T])["group_x_post"], seq
    if which == "sequential-transformed-panel":
        _check(data, which, [T - 2, T - 1, T])
        spec = RegressionSpec(("unit", "period", "treatment"), "treatment", "delta-unit")
        return fit(data, spec, [T - 1, T], method=method)["treatment"], seq
    if which == "sequential-group-trends":
        _check(data, which, [T - 2, T - 1, T])
        spec = RegressionSpec(("group", "group_x_trend", "period", "treatment"), "treatment")
        return fit(data, spec, [T - 2, T - 1, T])["treatment"], seq
    if which == "sequential-unit-trends":
        _check(data, which, [T - 2, T - 1, T])
        spec = RegressionSpec(("unit", "unit_x_trend", "period", "treatment"), "treatment")
        return fit(data, spec, [T - 2, T - 1, T])["treatment"], seq
    pre = standard_contrast(data, lab(T - 1), lab(T - 2)).value(data) if T >= 2 else None
    if which == "leads-rcs":
        _check(data, which, [T - 2, T - 1])
        spec = RegressionSpec(("group", "period", "lead"), "lead")
        return fit(data, spec, [T - 2, T - 1])["lead"], pre
    # leads-panel
    _check(data, which, [T - 2, T - 1])
    spec = RegressionSpec(("unit", "period", "lead"), "lead")
    return fit(data, spec, [T - 2, T - 1], method=method)["lead"], pre

