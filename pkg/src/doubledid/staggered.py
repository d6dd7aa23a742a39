"""Staggered adoption: per-cohort DID components, cohort-share averaging,
GMM combination and pre-trend gaps.

For adoption period ``t`` and lead ``s`` the treated units are those
adopting exactly at ``t`` and the controls are units not yet treated by
``t + s`` (later adopters and never-treated units). Units that adopted
before ``t`` never enter the comparison.

Time averages weight each period by its cohort share
``pi_t = #{A = t} / #{A in periods}``. Inside the bootstrap the shares are
recomputed from the resampled cohort counts, so the averaged components'
covariance reflects the variability of the shares too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .did_estimators import DidContrast, DidEstimate, kdid_contrast
from .exceptions import DomainError, NoCleanControlError
from .fe_regression import did_regression
from .gmm import REGIMES, GmmResult, MomentVector, combine_optimal, component_battery, default_orders
from .inference import (
    BootstrapSpec, EstimateReport, baseline_stats, bootstrap_vcov, empirical_vcov, equivalence_ci, make_report,
)
from .panel_data import PanelDataset


def sa_masks(data: PanelDataset, t: int, s: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(treated, control) unit masks for adoption period index ``t`` and lead ``s``."""
    a = data.adoption
    return a == t, a > t + s


def _check_masks(data, t, s, treated, control):
    label = data.period_label(t)
    if not treated.any():
        raise DomainError(f"no units adopt treatment at period {label}")
    if not control.any():
        raise NoCleanControlError(
            f"no units remain untreated through period {data.period_label(min(t + s, data.n_periods - 1))} "
            f"to serve as controls for adoption period {label}"
        )


def sa_contrast(data: PanelDataset, t: int, s: int = 0, k: int = 1, kind: str | None = None) -> DidContrast:
    """k-th order contrast for the cohort adopting at period index ``t``."""
    treated, control = sa_masks(data, t, s)
    _check_masks(data, t, s, treated, control)
    if k > t:
        raise DomainError(f"adoption period {data.period_label(t)} has only {t} earlier period(s); order {k} needs {k}")
    return kdid_contrast(data, k, s, onset=t, masks=(treated, control), kind=kind)


def sa_component(data: PanelDataset, t, s: int = 0, k: int = 1) -> DidEstimate:
    """k-th order DID for the cohort adopting at period label ``t``, lead ``s``."""
    return sa_contrast(data, data.period_index(t), s, k).evaluate(data)


def cohort_shares(data: PanelDataset, periods: Sequence[int] | None = None) -> dict[int, float]:
    """Cohort shares pi_t keyed by period label (``periods`` are labels)."""
    idx = data.cohorts if periods is None else [data.period_index(p) for p in periods]
    counts = np.array([np.sum(data.adoption == t) for t in idx], dtype=float)
    if counts.sum() == 0:
        raise DomainError("no treated units in the requested periods")
    return {data.period_label(t): float(c / counts.sum()) for t, c in zip(idx, counts)}


# ---------------------------------------------------------- averaging core
@dataclass(frozen=True, eq=False)
class _Averaged:
    periods: list            # per component: list of period indices used
    per_period: list         # per component: {t: estimate}
    per_period_reps: list    # per component: {t: replicate vector}
    estimates: np.ndarray    # averaged estimate per component
    replicates: np.ndarray   # B x n_components averaged replicates
    shares: list             # per component: {t: pi_t}
    redraws: int


def _cluster_cohort_counts(data: PanelDataset, level: str, periods) -> np.ndarray:
    codes = data.unit if level == "unit" else data.cluster
    n = data.n_units if level == "unit" else data.n_clusters
    # a unit's cluster is taken from its first row
    first = np.full(data.n_units, -1)
    first[data.unit[::-1]] = codes[::-1]
    out = np.zeros((n, len(periods)))
    for j, t in enumerate(periods):
        units = np.flatnonzero(data.adoption == t)
        np.add.at(out[:, j], first[units], 1.0)
    return out


def _averaged_bootstrap(data: PanelDataset, components: list[dict], spec: BootstrapSpec,
                        stream: Sequence[int]) -> _Averaged:
    battery, where = [], []
    for ci, comp in enumerate(components):
        for t, con in comp.items():
            where.append((ci, t))
            battery.append(con)
    boot = bootstrap_vcov(data, battery, spec, stream)
    all_periods = sorted({t for comp in components for t in comp})
    counts = _cluster_cohort_counts(data, spec.cluster_level, all_periods)
    rep_counts = boot.multiplicities @ counts  # B x periods
    full_counts = counts.sum(axis=0)
    col = {t: j for j, t in enumerate(all_periods)}

    per_period = [dict() for _ in components]
    per_reps = [dict() for _ in components]
    for j, (ci, t) in enumerate(where):
        per_period[ci][t] = float(boot.estimates[j])
        per_reps[ci][t] = boot.replicates[:, j]

    estimates, reps, shares = [], [], []
    for ci, comp in enumerate(components):
        ts = list(comp)
        cols = [col[t] for t in ts]
        pi = full_counts[cols] / full_counts[cols].sum()
        rc = rep_counts[:, cols]
        pi_b = rc / rc.sum(axis=1, keepdims=True)
        estimates.append(float(sum(p * per_period[ci][t] for p, t in zip(pi, ts))))
        reps.append(sum(pi_b[:, m] * per_reps[ci][t] for m, t in enumerate(ts)))
        shares.append({t: float(p) for t, p in zip(ts, pi)})
    return _Averaged([list(c) for c in components], per_period, per_reps, np.array(estimates),
                     np.column_stack(reps), shares, boot.redraws)


# ------------------------------------------------------------ double DID
@dataclass(frozen=True, eq=False)
class SaPeriodResult:
    period: int
    lead: int
    n_treated: int
    share: float
    gmm: GmmResult


@dataclass(frozen=True, eq=False)
class SaReport:
    """Per-period and time-averaged GMM results for a staggered design."""

    periods: tuple[int, ...]
    lead: int
    orders: tuple[int, ...]
    per_period: tuple[SaPeriodResult, ...]
    average: GmmResult
    component_averages: dict
    dropped: tuple = ()
    notes: tuple[str, ...] = ()
    replicates: np.ndarray | None = field(default=None, repr=False)

    @property
    def shares(self) -> dict:
        return {p.period: p.share for p in self.per_period}


def _candidate_periods(data: PanelDataset, periods, s: int, min_history: int):
    if periods is None:
        cand = list(data.cohorts)
    else:
        cand = [data.period_index(p) for p in periods]
    kept, dropped = [], []
    for t in cand:
        treated, control = sa_masks(data, t, s)
        label = data.period_label(t)
        if not treated.any():
            dropped.append((label, "no units adopt at this period"))
        elif t + s >= data.n_periods:
            dropped.append((label, f"period {label} + lead {s} is past the last period"))
        elif not control.any():
            dropped.append((label, "no not-yet-treated controls"))
        elif t < min_history:
            dropped.append((label, f"only {t} earlier period(s); {min_history} needed"))
        else:
            kept.append(t)
    return kept, dropped


def sa_double_did(data: PanelDataset, periods: Sequence[int] | None = None, s: int = 0,
                  spec: BootstrapSpec | None = None, regime: str = "extended",
                  orders: Sequence[int] | None = None, stream: Sequence[int] = ()) -> SaReport:
    """Staggered-adoption double DID over the adoption periods ``periods`` (labels).

    One bootstrap loop resamples clusters and recomputes every period's
    components; per-period weight matrices use that period's block of the
    covariance, and the time average combines the share-weighted components
    with the covariance of their replicates.
    """
    spec = spec or BootstrapSpec()
    if regime not in REGIMES:
        raise DomainError(f"unknown regime {regime!r}; choose from {REGIMES}")
    lo = 1 if regime == "extended" else 2
    need = max(orders) if orders else lo
    kept, dropped = _candidate_periods(data, periods, s, need)
    if not kept:
        raise NoCleanControlError("no adoption period has both clean controls and enough history")
    if orders is None:
        orders = default_orders(regime, min(kept))
    orders = tuple(int(k) for k in orders)

    components = [
        {t: component_battery(data, [k], s, onset=t, masks=sa_masks(data, t, s))[0] for t in kept}
        for k in orders
    ]
    avg = _averaged_bootstrap(data, components, spec, stream)
    labels = tuple(components[i][kept[0]].kind for i in range(len(orders)))

    per = []
    notes = []
    for t in kept:
        m = MomentVector([avg.per_period[i][t] for i in range(len(orders))], labels)
        r = np.column_stack([avg.per_period_reps[i][t] for i in range(len(orders))])
        g = combine_optimal(m, empirical_vcov(r))
        per.append(SaPeriodResult(data.period_label(t), s, int(np.sum(data.adoption == t)),
                                  avg.shares[0][t], g))
        notes.extend(f"period {data.period_label(t)}: {n}" for n in g.notes)
    mbar = MomentVector(avg.estimates, labels)
    vbar = empirical_vcov(avg.replicates)
    gbar = combine_optimal(mbar, vbar)
    notes.extend(f"time average: {n}" for n in gbar.notes)
    if dropped:
        notes.append("dropped adoption periods (shares renormalized): "
                     + "; ".join(f"{lab}: {why}" for lab, why in dropped))
    if avg.redraws:
        notes.append(f"{avg.redraws} degenerate bootstrap replicates redrawn")
    return SaReport(
        periods=tuple(data.period_label(t) for t in kept),
        lead=s,
        orders=orders,
        per_period=tuple(per),
        average=gbar,
        component_averages=dict(zip(labels, avg.estimates.tolist())),
        dropped=tuple(dropped),
        notes=tuple(notes),
        replicates=avg.replicates,
    )


# --------------------------------------------------------------- pre-trends
@dataclass(frozen=True)
class SaPretrendGap:
    gap: int
    periods: tuple[int, ...]
    report: EstimateReport


def sa_pretrend(data: PanelDataset, periods: Sequence[int] | None = None, depth: int = 1,
                spec: BootstrapSpec | None = None, level: float = 0.95,
                baseline: tuple[float, float] | None | str = "auto",
                stream: Sequence[int] = ()) -> list[SaPretrendGap]:
    """Share-weighted placebo DIDs at increasing distance before adoption.

    Gap ``j`` (1-based) compares periods ``t - j`` and ``t - j - 1`` between
    the cohort adopting at ``t`` and units not yet treated at ``t``. Cohorts
    without enough history for a gap are left out of that gap's average.
    """
    spec = spec or BootstrapSpec()
    if depth < 1:
        raise DomainError("depth must be at least 1")
    kept, dropped = _candidate_periods(data, periods, 0, 2)
    components, gap_periods = [], []
    for j in range(depth):
        comp = {}
        for t in kept:
            if t - 2 - j < 0:
                continue
            treated, control = sa_masks(data, t, 0)
            comp[t] = kdid_contrast(data, 1, 0, onset=t - 1 - j, masks=(treated, control), kind="pretrend")
        if not comp:
            raise DomainError(f"no adoption period has {j + 2} earlier periods for pre-trend gap {j + 1}")
        components.append(comp)
        gap_periods.append(tuple(data.period_label(t) for t in comp))
    avg = _averaged_bootstrap(data, components, spec, stream)
    if isinstance(baseline, str):
        baseline = baseline_stats(data)
    se = np.sqrt(np.diag(empirical_vcov(avg.replicates)))
    notes = []
    if dropped:
        notes.append("dropped adoption periods: " + "; ".join(f"{lab}: {why}" for lab, why in dropped))
    if avg.redraws:
        notes.append(f"{avg.redraws} degenerate bootstrap replicates redrawn")
    out = []
    for j in range(depth):
        point = float(avg.estimates[j])
        eq = equivalence_ci(point, float(se[j]), baseline)
        rep = make_report("pretrend", point, float(se[j]), level, equivalence=eq, notes=notes)
        out.append(SaPretrendGap(j + 1, gap_periods[j], rep))
    return out


# --------------------------------------------------------------- regression
def sa_regression(data: PanelDataset, t, covariates: Sequence[str] | bool = (), variant: str = "standard",
                  weights=None) -> float:
    """Covariate-adjusted DID regression for the cohort adopting at label ``t``.

    The sample is the cohort plus units not yet treated at ``t``, over
    periods ``t-1, t`` (with ``t-2`` feeding the transformed outcome for
    the sequential variant).
    """
    ti = data.period_index(t)
    treated, control = sa_masks(data, ti, 0)
    _check_masks(data, ti, 0, treated, control)
    return did_regression(data, covariates, variant, weights=weights, onset=ti, masks=(treated, control))
