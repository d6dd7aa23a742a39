"""Long-format panel / repeated-cross-section datasets.

A :class:`PanelDataset` stores one row per observation as parallel numpy
arrays. Unit, cluster and time identifiers are integer-coded; the original
labels are kept for reporting. Periods are re-indexed to ``0..T-1`` in
sorted label order, so every estimator works on period *indices* internally
while the public API speaks in the user's period labels.

Adoption times are stored per unit as a float period index (``inf`` for
never-treated units). The basic design is represented as a staggered design
with exactly one cohort, which is what makes the single-cohort reduction
identities hold by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .exceptions import DesignError, EmptyCellError, SchemaError, ValidationError

PANEL = "panel"
RCS = "repeated-cross-section"
BASIC = "basic"
STAGGERED = "staggered"

_MODES = {PANEL: PANEL, "rcs": RCS, RCS: RCS}
_DESIGNS = {BASIC: BASIC, STAGGERED: STAGGERED, "sa": STAGGERED}
_TRUE = {"1", "true", "t", "yes", "1.0"}
_FALSE = {"0", "false", "f", "no", "0.0"}


class Observation(NamedTuple):
    unit: object
    time: int
    outcome: float
    treated: bool
    cluster: object
    covariates: tuple = ()


@dataclass(frozen=True)
class ColumnSchema:
    """Binds CSV columns to their roles."""

    unit: str
    time: str
    outcome: str
    treatment: str
    cluster: str | None = None
    covariates: tuple[str, ...] = ()
    group: str | None = None

    def required(self) -> list[str]:
        cols = [self.unit, self.time, self.outcome, self.treatment]
        if self.cluster:
            cols.append(self.cluster)
        if self.group:
            cols.append(self.group)
        return cols + list(self.covariates)


class CellMean(NamedTuple):
    mean: float
    n: float


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _encode(values) -> tuple[np.ndarray, np.ndarray]:
    codes, labels = pd.factorize(pd.Series(values, dtype=object), sort=True)
    return codes.astype(np.intp), np.asarray(labels, dtype=object)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Validated, immutable long-format dataset. Build with :meth:`from_arrays`."""

    unit: np.ndarray
    time: np.ndarray
    outcome: np.ndarray
    treated: np.ndarray
    cluster: np.ndarray
    covariates: np.ndarray
    unit_labels: np.ndarray
    time_labels: np.ndarray
    cluster_labels: np.ndarray
    covariate_names: tuple[str, ...]
    mode: str
    design: str
    adoption: np.ndarray
    cluster_given: bool = True
    notes: tuple[str, ...] = field(default=())

    # ------------------------------------------------------------------ build
    @classmethod
    def from_arrays(
        cls,
        unit,
        time,
        outcome,
        treated,
        cluster=None,
        covariates=None,
        covariate_names: Sequence[str] = (),
        group=None,
        mode: str = PANEL,
        design: str = BASIC,
    ) -> "PanelDataset":
        """Validate raw columns and build a dataset.

        ``group`` is an optional per-row treatment-group indicator; it is only
        needed for repeated cross-sections, where pre-period rows of the
        treatment group carry ``treated == 0`` and cannot otherwise be told
        apart from controls. Without it, group membership is taken at the
        cluster level (a cluster is in the treatment group if any of its rows
        is treated).
        """
        try:
            mode = _MODES[mode]
            design = _DESIGNS[design]
        except KeyError as exc:
            raise SchemaError(f"unknown mode/design {exc.args[0]!r}") from None
        outcome = np.asarray(outcome, dtype=float)
        n_obs = outcome.shape[0]
        if not np.all(np.isfinite(outcome)):
            bad = int(np.flatnonzero(~np.isfinite(outcome))[0])
            raise ValidationError(f"non-finite outcome in row {bad}")
        time_raw = np.asarray(time)
        if time_raw.dtype.kind == "f":
            if not np.all(np.isfinite(time_raw)) or not np.all(time_raw == np.round(time_raw)):
                raise ValidationError("time values must be integers")
            time_raw = time_raw.astype(np.int64)
        elif time_raw.dtype.kind not in "iu":
            raise ValidationError("time values must be integers")
        treated = np.asarray(treated).astype(bool)
        unit_codes, unit_labels = _encode(unit)
        cluster_given = cluster is not None
        if cluster_given:
            cluster_codes, cluster_labels = _encode(cluster)
        else:
            cluster_codes, cluster_labels = unit_codes, unit_labels
        time_labels, time_idx = np.unique(time_raw, return_inverse=True)
        if covariates is None:
            covariates = np.zeros((n_obs, 0))
        covariates = np.asarray(covariates, dtype=float).reshape(n_obs, -1)
        if covariates.shape[1] != len(covariate_names):
            raise SchemaError("covariate names do not match covariate columns")
        if not np.all(np.isfinite(covariates)):
            raise ValidationError("non-finite covariate value")
        for arr in (time_raw, treated, unit_codes, cluster_codes):
            if arr.shape[0] != n_obs:
                raise SchemaError("columns have different lengths")

        n_units = len(unit_labels)
        n_periods = len(time_labels)
        notes: list[str] = []

        if mode == PANEL:
            key = unit_codes * n_periods + time_idx
            uniq, counts = np.unique(key, return_counts=True)
            if np.any(counts > 1):
                k = uniq[np.argmax(counts > 1)]
                u, t = divmod(int(k), n_periods)
                raise ValidationError(
                    f"duplicate (unit, time) pair: ({unit_labels[u]!r}, {time_labels[t]})",
                    unit=unit_labels[u],
                )
            missing = n_units * n_periods - n_obs
            if missing:
                notes.append(f"unbalanced panel: {missing} missing (unit, time) cells")

        if design == STAGGERED:
            if mode != PANEL:
                raise DesignError("the staggered design requires panel data (units followed over time)")
            adoption = _staggered_adoption(unit_codes, time_idx, treated, unit_labels, n_units)
        else:
            adoption = _basic_adoption(
                unit_codes, time_idx, treated, cluster_codes, cluster_given, group,
                mode, unit_labels, time_labels, n_units,
            )

        return cls(
            unit=_readonly(unit_codes),
            time=_readonly(time_idx.astype(np.intp)),
            outcome=_readonly(outcome),
            treated=_readonly(treated),
            cluster=_readonly(cluster_codes),
            covariates=_readonly(covariates),
            unit_labels=_readonly(unit_labels),
            time_labels=_readonly(time_labels),
            cluster_labels=_readonly(cluster_labels),
            covariate_names=tuple(covariate_names),
            mode=mode,
            design=design,
            adoption=_readonly(adoption),
            cluster_given=cluster_given,
            notes=tuple(notes),
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame, schema: ColumnSchema, mode: str = PANEL,
                   design: str = BASIC) -> "PanelDataset":
        missing = [c for c in schema.required() if c not in df.columns]
        if missing:
            raise SchemaError("missing column(s): " + ", ".join(missing))
        outcome = _to_float(df[schema.outcome], schema.outcome)
        time = _to_int(df[schema.time], schema.time)
        treated = _to_bool(df[schema.treatment], schema.treatment)
        covs = np.column_stack([_to_float(df[c], c) for c in schema.covariates]) if schema.covariates else None
        group = _to_bool(df[schema.group], schema.group) if schema.group else None
        unit = df[schema.unit].to_numpy(dtype=object)
        if pd.isna(df[schema.unit]).any():
            raise SchemaError(f"column {schema.unit!r}: missing unit identifier")
        cluster = df[schema.cluster].to_numpy(dtype=object) if schema.cluster else None
        return cls.from_arrays(unit, time, outcome, treated, cluster=cluster, covariates=covs,
                               covariate_names=schema.covariates, group=group, mode=mode, design=design)

    # ------------------------------------------------------------ accessors
    @property
    def n_obs(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_units(self) -> int:
        return len(self.unit_labels)

    @property
    def n_periods(self) -> int:
        return len(self.time_labels)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_labels)

    @property
    def time_range(self) -> tuple[int, int]:
        return int(self.time_labels[0]), int(self.time_labels[-1])

    @property
    def cohorts(self) -> np.ndarray:
        """Sorted adoption period indices of the treated cohorts."""
        a = self.adoption[np.isfinite(self.adoption)]
        return np.unique(a).astype(int)

    @property
    def onset(self) -> int:
        """Common treatment onset T* as a period index (basic design only)."""
        cohorts = self.cohorts
        if len(cohorts) == 0:
            raise DesignError("no treated observations: treatment onset is undefined")
        if len(cohorts) > 1:
            labels = ", ".join(str(self.time_labels[c]) for c in cohorts)
            raise DesignError(f"units adopt treatment at different times ({labels}); use the staggered design")
        return int(cohorts[0])

    @property
    def onset_label(self) -> int:
        return int(self.time_labels[self.onset])

    @property
    def unit_group(self) -> np.ndarray:
        """Basic-design group G_i per unit (1 treatment, 0 control)."""
        onset = self.onset
        return (self.adoption == onset).astype(int)

    @property
    def is_balanced(self) -> bool:
        return self.mode == PANEL and self.n_obs == self.n_units * self.n_periods

    def period_index(self, label) -> int:
        idx = np.searchsorted(self.time_labels, label)
        if idx >= len(self.time_labels) or self.time_labels[idx] != label:
            raise ValueError(f"period {label!r} not in data (range {self.time_range})")
        return int(idx)

    def period_label(self, index: int) -> int:
        return int(self.time_labels[index])

    def obs_weights(self, cluster_weights) -> np.ndarray | None:
        """Expand per-cluster resampling multiplicities to per-observation weights."""
        if cluster_weights is None:
            return None
        return np.asarray(cluster_weights, dtype=float)[self.cluster]

    def observations(self) -> list[Observation]:
        return [
            Observation(
                self.unit_labels[u], int(self.time_labels[t]), float(y), bool(d),
                self.cluster_labels[c], tuple(float(x) for x in xs),
            )
            for u, t, y, d, c, xs in zip(self.unit, self.time, self.outcome, self.treated,
                                         self.cluster, self.covariates)
        ]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({
            "unit": self.unit_labels[self.unit],
            "time": self.time_labels[self.time],
            "outcome": self.outcome,
            "treatment": self.treated.astype(int),
            "cluster": self.cluster_labels[self.cluster],
        })
        for j, name in enumerate(self.covariate_names):
            df[name] = self.covariates[:, j]
        return df

    def to_csv(self, path) -> None:
        df = self.to_frame()
        # repr round-trips floats exactly
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(df.columns)
            for row in df.itertuples(index=False):
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    def schema(self) -> ColumnSchema:
        """Schema matching :meth:`to_csv` output."""
        return ColumnSchema("unit", "time", "outcome", "treatment", "cluster", tuple(self.covariate_names))

    def subset_units(self, unit_mask) -> "PanelDataset":
        """Dataset restricted to the units flagged in ``unit_mask`` (labels and adoption kept)."""
        keep = np.asarray(unit_mask, dtype=bool)[self.unit]
        idx = np.flatnonzero(keep)
        return _take(self, idx)

    def subset_periods(self, period_indices) -> "PanelDataset":
        keep = np.isin(self.time, np.asarray(period_indices))
        return _take(self, np.flatnonzero(keep))


def _take(data: PanelDataset, idx) -> PanelDataset:
    unit_codes, unit_pos = np.unique(data.unit[idx], return_inverse=True)
    clus_codes, clus_pos = np.unique(data.cluster[idx], return_inverse=True)
    t_codes, t_pos = np.unique(data.time[idx], return_inverse=True)
    # adoption indices are re-based onto the kept periods
    remap = np.full(data.n_periods, np.nan)
    remap[t_codes] = np.arange(len(t_codes))
    adoption = data.adoption[unit_codes].copy()
    fin = np.isfinite(adoption)
    if fin.any():
        a = adoption[fin].astype(int)
        pos = np.searchsorted(t_codes, a)
        adoption[fin] = pos.astype(float)
    return PanelDataset(
        unit=_readonly(unit_pos.astype(np.intp)),
        time=_readonly(t_pos.astype(np.intp)),
        outcome=_readonly(data.outcome[idx]),
        treated=_readonly(data.treated[idx]),
        cluster=_readonly(clus_pos.astype(np.intp)),
        covariates=_readonly(data.covariates[idx]),
        unit_labels=_readonly(data.unit_labels[unit_codes]),
        time_labels=_readonly(data.time_labels[t_codes]),
        cluster_labels=_readonly(data.cluster_labels[clus_codes]),
        covariate_names=data.covariate_names,
        mode=data.mode,
        design=data.design,
        adoption=_readonly(adoption),
        cluster_given=data.cluster_given,
        notes=data.notes,
    )


def _staggered_adoption(unit, time, treated, unit_labels, n_units) -> np.ndarray:
    order = np.lexsort((time, unit))
    u, d = unit[order], treated[order]
    same = u[1:] == u[:-1]
    reversal = same & d[:-1] & ~d[1:]
    if reversal.any():
        bad = unit_labels[u[1:][reversal][0]]
        raise ValidationError(
            f"treatment reversal for unit {bad!r}: treatment must be absorbing in the staggered design",
            unit=bad,
        )
    adoption = np.full(n_units, np.inf)
    tr = np.flatnonzero(treated)
    np.minimum.at(adoption, unit[tr], time[tr].astype(float))
    return adoption


def _basic_adoption(unit, time, treated, cluster, cluster_given, group, mode,
                    unit_labels, time_labels, n_units) -> np.ndarray:
    adoption = np.full(n_units, np.inf)
    if not treated.any():
        return adoption
    onset = int(time[treated].min())
    if group is not None:
        row_group = np.asarray(group).astype(bool)
    elif mode == PANEL:
        ever = np.zeros(n_units, dtype=bool)
        ever[unit[treated]] = True
        row_group = ever[unit]
    else:
        if not cluster_given:
            raise SchemaError(
                "repeated cross-section data need a cluster (assignment-level) or group column "
                "to identify treatment-group membership in pre-treatment periods"
            )
        ever = np.zeros(cluster.max() + 1, dtype=bool)
        ever[cluster[treated]] = True
        row_group = ever[cluster]
    expected = row_group & (time >= onset)
    bad = np.flatnonzero(expected != treated)
    if len(bad):
        r = bad[0]
        # a group-1 row untreated after onset: later adoption (staggered) or reversal
        if row_group[r] and not treated[r]:
            later = treated & (unit == unit[r]) & (time > time[r])
            if mode == PANEL and later.any():
                raise DesignError(
                    f"unit {unit_labels[unit[r]]!r} adopts treatment after the common onset "
                    f"{time_labels[onset]}; heterogeneous onsets require the staggered design"
                )
        raise ValidationError(
            f"unit {unit_labels[unit[r]]!r} at time {time_labels[time[r]]}: treatment must be 0 before "
            f"onset {time_labels[onset]} and constant within the treatment group afterwards",
            unit=unit_labels[unit[r]],
        )
    per_unit = np.zeros(n_units, dtype=bool)
    per_unit[unit[row_group]] = True
    if mode == PANEL:
        # a unit's group must not change across its rows
        mixed = np.zeros(n_units, dtype=bool)
        mixed[unit[~row_group]] = True
        if (mixed & per_unit).any():
            u = int(np.flatnonzero(mixed & per_unit)[0])
            raise ValidationError(f"unit {unit_labels[u]!r} changes treatment group", unit=unit_labels[u])
    adoption[per_unit] = float(onset)
    return adoption


# ------------------------------------------------------------- parsing helpers
def _to_float(col: pd.Series, name: str) -> np.ndarray:
    # float() on the raw text round-trips repr() output exactly
    out = np.empty(len(col))
    for i, v in enumerate(col.to_numpy(dtype=object)):
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            raise SchemaError(f"column {name!r}: unparseable number {v!r} in row {i}") from None
        if np.isnan(out[i]):
            raise SchemaError(f"column {name!r}: missing value in row {i}")
    return out


def _to_int(col: pd.Series, name: str) -> np.ndarray:
    vals = _to_float(col, name)
    if not np.all(vals == np.round(vals)):
        raise SchemaError(f"column {name!r}: time values must be integers")
    return vals.astype(np.int64)


def _to_bool(col: pd.Series, name: str) -> np.ndarray:
    out = np.empty(len(col), dtype=bool)
    for i, v in enumerate(col.astype(str).str.strip().str.lower()):
        if v in _TRUE:
            out[i] = True
        elif v in _FALSE:
            out[i] = False
        else:
            raise SchemaError(f"column {name!r}: treatment value {v!r} in row {i} is not one of 0/1/true/false")
    return out


def load_csv(path, schema: ColumnSchema, mode: str = PANEL, design: str = BASIC) -> PanelDataset:
    """Read a UTF-8 long-format CSV (header row required) into a validated dataset."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""], encoding="utf-8")
    return PanelDataset.from_frame(df, schema, mode=mode, design=design)


# ------------------------------------------------------------------ groups
@dataclass(frozen=True)
class GroupAssignment:
    """Group indicators derived from adoption times.

    ``adoption`` holds period indices (``inf`` = never treated); ``group`` is
    the basic-design G_i, present only when all treated units share one onset.
    """

    unit_labels: np.ndarray
    time_labels: np.ndarray
    adoption: np.ndarray
    group: np.ndarray | None

    @property
    def adoption_labels(self) -> list:
        return [None if not np.isfinite(a) else int(self.time_labels[int(a)]) for a in self.adoption]

    def g_its(self, s: int = 0) -> np.ndarray:
        """(n_units, T) array of the long-run group G_its for lead ``s``."""
        t = np.arange(len(self.time_labels))[None, :]
        a = self.adoption[:, None]
        out = np.full((len(self.adoption), len(self.time_labels)), -1, dtype=int)
        out[a == t] = 1
        out[a > t + s] = 0
        return out

    def g_it(self) -> np.ndarray:
        return self.g_its(0)


def assign_groups(data: PanelDataset, require_basic: bool = False) -> GroupAssignment:
    """Compute G_i, A_i, G_it and (lazily) G_its for a dataset.

    With ``require_basic`` the data must have one common onset; otherwise a
    :class:`DesignError` points the user to the staggered design.
    """
    cohorts = data.cohorts
    group = None
    if len(cohorts) == 1:
        group = (data.adoption == cohorts[0]).astype(int)
    elif require_basic:
        data.onset  # raises DesignError
    return GroupAssignment(data.unit_labels, data.time_labels, data.adoption.copy(), group)


# -------------------------------------------------------------- cell means
def _unit_mask(data: PanelDataset, group) -> np.ndarray:
    if isinstance(group, (int, np.integer)) and not isinstance(group, bool):
        g = data.unit_group
        return g == int(group)
    mask = np.asarray(group, dtype=bool)
    if mask.shape != (data.n_units,):
        raise ValueError("group selector must be 0/1 or a boolean mask over units")
    return mask


def cell_stats(data: PanelDataset, unit_mask: np.ndarray, t: int, weights=None) -> CellMean:
    """Mean and (weighted) count of outcomes for units in ``unit_mask`` at period index ``t``."""
    sel = unit_mask[data.unit] & (data.time == t)
    if weights is None:
        n = float(sel.sum())
        if n == 0:
            return CellMean(np.nan, 0.0)
        return CellMean(float(data.outcome[sel].mean()), n)
    w = weights[sel]
    n = float(w.sum())
    if n == 0:
        return CellMean(np.nan, 0.0)
    return CellMean(float(w @ data.outcome[sel] / n), n)


def cell_mean(data: PanelDataset, group, time, weights=None) -> CellMean:
    """Arithmetic mean of outcomes in the (group, time) cell.

    ``group`` is 1/0 for the basic-design treatment/control group or a
    boolean mask over units; ``time`` is a period label.
    """
    t = data.period_index(time)
    res = cell_stats(data, _unit_mask(data, group), t, weights)
    if res.n == 0:
        raise EmptyCellError(group if np.isscalar(group) else "mask", time)
    return res


def group_time_means(data: PanelDataset, by_cohort: bool = False) -> pd.DataFrame:
    """Tidy table (group, time, mean, n) of cell means for plotting.

    Basic design: groups 1/0. With ``by_cohort``, groups are adoption-period
    labels with ``"never"`` for never-treated units.
    """
    if by_cohort:
        keys = [("never" if not np.isfinite(a) else int(data.time_labels[int(a)])) for a in data.adoption]
        labels = sorted({k for k in keys if k != "never"}) + (["never"] if "never" in keys else [])
        masks = [(lab, np.array([k == lab for k in keys])) for lab in labels]
    else:
        g = data.unit_group
        masks = [(1, g == 1), (0, g == 0)]
    rows = []
    for lab, mask in masks:
        for t in range(data.n_periods):
            cm = cell_stats(data, mask, t)
            if cm.n:
                rows.append({"group": lab, "time": int(data.time_labels[t]), "mean": cm.mean, "n": int(cm.n)})
    return pd.DataFrame(rows, columns=["group", "time", "mean", "n"])


def iter_units(data: PanelDataset) -> Iterable[int]:
    return range(data.n_units)
