"""Closed-form difference-in-differences estimators built from cell means.

Every estimator here is a fixed linear functional of (group, period) means:

    value = sum_t c_t * (mean_treated[t] - mean_control[t])

:class:`DidContrast` stores the two unit masks and the coefficient vector
``c`` over period indices. That representation is what the bootstrap uses
to resample quickly, what the GMM presets are checked against, and what
makes the k-th order operator testable as a plain vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .exceptions import DomainError, EmptyCellError
from .panel_data import PanelDataset, cell_stats


@dataclass(frozen=True)
class DifferenceOperatorSpec:
    """Expanded k-th order difference operator at lead ``s``.

    ``offsets`` are period offsets relative to the onset (``-k..-1`` and
    ``s``) and ``coefficients`` the matching weights on group means.
    """

    order: int
    lead: int
    offsets: tuple[int, ...]
    coefficients: tuple[float, ...]

    def as_vector(self, onset: int, n_periods: int) -> np.ndarray:
        c = np.zeros(n_periods)
        for off, w in zip(self.offsets, self.coefficients):
            c[onset + off] += w
        return c


@dataclass(frozen=True, eq=False)
class DidContrast:
    """A double difference of cell means between two unit sets."""

    treated: np.ndarray
    control: np.ndarray
    coefficients: np.ndarray
    kind: str
    labels: tuple = (1, 0)

    @property
    def periods(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients != 0)

    def cells(self):
        """Yield (label, unit mask, period index, signed coefficient) for each used cell."""
        for t in self.periods:
            c = self.coefficients[t]
            yield self.labels[0], self.treated, int(t), c
            yield self.labels[1], self.control, int(t), -c

    def evaluate(self, data: PanelDataset, weights=None) -> "DidEstimate":
        value = 0.0
        used = []
        for label, mask, t, c in self.cells():
            cm = cell_stats(data, mask, t, weights)
            if cm.n == 0:
                raise EmptyCellError(label, data.period_label(t))
            value += c * cm.mean
            used.append((label, data.period_label(t), cm.n))
        return DidEstimate(float(value), self.kind, tuple(used), self)

    def value(self, data: PanelDataset, weights=None) -> float:
        return self.evaluate(data, weights).value


@dataclass(frozen=True)
class DidEstimate:
    value: float
    kind: str
    cells_used: tuple
    contrast: DidContrast | None = field(default=None, repr=False, compare=False)

    def __float__(self):
        return self.value


# ----------------------------------------------------------------- helpers
def _basic_masks(data: PanelDataset):
    g = data.unit_group
    return g == 1, g == 0


def _idx(data: PanelDataset, label, default):
    return default if label is None else data.period_index(label)


def _vec(data: PanelDataset, pairs) -> np.ndarray:
    c = np.zeros(data.n_periods)
    for t, w in pairs:
        c[t] += w
    return c


def _build(data, pairs, kind, masks=None) -> DidContrast:
    treated, control = masks if masks is not None else _basic_masks(data)
    return DidContrast(treated, control, _vec(data, pairs), kind)


# ----------------------------------------------------------- estimators
def standard_contrast(data: PanelDataset, t_post=None, t_pre=None, masks=None) -> DidContrast:
    if t_post is None or t_pre is None:
        onset = data.onset
    post = _idx(data, t_post, onset if t_post is None else None)
    pre = _idx(data, t_pre, onset - 1 if t_pre is None else None)
    if pre < 0:
        raise DomainError("no pre-treatment period before the onset")
    if post == pre:
        raise DomainError("the two periods of a DID must differ")
    return _build(data, [(post, 1.0), (pre, -1.0)], "standard", masks)


def did_standard(data: PanelDataset, t_post=None, t_pre=None) -> DidEstimate:
    """Standard DID between two periods (labels; defaults T* and T*-1).

    Each cell mean uses its own period-specific count.
    """
    return standard_contrast(data, t_post, t_pre).evaluate(data)


def sequential_contrast(data, t_post=None, t_mid=None, t_base=None, masks=None) -> DidContrast:
    onset = data.onset if None in (t_post, t_mid, t_base) else 0
    post = _idx(data, t_post, onset)
    mid = _idx(data, t_mid, onset - 1)
    base = _idx(data, t_base, onset - 2)
    if min(mid, base) < 0:
        raise DomainError("the sequential DID needs two pre-treatment periods")
    if len({post, mid, base}) < 3:
        raise DomainError("the sequential DID needs three distinct periods")
    return _build(data, [(post, 1.0), (mid, -2.0), (base, 1.0)], "sequential", masks)


def did_sequential(data: PanelDataset, t_post=None, t_mid=None, t_base=None) -> DidEstimate:
    """DID(t_post, t_mid) minus the pre-period DID(t_mid, t_base)."""
    return sequential_contrast(data, t_post, t_mid, t_base).evaluate(data)


def extended_contrast(data, t_post=None, pre_periods=None, masks=None) -> DidContrast:
    if t_post is None or pre_periods is None:
        onset = data.onset
    post = _idx(data, t_post, onset if t_post is None else None)
    if pre_periods is None:
        pre = list(range(onset))
    else:
        pre = [data.period_index(p) for p in pre_periods]
    if len(pre) < 2:
        raise DomainError("the extended DID needs at least two pre-treatment periods")
    if len(set(pre)) != len(pre) or post in pre:
        raise DomainError("extended DID periods must be distinct")
    w = 1.0 / len(pre)
    return _build(data, [(post, 1.0)] + [(p, -w) for p in pre], "extended", masks)


def did_extended(data: PanelDataset, t_post=None, t_pre1=None, t_pre0=None, *more_pre) -> DidEstimate:
    """Equal-weight average of the DIDs from ``t_post`` to each pre-period.

    With two pre-periods this is ``(DID(post, pre1) + DID(post, pre0)) / 2``.
    If no pre-periods are given, every period before the onset is used,
    which on a balanced panel equals the two-way fixed-effects coefficient.
    """
    if t_pre1 is None and t_pre0 is None:
        pre = None
    else:
        if t_pre1 is None or t_pre0 is None:
            raise DomainError("give both pre-periods or neither")
        pre = [t_pre1, t_pre0, *more_pre]
    return extended_contrast(data, t_post, pre).evaluate(data)


def did_pretrend(data: PanelDataset, t1=None, t0=None) -> DidEstimate:
    """DID between two pre-treatment periods (defaults T*-1 and T*-2)."""
    onset = data.onset
    p1 = _idx(data, t1, onset - 1)
    p0 = _idx(data, t0, onset - 2)
    if min(p1, p0) < 0:
        raise DomainError("the pre-trend DID needs two pre-treatment periods")
    if max(p1, p0) >= onset:
        raise DomainError(
            f"pre-trend periods must precede the treatment onset {data.onset_label}"
        )
    c = standard_contrast(data, data.period_label(p1), data.period_label(p0))
    return DidContrast(c.treated, c.control, c.coefficients, "pretrend").evaluate(data)


# -------------------------------------------------------------- k-th order
def m_coefficient(ell: int, s: int) -> float:
    """Product ratio prod_{j<ell}(s+j) / prod_{j<ell} j, i.e. C(s+ell-1, ell-1)."""
    if int(ell) != ell or ell < 2:
        raise DomainError(f"ell must be an integer >= 2, got {ell}")
    if int(s) != s or s < 0:
        raise DomainError(f"s must be a nonnegative integer, got {s}")
    return float(comb(int(s) + int(ell) - 1, int(ell) - 1))


def kdid_operator(k: int, s: int = 0) -> DifferenceOperatorSpec:
    """Expand the k-th order operator at lead ``s`` into period coefficients.

    The level at ``onset + s`` is compared with its backward-difference
    extrapolation from the last ``k`` pre-periods; the operator annihilates
    every polynomial in time of degree below ``k``.
    """
    if int(k) != k or k < 1:
        raise DomainError(f"order k must be a positive integer, got {k}")
    if int(s) != s or s < 0:
        raise DomainError(f"lead s must be a nonnegative integer, got {s}")
    k, s = int(k), int(s)
    pre = np.zeros(k)  # pre[m-1] is the weight on offset -m
    pre[0] = -1.0
    for j in range(1, k):
        m = m_coefficient(j + 1, s)
        for i in range(j + 1):
            pre[i] -= m * (-1) ** i * comb(j, i)
    offsets = tuple(range(-k, 0)) + (s,)
    coefs = tuple(float(pre[-o - 1]) for o in range(-k, 0)) + (1.0,)
    return DifferenceOperatorSpec(k, s, offsets, coefs)


def kdid_contrast(data: PanelDataset, k: int, s: int = 0, onset: int | None = None,
                  masks=None, kind: str | None = None) -> DidContrast:
    op = kdid_operator(k, s)
    onset = data.onset if onset is None else onset
    if k > onset:
        raise DomainError(f"order k={k} exceeds the {onset} available pre-treatment period(s)")
    if onset + s >= data.n_periods:
        raise DomainError(
            f"lead s={s} needs period index {onset + s}; data end at {data.n_periods - 1} "
            f"(at most s={data.n_periods - 1 - onset})"
        )
    c = op.as_vector(onset, data.n_periods)
    treated, control = masks if masks is not None else _basic_masks(data)
    return DidContrast(treated, control, c, kind or f"kdid({k},{s})")


def did_kdid(data: PanelDataset, k: int, s: int = 0) -> DidEstimate:
    """k-th order DID for the effect ``s`` periods after the onset."""
    return kdid_contrast(data, k, s).evaluate(data)


def max_order(data: PanelDataset, onset: int | None = None) -> int:
    """Largest usable order: the number of periods before the onset."""
    return data.onset if onset is None else onset
