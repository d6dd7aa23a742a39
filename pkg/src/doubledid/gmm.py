"""GMM combination of component DID estimates.

All moments identify the same scalar effect, so the GMM objective
``(tau*1 - m)' W (tau*1 - m)`` has the closed-form minimizer

    tau = (1'W1)^-1 1'W m,      weights = W1 / (1'W1).

With the optimal weight ``W = Var(m)^-1`` its variance is ``(1'W1)^-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .did_estimators import DidContrast, kdid_contrast
from .exceptions import DegenerateWeightError, DomainError, NearSingularError
from .inference import BootstrapResult, BootstrapSpec, bootstrap_vcov
from .panel_data import PanelDataset

EXTENDED = "extended"
TRENDS_IN_TRENDS = "trends-in-trends"
REGIMES = (EXTENDED, TRENDS_IN_TRENDS)

PROVENANCES = (
    "preset-standard", "preset-extended", "preset-sequential",
    "estimated-optimal", "user", "diagonal-fallback", "identity-fallback",
)

_PRESETS = {
    "standard": [[1.0, 0.0], [0.0, 0.0]],
    "extended": [[3.0, 0.0], [0.0, -1.0]],
    "sequential": [[0.0, 0.0], [0.0, 1.0]],
}

DEGENERATE_TOL = 1e-12
MAX_CONDITION = 1e8


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Ordered component estimates that all target the same effect."""

    estimates: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        est = np.atleast_1d(np.asarray(self.estimates, dtype=float))
        if est.ndim != 1 or len(est) == 0:
            raise DomainError("a moment vector needs at least one estimate")
        if not np.all(np.isfinite(est)):
            raise DomainError("moment estimates must be finite")
        labels = tuple(self.labels) or tuple(f"m{i + 1}" for i in range(len(est)))
        if len(labels) != len(est):
            raise DomainError("one label per moment required")
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.estimates)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    entries: np.ndarray
    provenance: str = "user"

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if w.shape[0] != w.shape[1]:
            raise DomainError("weight matrix must be square")
        scale = max(1.0, float(np.abs(w).max()))
        if not np.allclose(w, w.T, rtol=0, atol=1e-10 * scale):
            raise DomainError("weight matrix must be symmetric")
        if self.provenance not in PROVENANCES:
            raise DomainError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "entries", (w + w.T) / 2)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class GmmResult:
    """Combined point estimate and its ingredients.

    ``variance`` is ``(1'W1)^-1`` for an estimated-optimal weight matrix,
    ``w' vcov w`` when a covariance is supplied with any other weight, and
    ``None`` otherwise. ``j_stat`` is the over-identification statistic
    ``g'Wg`` (reported, never used to select moments).
    """

    point: float
    weights: np.ndarray
    variance: float | None
    weight_matrix: WeightMatrix
    moments: MomentVector
    vcov: np.ndarray | None = None
    j_stat: float | None = None
    notes: tuple[str, ...] = ()
    bootstrap: BootstrapResult | None = field(default=None, repr=False)

    @property
    def se(self) -> float | None:
        return None if self.variance is None else float(np.sqrt(max(self.variance, 0.0)))


def objective(tau: float, moments: MomentVector, w: WeightMatrix) -> float:
    g = tau - moments.estimates
    return float(g @ w.entries @ g)


def gmm_combine(moments: MomentVector, w: WeightMatrix, vcov=None, notes: Sequence[str] = ()) -> GmmResult:
    """Closed-form minimizer of the GMM quadratic form."""
    if len(moments) != w.size:
        raise DomainError(f"{len(moments)} moments but a {w.size}x{w.size} weight matrix")
    W = w.entries
    w1 = W.sum(axis=1)
    denom = float(w1.sum())
    if abs(denom) < DEGENERATE_TOL:
        raise DegenerateWeightError("1'W1 is zero: the GMM minimizer is not unique")
    weights = w1 / denom
    point = float(weights @ moments.estimates)
    variance = j = None
    if vcov is not None:
        vcov = np.asarray(vcov, dtype=float)
    if w.provenance == "estimated-optimal":
        variance = 1.0 / denom
    elif vcov is not None:
        variance = float(weights @ vcov @ weights)
    if w.provenance == "estimated-optimal" and len(moments) > 1:
        j = objective(point, moments, w)
    return GmmResult(point, weights, variance, w, moments, vcov, j, tuple(notes))


def preset_weight(name: str) -> WeightMatrix:
    """Two-moment presets over (standard DID, sequential DID)."""
    try:
        return WeightMatrix(np.array(_PRESETS[name]), f"preset-{name}")
    except KeyError:
        raise DomainError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None


def explicit_weights(var1: float, var2: float, cov: float) -> tuple[float, float]:
    """Optimal two-moment weights from variances and covariance."""
    d = var1 + var2 - 2 * cov
    if abs(d) < DEGENERATE_TOL:
        raise DegenerateWeightError("the two moments are perfectly correlated with equal variance")
    return (var2 - cov) / d, (var1 - cov) / d


def optimal_weight(vcov, max_condition: float = MAX_CONDITION) -> WeightMatrix:
    """Inverse of a positive-definite covariance matrix."""
    v = np.atleast_2d(np.asarray(vcov, dtype=float))
    if v.shape[0] != v.shape[1]:
        raise DomainError("covariance must be square")
    if not np.allclose(v, v.T, rtol=1e-10, atol=1e-14):
        raise DomainError("covariance must be symmetric")
    v = (v + v.T) / 2
    eig = np.linalg.eigvalsh(v)
    lo, hi = float(eig[0]), float(eig[-1])
    if lo <= 0 or hi / lo > max_condition:
        raise NearSingularError(
            f"covariance is not safely invertible (smallest eigenvalue {lo:.3g}, "
            f"condition number {hi / lo if lo > 0 else np.inf:.3g})",
            lo,
        )
    inv = np.linalg.inv(v)
    return WeightMatrix((inv + inv.T) / 2, "estimated-optimal")


def combine_optimal(moments: MomentVector, vcov, max_condition: float = MAX_CONDITION) -> GmmResult:
    """Optimal-weight GMM with a disclosed fallback for ill-conditioned covariances.

    Fallback order: inverse of the covariance, then inverse of its diagonal
    (ignoring covariances), then the identity when some variance is zero.
    """
    vcov = np.atleast_2d(np.asarray(vcov, dtype=float))
    try:
        return gmm_combine(moments, optimal_weight(vcov, max_condition), vcov)
    except NearSingularError as exc:
        d = np.diag(vcov)
        if np.all(d > 0):
            w = WeightMatrix(np.diag(1.0 / d), "diagonal-fallback")
            note = (f"moment covariance near-singular (smallest eigenvalue {exc.smallest_eigenvalue:.3g}); "
                    "fell back to inverse-variance weights")
        else:
            w = WeightMatrix(np.eye(len(d)), "identity-fallback")
            note = "moment covariance has zero variances; fell back to equal weights"
        return gmm_combine(moments, w, vcov, notes=(note,))


# ------------------------------------------------------------ double DID
def default_orders(regime: str, max_k: int) -> tuple[int, ...]:
    """Component orders used by each assumption regime.

    Extended parallel trends uses orders ``1..K``; parallel trends-in-trends
    drops the level-only order 1 and uses ``2..K`` (with two pre-periods that
    is the sequential DID alone).
    """
    if regime not in REGIMES:
        raise DomainError(f"unknown regime {regime!r}; choose from {REGIMES}")
    lo = 1 if regime == EXTENDED else 2
    if max_k < lo:
        raise DomainError(f"the {regime} regime needs at least {lo} pre-treatment period(s); data have {max_k}")
    return tuple(range(lo, max_k + 1))


def component_battery(data: PanelDataset, orders: Sequence[int], lead: int = 0, onset: int | None = None,
                      masks=None) -> list[DidContrast]:
    names = {1: "standard", 2: "sequential"}
    out = []
    for k in orders:
        kind = names.get(k, f"kdid({k},{lead})") if lead == 0 else f"kdid({k},{lead})"
        out.append(kdid_contrast(data, k, lead, onset=onset, masks=masks, kind=kind))
    return out


def double_did(data: PanelDataset, regime: str = EXTENDED, orders: Sequence[int] | None = None, lead: int = 0,
               spec: BootstrapSpec | None = None, stream: Sequence[int] = ()) -> GmmResult:
    """Bootstrap-weighted GMM combination of k-th order DID components.

    The moment covariance is the cluster-bootstrap covariance; the combined
    variance is ``(1'W1)^-1`` with ``W`` its inverse.
    """
    spec = spec or BootstrapSpec()
    if orders is None:
        orders = default_orders(regime, data.onset)
    orders = tuple(int(k) for k in orders)
    if not orders or len(set(orders)) != len(orders):
        raise DomainError("orders must be a nonempty list of distinct integers")
    battery = component_battery(data, orders, lead)
    boot = bootstrap_vcov(data, battery, spec, stream)
    moments = MomentVector(boot.estimates, tuple(c.kind for c in battery))
    res = combine_optimal(moments, boot.vcov)
    notes = list(res.notes)
    if boot.redraws:
        notes.append(f"{boot.redraws} degenerate bootstrap replicates redrawn")
    return GmmResult(res.point, res.weights, res.variance, res.weight_matrix, moments, boot.vcov,
                     res.j_stat, tuple(notes), boot)
