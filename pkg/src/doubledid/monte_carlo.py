"""Monte Carlo study of the DID estimators on simulated balanced panels.

Data-generating process, for unit ``i`` in group ``g`` (first half of the
units treated) and period ``t = 0..T-1``:

    Y_it(0) = alpha_t + confounding(g, t) + eps_it,   alpha_t = t + 1
    eps_i0 ~ N(0, v / (1 - rho^2)),  eps_it = rho * eps_i,t-1 + N(0, v)
    Y_it(1) = Y_it(0) + tau

Only the last period is treated. Confounding by scenario:

* ``extended-parallel-trends``: ``0.05 * g`` (constant gap)
* ``trends-in-trends``: ``0.1 * g * (t + 1)`` (linear gap)
* ``polynomial``: ``g * sum_j c_j t^j`` for user coefficients ``c``
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .did_estimators import extended_contrast, kdid_contrast
from .exceptions import DomainError
from .gmm import MomentVector, combine_optimal
from .inference import RNG_NAME, BootstrapSpec, bootstrap_vcov, replicate_rng
from .panel_data import PanelDataset

SCENARIOS = ("extended-parallel-trends", "trends-in-trends", "polynomial")
_ALIASES = {"1": "extended-parallel-trends", "2": "trends-in-trends"}
ESTIMATORS = ("standard", "extended", "sequential", "double")

# stream tags keep data and bootstrap draws of a replicate independent
_DATA_STREAM = 0
_BOOT_STREAM = 1


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 1000
    periods: int = 5
    scenario: str = "extended-parallel-trends"
    rho: float = 0.6
    tau: float = 0.2
    replications: int = 100
    seed: int = 0
    innovation_var: float = 3.0
    poly_coefs: tuple[float, ...] = ()
    max_order: int | None = None
    bootstrap_iterations: int = 200
    level: float = 0.90

    def __post_init__(self):
        object.__setattr__(self, "scenario", _ALIASES.get(str(self.scenario), self.scenario))
        object.__setattr__(self, "poly_coefs", tuple(float(c) for c in self.poly_coefs))
        if self.scenario not in SCENARIOS:
            raise DomainError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if not 0 <= self.rho < 1:
            raise DomainError("rho must lie in [0, 1)")
        if self.n < 4:
            raise DomainError("need at least 4 units")
        if self.periods < 3:
            raise DomainError("need at least 3 periods")
        if self.replications < 1:
            raise DomainError("need at least one replication")
        if self.innovation_var < 0:
            raise DomainError("innovation variance must be nonnegative")
        if self.scenario == "polynomial" and not self.poly_coefs:
            raise DomainError("the polynomial scenario needs poly_coefs")
        if not self.pre_periods >= self.orders[-1] >= self.orders[0] >= 1:
            raise DomainError(f"max_order must lie in [{self.orders[0]}, {self.pre_periods}]")

    @property
    def pre_periods(self) -> int:
        return self.periods - 1

    @property
    def confounding_degree(self) -> int:
        if self.scenario == "extended-parallel-trends":
            return 0
        if self.scenario == "trends-in-trends":
            return 1
        nz = [j for j, c in enumerate(self.poly_coefs) if c != 0]
        return nz[-1] if nz else 0

    @property
    def orders(self) -> tuple[int, ...]:
        """Orders combined by the double DID: those unbiased for this scenario."""
        top = self.pre_periods if self.max_order is None else self.max_order
        return tuple(range(self.confounding_degree + 1, top + 1))

    def confounding(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.scenario == "extended-parallel-trends":
            return np.full_like(t, 0.05)
        if self.scenario == "trends-in-trends":
            return 0.1 * (t + 1)
        return np.polynomial.polynomial.polyval(t, self.poly_coefs)


def generate_panel(config: SimulationConfig, replicate: int) -> PanelDataset:
    """Simulated panel for one replicate (deterministic in config and index)."""
    rng = replicate_rng(config.seed, _DATA_STREAM, replicate)
    n, T, rho, v = config.n, config.periods, config.rho, config.innovation_var
    eps = np.empty((n, T))
    eps[:, 0] = rng.normal(0.0, math.sqrt(v / (1 - rho**2)), n)
    xi = rng.normal(0.0, math.sqrt(v), (n, T - 1))
    for t in range(1, T):
        eps[:, t] = rho * eps[:, t - 1] + xi[:, t - 1]
    g = (np.arange(n) < n // 2).astype(float)
    t = np.arange(T)
    alpha = t + 1.0
    y0 = alpha[None, :] + g[:, None] * config.confounding(t)[None, :] + eps
    d = (g[:, None] == 1) & (t[None, :] == T - 1)
    y = y0 + config.tau * d
    return PanelDataset.from_arrays(np.repeat(np.arange(n), T), np.tile(t, n), y.ravel(), d.ravel())


def estimate_replicate(config: SimulationConfig, replicate: int) -> tuple[np.ndarray, np.ndarray]:
    """(estimates, standard errors) of the four estimators on one replicate."""
    data = generate_panel(config, replicate)
    K = config.pre_periods
    orders = config.orders
    need = sorted(set(range(1, K + 1)))
    battery = [kdid_contrast(data, k, 0) for k in need] + [extended_contrast(data)]
    spec = BootstrapSpec(config.bootstrap_iterations, config.seed, workers=1)
    boot = bootstrap_vcov(data, battery, spec, stream=(_BOOT_STREAM, replicate))
    est, V = boot.estimates, boot.vcov
    pos = {k: i for i, k in enumerate(need)}
    ext = len(need)
    sel = [pos[k] for k in orders]
    g = combine_optimal(MomentVector(est[sel]), V[np.ix_(sel, sel)])
    se = np.sqrt(np.diag(V))
    point = np.array([est[pos[1]], est[ext], est[pos[2]], g.point])
    ses = np.array([se[pos[1]], se[ext], se[pos[2]], g.se])
    return point, ses


def _run_chunk(args):
    config, reps = args
    return [estimate_replicate(config, m) for m in reps]


@dataclass(frozen=True, eq=False)
class SimulationResult:
    config: SimulationConfig
    estimators: tuple[str, ...]
    estimates: np.ndarray = field(repr=False)
    ses: np.ndarray = field(repr=False)

    @property
    def abs_bias(self) -> dict:
        return {e: float(abs(np.mean(self.estimates[:, j] - self.config.tau))) for j, e in enumerate(self.estimators)}

    @property
    def se(self) -> dict:
        return {e: float(np.sqrt(np.mean((self.estimates[:, j] - self.config.tau) ** 2)))
                for j, e in enumerate(self.estimators)}

    def coverage(self, level: float | None = None) -> dict:
        from scipy.stats import norm

        z = norm.ppf(0.5 + (self.config.level if level is None else level) / 2)
        err = np.abs(self.estimates - self.config.tau)
        cover = err <= z * self.ses
        return {e: float(cover[:, j].mean()) for j, e in enumerate(self.estimators)}

    def rows(self) -> list[dict]:
        c = self.config
        bias, se = self.abs_bias, self.se
        return [
            {"estimator": e, "n": c.n, "rho": c.rho, "scenario": c.scenario, "abs_bias": bias[e],
             "se": se[e], "M": c.replications, "seed": c.seed}
            for e in self.estimators
        ]

    def to_json(self) -> str:
        doc = {
            "version": __version__,
            "rng": RNG_NAME,
            "config": asdict(self.config),
            "orders": list(self.config.orders),
            "results": self.rows(),
            "coverage": self.coverage(),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, ["estimator", "n", "rho", "scenario", "abs_bias", "se", "M", "seed"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def run_study(config: SimulationConfig, workers: int = 1) -> SimulationResult:
    """Run ``config.replications`` replicates and collect per-replicate estimates.

    Replicates are independent streams, so results do not depend on
    ``workers``.
    """
    reps = list(range(config.replications))
    if workers > 1 and len(reps) > 1:
        size = math.ceil(len(reps) / (4 * workers))
        chunks = [(config, reps[i:i + size]) for i in range(0, len(reps), size)]
        with ProcessPoolExecutor(workers) as ex:
            out = [r for chunk in ex.map(_run_chunk, chunks) for r in chunk]
    else:
        out = _run_chunk((config, reps))
    est = np.array([o[0] for o in out])
    ses = np.array([o[1] for o in out])
    return SimulationResult(config, ESTIMATORS, est, ses)


def analytic_bias(config: SimulationConfig) -> dict:
    """Exact bias of each estimator's expectation under the scenario's confounding."""
    T = config.periods
    t = np.arange(T)
    gap = config.confounding(t)
    onset = T - 1
    out = {
        "standard": float(gap[onset] - gap[onset - 1]),
        "extended": float(gap[onset] - gap[:onset].mean()),
        "sequential": float(gap[onset] - 2 * gap[onset - 1] + gap[onset - 2]),
    }
    # every order in the double DID annihilates the confounding
    out["double"] = 0.0
    return out


def sweep(base: SimulationConfig, rhos: Sequence[float] = (0.0, 0.2, 0.4, 0.6, 0.8), workers: int = 1):
    """Run the study for each autocorrelation value."""
    from dataclasses import replace

    return [run_study(replace(base, rho=r), workers) for r in rhos]
