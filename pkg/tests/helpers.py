"""Random and hand-built datasets shared by the tests."""

import numpy as np

from doubledid.panel_data import PanelDataset


def toy_panel() -> PanelDataset:
    """Two treated and two control units over t = 0, 1, 2; treatment at t = 2.

    Treated means (0, 1, 3), control means (0, 0.5, 1.5).
    """
    y = {
        "a": [-1, 0, 2], "b": [1, 2, 4],      # treated
        "c": [0, 0, 1], "d": [0, 1, 2],       # control
    }
    unit, time, out, d = [], [], [], []
    for u, ys in y.items():
        for t, v in enumerate(ys):
            unit.append(u)
            time.append(t)
            out.append(float(v))
            d.append(u in "ab" and t == 2)
    return PanelDataset.from_arrays(unit, time, out, d)


def random_panel(rng, n_units=None, periods=3, treated_share=None, start=0, noise=1.0,
                 balanced=True, covariates=0) -> PanelDataset:
    n = n_units or int(rng.integers(6, 30))
    n1 = int(rng.integers(2, n - 1)) if treated_share is None else max(1, int(n * treated_share))
    g = np.zeros(n, dtype=bool)
    g[:n1] = True
    unit = np.repeat(np.arange(n), periods)
    t = np.tile(np.arange(periods), n)
    effect = rng.normal(size=n)[unit] + rng.normal(size=periods)[t]
    y = effect + noise * rng.standard_cauchy(size=n * periods).clip(-50, 50) * 0.1 + rng.normal(size=n * periods)
    d = g[unit] & (t == periods - 1)
    keep = np.ones(len(y), dtype=bool)
    if not balanced:
        drop = rng.random(len(y)) < 0.15
        # keep at least two units per group/period
        for gg in (True, False):
            for tt in range(periods):
                idx = np.flatnonzero((g[unit] == gg) & (t == tt))
                drop[idx[:2]] = False
        keep = ~drop
    X = rng.normal(size=(len(y), covariates))
    names = tuple(f"x{j}" for j in range(covariates))
    return PanelDataset.from_arrays(unit[keep], t[keep] + start, y[keep], d[keep],
                                    covariates=X[keep], covariate_names=names)


def random_rcs(rng, periods=3, n_clusters=None) -> PanelDataset:
    """Repeated cross-section: fresh individuals per period, groups identified by cluster."""
    k = n_clusters or int(rng.integers(4, 10))
    k1 = int(rng.integers(1, k))
    rows_c, rows_t = [], []
    for t in range(periods):
        for c in range(k):
            m = int(rng.integers(1, 6))
            rows_c += [c] * m
            rows_t += [t] * m
    c = np.array(rows_c)
    t = np.array(rows_t)
    g = c < k1
    y = rng.normal(size=len(c)) * 2 + 0.3 * t + g
    d = g & (t == periods - 1)
    return PanelDataset.from_arrays(np.arange(len(c)), t, y, d, cluster=c, mode="rcs")


def staggered_panel(rng, adoption, periods, noise=1.0, cohort_slopes=None) -> PanelDataset:
    """Panel with per-unit adoption period indices (``None`` = never)."""
    n = len(adoption)
    unit = np.repeat(np.arange(n), periods)
    t = np.tile(np.arange(periods), n)
    a = np.array([np.inf if x is None else x for x in adoption], dtype=float)
    y = rng.normal(size=n)[unit] + 0.5 * t + noise * rng.normal(size=n * periods)
    if cohort_slopes:
        for coh, slope in cohort_slopes.items():
            y += slope * t * (a[unit] == coh)
    d = t >= a[unit]
    y = y + 1.0 * d
    return PanelDataset.from_arrays(unit, t, y, d, design="staggered")


def polynomial_panel(coefs, tau, periods, onset, n_per_group=3, s_effects=None) -> PanelDataset:
    """Noiseless panel with group-specific polynomial confounding ``sum c_j t^j``."""
    n = 2 * n_per_group
    unit = np.repeat(np.arange(n), periods)
    t = np.tile(np.arange(periods), n)
    g = (unit < n_per_group).astype(float)
    base = 1.0 + 0.7 * t - 0.05 * t**2 + 0.2 * (unit % 3)
    conf = np.polynomial.polynomial.polyval(t.astype(float), coefs)
    d = (g == 1) & (t >= onset)
    y = base + g * conf + tau * d
    return PanelDataset.from_arrays(unit, t, y, d)
