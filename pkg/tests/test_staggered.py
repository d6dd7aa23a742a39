import numpy as np
import pytest

from doubledid.did_estimators import did_kdid
from doubledid.exceptions import DomainError, NoCleanControlError
from doubledid.fe_regression import did_regression
from doubledid.gmm import double_did
from doubledid.inference import BootstrapSpec, pretrend_test
from doubledid.panel_data import PanelDataset
from doubledid.staggered import cohort_shares, sa_component, sa_double_did, sa_pretrend, sa_regression
from helpers import staggered_panel


def _single_cohort(seed, n_treated=12, n_never=15, onset=3, periods=5, covariates=False):
    rng = np.random.default_rng(seed)
    sa = staggered_panel(rng, [onset] * n_treated + [None] * n_never, periods)
    cov = rng.normal(size=(sa.n_obs, 1)) if covariates else None
    names = ("x",) if covariates else ()
    basic = PanelDataset.from_arrays(sa.unit, sa.time, sa.outcome, sa.treated, covariates=cov, covariate_names=names)
    sa = PanelDataset.from_arrays(sa.unit, sa.time, sa.outcome, sa.treated, covariates=cov, covariate_names=names,
                                  design="staggered")
    return sa, basic


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("k, s", [(1, 0), (2, 0), (3, 0), (1, 1), (2, 1)])
def test_single_cohort_component_reduces(seed, k, s):
    sa, basic = _single_cohort(seed)
    assert sa_component(sa, 3, s, k).value == pytest.approx(did_kdid(basic, k, s).value, abs=1e-12)


@pytest.mark.parametrize("regime", ["extended", "trends-in-trends"])
def test_single_cohort_double_did_reduces(regime):
    sa, basic = _single_cohort(1)
    spec = BootstrapSpec(120, seed=4)
    rep = sa_double_did(sa, spec=spec, regime=regime)
    ref = double_did(basic, regime, spec=spec)
    assert rep.orders == tuple(range(1 if regime == "extended" else 2, 4))
    for got in (rep.per_period[0].gmm, rep.average):
        assert got.point == pytest.approx(ref.point, abs=1e-12)
        assert got.se == pytest.approx(ref.se, abs=1e-12)
    assert rep.shares == {3: 1.0}


def test_single_cohort_pretrend_reduces():
    sa, basic = _single_cohort(2)
    spec = BootstrapSpec(100, seed=1)
    gap = sa_pretrend(sa, spec=spec)[0].report
    ref = pretrend_test(basic, 1, spec)
    assert gap.point == pytest.approx(ref.point, abs=1e-12)
    assert gap.se == pytest.approx(ref.se, abs=1e-12)
    assert gap.equivalence.bound == pytest.approx(ref.equivalence.bound, abs=1e-12)


@pytest.mark.parametrize("variant", ["standard", "sequential"])
def test_single_cohort_regression_reduces(variant):
    sa, basic = _single_cohort(3, covariates=True)
    assert sa_regression(sa, 3, True, variant) == pytest.approx(did_regression(basic, True, variant), abs=1e-12)


def test_cohort_shares_example():
    data = staggered_panel(np.random.default_rng(0), [2, 2, 3, None], 5)
    shares = cohort_shares(data, [2, 3])
    assert shares[2] == pytest.approx(2 / 3) and shares[3] == pytest.approx(1 / 3)
    assert sum(shares.values()) == pytest.approx(1.0)


def _means(data, units, t):
    sel = np.isin(data.unit, units) & (data.time == t)
    return data.outcome[sel].mean()


def test_two_cohort_hand_contrast():
    data = staggered_panel(np.random.default_rng(5), [2, 2, 3, 3, None, None], 4)
    early, late, never = [0, 1], [2, 3], [4, 5]
    ctrl = late + never
    want = (_means(data, early, 2) - _means(data, early, 1)) - (_means(data, ctrl, 2) - _means(data, ctrl, 1))
    assert sa_component(data, 2, 0, 1).value == pytest.approx(want, abs=1e-12)
    # one period later only never-treated units are clean controls
    want1 = (_means(data, early, 3) - _means(data, early, 1)) - (_means(data, never, 3) - _means(data, never, 1))
    assert sa_component(data, 2, 1, 1).value == pytest.approx(want1, abs=1e-12)


def test_earlier_adopters_never_enter():
    rng = np.random.default_rng(6)
    data = staggered_panel(rng, [1, 1, 3, 3, None, None], 5)
    y = data.outcome.copy()
    y[np.isin(data.unit, [0, 1])] += rng.normal(size=10) * 100
    moved = PanelDataset.from_arrays(data.unit, data.time, y, data.treated, design="staggered")
    for k in (1, 2, 3):
        assert sa_component(moved, 3, 0, k).value == pytest.approx(sa_component(data, 3, 0, k).value, abs=1e-10)


def test_no_clean_controls():
    data = staggered_panel(np.random.default_rng(0), [2, 2, 3, 3], 5)
    with pytest.raises(NoCleanControlError):
        sa_component(data, 3)
    with pytest.raises(DomainError, match="no units adopt"):
        sa_component(data, 4)


def test_dropped_periods_are_disclosed():
    data = staggered_panel(np.random.default_rng(1), [2] * 6 + [3] * 6, 5)
    rep = sa_double_did(data, spec=BootstrapSpec(60))
    assert rep.periods == (2,)
    assert rep.dropped and rep.dropped[0][0] == 3
    assert any("dropped" in n for n in rep.notes)
    assert rep.shares == {2: 1.0}


def test_trends_in_trends_average_is_share_weighted_sequential():
    data = staggered_panel(np.random.default_rng(2), [2] * 8 + [3] * 4 + [None] * 10, 5)
    rep = sa_double_did(data, spec=BootstrapSpec(80), regime="trends-in-trends")
    assert rep.orders == (2,)
    shares = cohort_shares(data, [2, 3])
    want = sum(p * sa_component(data, t, 0, 2).value for t, p in shares.items())
    assert rep.average.point == pytest.approx(want, abs=1e-12)


def test_extended_average_recovers_effect():
    data = staggered_panel(np.random.default_rng(3), [2] * 60 + [3] * 60 + [None] * 80, 5, noise=0.3)
    rep = sa_double_did(data, spec=BootstrapSpec(100))
    assert rep.average.point == pytest.approx(1.0, abs=4 * rep.average.se)
    assert np.isclose(rep.average.weights.sum(), 1.0)


def test_planted_slope_gap_detected():
    data = staggered_panel(np.random.default_rng(4), [3] * 150 + [4] * 150 + [None] * 200, 6, noise=0.1,
                           cohort_slopes={3: 0.4, 4: 0.4})
    gaps = sa_pretrend(data, depth=2, spec=BootstrapSpec(100), baseline=None)
    assert [g.gap for g in gaps] == [1, 2]
    # cohort 3 is compared with cohort 4 (same slope) and never-treated units
    want = 0.5 * 0.4 * (200 / 350) + 0.5 * 0.4
    for g in gaps:
        assert g.report.point == pytest.approx(want, abs=0.03)
        assert g.report.equivalence.bound > want


def test_pretrend_gap_needs_history():
    data = staggered_panel(np.random.default_rng(0), [2] * 5 + [None] * 5, 4)
    with pytest.raises(DomainError, match="pre-trend gap 2"):
        sa_pretrend(data, depth=2, spec=BootstrapSpec(20))


def test_shares_recomputed_inside_bootstrap():
    # with unequal cohorts the averaged replicate must differ from a fixed-share average
    data = staggered_panel(np.random.default_rng(8), [2] * 5 + [3] * 15 + [None] * 10, 5)
    rep = sa_double_did(data, spec=BootstrapSpec(50, seed=2), regime="trends-in-trends")
    assert np.var(rep.replicates[:, 0]) > 0
    assert rep.average.point == pytest.approx(rep.component_averages["sequential"], abs=1e-12)
