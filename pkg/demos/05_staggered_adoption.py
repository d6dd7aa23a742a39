"""
Staggered adoption
==================

Units adopt at different times and stay treated. Each cohort is compared
with units that have not yet adopted, and the per-cohort estimates are
averaged with weights proportional to cohort size.
"""

import numpy as np

from doubledid.inference import BootstrapSpec
from doubledid.panel_data import PanelDataset, assign_groups, group_time_means
from doubledid.staggered import cohort_shares, sa_component, sa_double_did, sa_pretrend

rng = np.random.default_rng(5)
periods = 6
adoption = np.array([3] * 80 + [4] * 40 + [np.inf] * 120)
n = len(adoption)
unit = np.repeat(np.arange(n), periods)
t = np.tile(np.arange(periods), n)
treated = t >= adoption[unit]
y = rng.normal(size=n)[unit] + 0.3 * t + 0.8 * treated + rng.normal(size=n * periods)
data = PanelDataset.from_arrays(unit, t, y, treated, design="staggered")

print(group_time_means(data, by_cohort=True).pivot(index="time", columns="group", values="mean").round(2))
print("cohort shares:", cohort_shares(data))

# %%
# Group codes for the cohort adopting at 3: 1 adopts now, 0 not yet, -1 earlier.
g = assign_groups(data).g_its(0)
print("codes at t=4 for a unit of each cohort:", g[[0, 80, 200], 4])

# %%
print("cohort 3, standard DID:  ", round(sa_component(data, 3, 0, 1).value, 3))
print("cohort 4, sequential DID:", round(sa_component(data, 4, 0, 2).value, 3))

rep = sa_double_did(data, spec=BootstrapSpec(300, seed=2))
for p in rep.per_period:
    print(f"period {p.period}: {p.gmm.point:.3f} (se {p.gmm.se:.3f}), share {p.share:.2f}")
print(f"time average {rep.average.point:.3f} (se {rep.average.se:.3f})")

# %%
for gap in sa_pretrend(data, depth=2, spec=BootstrapSpec(300)):
    print(f"pre-trend gap {gap.gap}: {gap.report.point:+.3f}, equivalence bound {gap.report.equivalence.bound:.3f}")
