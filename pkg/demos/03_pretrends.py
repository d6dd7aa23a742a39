"""
Pre-trend placebo tests and equivalence bounds
==============================================

A non-significant placebo estimate does not show that trends are
parallel. The equivalence bound reports the range of pre-trend gaps that
the data cannot rule out, scaled by the baseline spread of the outcome.
"""

import numpy as np

from doubledid.inference import BootstrapSpec, equivalence_ci, pretrend_test
from doubledid.panel_data import PanelDataset

rng = np.random.default_rng(2)
n, periods = 500, 4
unit = np.repeat(np.arange(n), periods)
t = np.tile(np.arange(periods), n)
group = unit < n // 2
treated = group & (t == periods - 1)

for slope in (0.0, 0.3):
    y = rng.normal(size=n)[unit] + slope * group * t + rng.normal(size=n * periods)
    data = PanelDataset.from_arrays(unit, t, y, treated)
    for order in (1, 2):
        rep = pretrend_test(data, order, BootstrapSpec(300, seed=1))
        print(f"slope {slope}: order {order} placebo {rep.point:+.3f} (p={rep.p_value:.3f}), "
              f"equivalence bound {rep.equivalence.bound:.3f} baseline SDs")

# %%
# The bound is the larger endpoint of the 90% confidence interval. An
# estimate of -0.007 with standard error 0.096 on a standardized outcome:
eq = equivalence_ci(-0.007, 0.096)
print(f"90% CI [{eq.ci_lower:.3f}, {eq.ci_upper:.3f}] -> bound {eq.bound:.3f}")
