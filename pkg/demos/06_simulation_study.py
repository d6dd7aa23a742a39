"""
Monte Carlo comparison of the estimators
========================================

Two scenarios: a constant gap between groups, and a gap growing linearly
in time. Errors follow a stationary AR(1). The table reports absolute
bias and root mean squared error around the true effect.
"""

from dataclasses import replace

from doubledid.monte_carlo import SimulationConfig, analytic_bias, run_study, sweep

base = SimulationConfig(n=1000, rho=0.6, replications=100, bootstrap_iterations=100, seed=1)

for scenario in ("extended-parallel-trends", "trends-in-trends"):
    cfg = replace(base, scenario=scenario)
    res = run_study(cfg)
    print(scenario, "orders combined:", cfg.orders)
    exact = analytic_bias(cfg)
    for e in res.estimators:
        print(f"  {e:<10} |bias| {res.abs_bias[e]:.3f} (exact {abs(exact[e]):.3f})  rmse {res.se[e]:.3f}  "
              f"coverage {res.coverage()[e]:.2f}")

# %%
# Stronger autocorrelation narrows the gap between the standard and
# sequential estimators; the combination stays close to the better one.
for res in sweep(replace(base, replications=40), rhos=(0.0, 0.4, 0.8)):
    print(f"rho={res.config.rho}: " + "  ".join(f"{e} {v:.3f}" for e, v in res.se.items()))
