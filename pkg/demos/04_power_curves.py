"""
Size-adjusted power curves
==========================

Power against alternatives for coefficient 1, size-adjusted: critical
values are empirical percentiles of each estimator's own null t
statistics, so every curve is anchored at the nominal level when the
null is true. The curve needs no refitting; the stored statistics are
rescored against each alternative.
"""

from panelhc import (
    Contamination,
    McConfig,
    VcovKind,
    run_power_experiment,
    run_size_experiment,
)

cfg = McConfig(
    N=50, T=5, gamma=2.0,
    contamination=Contamination(enabled=True),
    replications=500, seed=1,
    power_grid=tuple(0.5 + 0.1 * i for i in range(11)),
)

size = run_size_experiment(cfg)
curves = run_power_experiment(cfg, size)

kinds = (VcovKind.PHC0, VcovKind.PHC3, VcovKind.PHCJK)
width = 40

print(f"true b1 = {cfg.betas[1]:g}, alpha = {cfg.alpha:g}, "
      f"R = {cfg.replications}")
for kind in kinds:
    curve = curves[kind]
    print()
    print(f"{kind.value} (size-adjusted)")
    for b1 in cfg.power_grid:
        rate = curve[b1]
        bar = "#" * round(rate * width)
        mark = " <- null" if b1 == cfg.betas[1] else ""
        print(f"  b1={b1:4.1f}  {rate:6.3f}  {bar}{mark}")

print()
print("all curves pass through the nominal level at the true value by")
print("construction, and after the adjustment the estimators are hard")
print("to tell apart: the practical difference under contamination is")
print("phc0's inflated size (see 03_size_experiment.py), which the")
print("adjustment has absorbed into its critical values here.")
