"""
Leverage diagnostics and the hybrid estimator
=============================================

Plants one unit with wild regressor values (a good leverage point: far
out in x, still on the regression line) and walks through the
diagnostics that flag it: per-observation leverage h_itt, the time
averages, and the per-unit maximum ratio h*_i that drives phc6.
"""

import numpy as np

from panelhc import (
    PanelDataset,
    fit_within,
    leverage,
    vcov_phc0,
    vcov_phc3,
    vcov_phc6,
    within_transform,
    leave_one_out,
)

rng = np.random.default_rng(7)
N, T = 12, 5
units = np.repeat(np.arange(1, N + 1), T)
times = np.tile(np.arange(1, T + 1), N)
x = rng.standard_normal(N * T)

# unit 12 gets x values an order of magnitude out; y stays on the line,
# so this is leverage without being an outlier in the residual sense
x[-T:] = 5.0 + 12.0 * rng.standard_normal(T)
y = 1.5 * x + np.repeat(rng.standard_normal(N), T) \
    + rng.standard_normal(N * T)

panel = PanelDataset.from_arrays(units, times, y, x[:, None], ["x"])
dm = within_transform(panel)
fit = fit_within(dm)
lev = leverage(fit, dm)

print(f"sum of h_itt = {lev.diagonals.sum():.6f} (equals k = {fit.k})")
print()
print(f"{'unit':>4}  {'h_i,max':>8}  {'h*_i':>8}  flagged")
for i, u in enumerate(panel.units):
    hmax = lev.diagonals[panel.offsets[i]:panel.offsets[i + 1]].max()
    star = lev.max_relative[i]
    mark = "  <- planted" if u == N else ""
    print(f"{u:>4}  {hmax:>8.4f}  {star:>8.3f}  "
          f"{str(star >= 2.0).lower():<5}{mark}")

# how much does the flagged unit move the fit? compare against the
# leave-one-out coefficient computed without refitting
flagged = int(np.argmax(lev.max_relative))
b_without = leave_one_out(fit, dm, flagged, lev=lev)
print()
print(f"beta with unit {panel.units[flagged]}:    {fit.beta[0]:.5f}")
print(f"beta without it:     {b_without[0]:.5f}")

# the three sandwiches: phc6 only pays the transformed-residual price
# for the flagged unit
se0 = float(np.sqrt(vcov_phc0(fit, dm).matrix[0, 0]))
se3 = float(np.sqrt(vcov_phc3(fit, dm, lev).matrix[0, 0]))
hyb = vcov_phc6(fit, dm, lev)
se6 = float(np.sqrt(hyb.matrix[0, 0]))
print()
print(f"se(x): phc0 {se0:.5f} | phc3 {se3:.5f} | phc6 {se6:.5f}")
print(f"phc6 flagged units: {hyb.flagged_units}")
