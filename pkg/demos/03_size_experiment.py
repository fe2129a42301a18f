"""
Empirical size under heteroskedasticity and contamination
=========================================================

Desk-scale version of the replication experiments: rejection rates of a
true null at the 5% level. Clean homoskedastic data leaves all four
robust estimators near nominal; switching on sigma2_it proportional to
W^2 plus a 10% dose of good-leverage contamination over-sizes the plain
sandwich while the transformed-residual estimators hold.

Runs in about half a minute; raise REPS for tighter bands.
"""

from panelhc import Contamination, McConfig, VcovKind, run_size_experiment

REPS = 500
KINDS = (VcovKind.PHC0, VcovKind.PHC3, VcovKind.PHC6, VcovKind.PHCJK)


def show(title, cfg):
    res = run_size_experiment(cfg)
    print(title)
    print(f"  N={cfg.N} T={cfg.T} gamma={cfg.gamma:g} "
          f"contamination={'on' if cfg.contamination.enabled else 'off'} "
          f"R={res.n_used}")
    print(f"  {'estimator':<10}{'rp 5%':>8}{'pb(b1)':>9}{'rmse':>10}")
    for kind in KINDS:
        m = res.metrics[kind]
        print(f"  {kind.value:<10}{m.rp_single:>8.3f}{m.pb_b1:>9.3f}"
              f"{m.rmse:>10.5f}")
    print()
    return res


show("clean, homoskedastic:",
     McConfig(N=50, T=5, gamma=0.0, replications=REPS, seed=1))

show("heteroskedastic (gamma = 2):",
     McConfig(N=50, T=5, gamma=2.0, replications=REPS, seed=1))

show("heteroskedastic + 10% good-leverage contamination:",
     McConfig(N=50, T=5, gamma=2.0,
              contamination=Contamination(enabled=True),
              replications=REPS, seed=1))

print("reading the last table: phc0 rejects a true null far above the")
print("nominal 5% and its pb > 0 says the reported standard errors are")
print("too small; the transformed-residual estimators stay close to")
print("nominal at the same sample size.")
