"""Acceptance gate: the eleven headline guarantees, one test each.

Every test prints a single PASS/FAIL line (run with -s to see them all);
the slow experiment cells are shared across tests through module-scoped
fixtures. Expected wall time is about two minutes, dominated by the
N=500, T=20, R=2000 cell.
"""

import csv

import numpy as np
import pytest

from panelhc import (
    McConfig,
    VcovKind,
    dist,
    fit_within,
    generate_panel,
    leave_one_out,
    leverage,
    moments_of_w,
    run_power_experiment,
    run_size_experiment,
    vcov_phc0,
    vcov_phc3,
    vcov_phc6,
    vcov_phcjk,
    vcov_phcjk_closed,
    within_transform,
)
from panelhc.cli import main as cli_main

from conftest import (
    make_all_flagged_panel,
    make_identical_units_panel,
    make_random_panel,
    refit_beta,
)

ROBUST = (VcovKind.PHC0, VcovKind.PHC3, VcovKind.PHC6, VcovKind.PHCJK)


def _report(label: str, ok: bool, detail: str = ""):
    tail = f" ({detail})" if detail else ""
    print(f"{label}: {'PASS' if ok else 'FAIL'}{tail}")
    assert ok, f"{label}{tail}"


@pytest.fixture(scope="module")
def fifty_panels():
    """Fifty random panels with their fits, shared by the oracle checks."""
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(50):
        N = int(rng.integers(3, 41))
        T = int(rng.integers(2, 7))
        k = int(rng.integers(1, min(5, N * (T - 1))))
        p = make_random_panel(rng, N, T, k, unbalanced=bool(rng.integers(2)))
        dm = within_transform(p)
        fit = fit_within(dm)
        out.append((p, dm, fit))
    return out


@pytest.fixture(scope="module")
def big_run():
    """N=500, T=20 homoskedastic null cell with its power curves."""
    cfg = McConfig(N=500, T=20, gamma=0.0, replications=2000, seed=0)
    size = run_size_experiment(cfg, threads=4)
    curves = run_power_experiment(cfg, size)
    return cfg, size, curves


@pytest.fixture(scope="module")
def contaminated_run():
    from panelhc import Contamination

    cfg = McConfig(
        N=50, T=5, gamma=2.0,
        contamination=Contamination(enabled=True),
        replications=2000, seed=0,
    )
    return cfg, run_size_experiment(cfg, threads=4)


def test_01_leave_one_out_matches_brute_force_refits(fifty_panels):
    worst = 0.0
    for p, dm, fit in fifty_panels:
        for i in range(fit.N):
            delta = np.abs(leave_one_out(fit, dm, i) -
                           refit_beta(p, exclude=i)).max()
            worst = max(worst, float(delta))
    _report("01 leave-one-out downdates equal brute-force refits",
            worst <= 1e-9, f"max abs diff {worst:.2e}")


def test_02_jackknife_dual_forms_agree(fifty_panels):
    worst = 0.0
    for p, dm, fit in fifty_panels:
        lev = leverage(fit, dm)
        a = vcov_phcjk(fit, dm, lev).matrix
        b = vcov_phcjk_closed(fit, dm, lev).matrix
        denom = max(np.linalg.norm(a), 1e-300)
        worst = max(worst, float(np.linalg.norm(a - b) / denom))
    _report("02 jackknife definitional and closed forms agree",
            worst <= 1e-9, f"max relative Frobenius {worst:.2e}")


def test_03_hybrid_boundary_identities():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(5):
        p = make_identical_units_panel(rng, N=6, T=4, k=2)
        dm = within_transform(p)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        assert np.all(lev.max_relative < 2.0)
        d = np.abs(vcov_phc6(fit, dm, lev).matrix -
                   vcov_phc0(fit, dm).matrix).max()
        worst = max(worst, float(d))
    for reps in (1, 3):
        p = make_all_flagged_panel(rng, reps=reps)
        dm = within_transform(p)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        assert np.all(lev.max_relative >= 2.0)
        d = np.abs(vcov_phc6(fit, dm, lev).matrix -
                   vcov_phc3(fit, dm, lev).matrix).max()
        worst = max(worst, float(d))
    _report("03 hybrid collapses to its parent on both branches",
            worst <= 1e-14, f"max abs diff {worst:.2e}")


def test_04_hat_trace_equals_k(fifty_panels):
    worst = 0.0
    for p, dm, fit in fifty_panels:
        lev = leverage(fit, dm)
        worst = max(worst, abs(float(lev.diagonals.sum()) - fit.k))
    _report("04 hat diagonal sums to k on every panel",
            worst <= 1e-8, f"max |trace - k| {worst:.2e}")


def test_05_homoskedastic_size_near_nominal(big_run):
    cfg, size, _ = big_run
    rates = {kind.value: size.metrics[kind].rp_single for kind in ROBUST}
    ok = all(0.035 <= r <= 0.065 for r in rates.values())
    _report("05 homoskedastic rejection rates sit in the nominal band",
            ok, ", ".join(f"{k}={v:.4f}" for k, v in rates.items()))


def test_06_contamination_oversizes_the_plain_sandwich(contaminated_run):
    cfg, size = contaminated_run
    m0 = size.metrics[VcovKind.PHC0]
    m3 = size.metrics[VcovKind.PHC3]
    checks = {
        "rp0>rp3": m0.rp_single > m3.rp_single,
        "rp0>=0.07": m0.rp_single >= 0.07,
        "pb0>0": m0.pb_b1 > 0.0,
        "rmse0>rmse3": m0.rmse > m3.rmse,
    }
    _report(
        "06 contaminated leverage over-sizes the unweighted sandwich",
        all(checks.values()),
        f"rp0={m0.rp_single:.3f} rp3={m3.rp_single:.3f} "
        f"pb0={m0.pb_b1:.3f} rmse0={m0.rmse:.2e} rmse3={m3.rmse:.2e}",
    )


def test_07_transformed_and_jackknife_converge_with_N():
    medians = []
    for idx, N in enumerate((25, 100, 400)):
        cfg = McConfig(N=N, T=5, gamma=0.0, replications=2, seed=1000 + idx)
        ratios = []
        for rep in range(200):
            panel, _ = generate_panel(cfg, rep)
            dm = within_transform(panel)
            fit = fit_within(dm)
            lev = leverage(fit, dm)
            gap = np.linalg.norm(vcov_phc3(fit, dm, lev).matrix -
                                 vcov_phcjk(fit, dm, lev).matrix)
            base = np.linalg.norm(vcov_phc0(fit, dm).matrix)
            ratios.append(gap / base)
        medians.append(float(np.median(ratios)))
    ok = medians[0] > medians[1] > medians[2]
    _report("07 transformed-residual and jackknife estimates converge",
            ok, "medians " + " > ".join(f"{m:.3e}" for m in medians))


def test_08_power_curves_anchored_and_steep(big_run):
    cfg, size, curves = big_run
    tol = 2.0 / cfg.replications
    ok = True
    details = []
    for kind in ROBUST:
        curve = curves[kind]
        at_null = curve[1.0]
        far = min(curve[0.5], curve[1.5])
        ok = ok and abs(at_null - cfg.alpha) <= tol and far >= 0.99
        details.append(f"{kind.value}: null {at_null:.4f}, far {far:.3f}")
    _report("08 size-adjusted power anchors at alpha and saturates",
            ok, "; ".join(details))


def test_09_variance_normalization_and_design_second_moment():
    from panelhc import Contamination

    worst = 0.0
    for gamma in (0.0, 2.0):
        for con in (Contamination(), Contamination(enabled=True)):
            cfg = McConfig(N=40, T=6, gamma=gamma, contamination=con,
                           replications=2, seed=5)
            for rep in range(5):
                _, true = generate_panel(cfg, rep)
                worst = max(worst, abs(float(np.mean(true.sigma2)) - 1.0))
    mean_w2, _ = moments_of_w(2)
    rng = np.random.default_rng(909)
    x = rng.standard_normal((1_000_000, 5))
    betas = np.array([1.0, 1.0, 1.0, 1.0, 0.0])  # default slopes
    w = 1.0 + x @ betas
    rel = abs(float(np.mean(w ** 2)) - mean_w2) / mean_w2
    ok = worst <= 1e-12 and mean_w2 == 5.0 and rel <= 0.01
    _report("09 error variance normalizes to one and E W^2 checks out",
            ok, f"max |mean sigma2 - 1| {worst:.1e}, sim vs 5 rel {rel:.4f}")


def test_10_distribution_round_trips_and_reference_value():
    kinds = (
        ("normal", None),
        ("student_t", {"df": 10}),
        ("chi_square", {"df": 4}),
        ("f", {"df1": 4, "df2": 45}),
    )
    worst = 0.0
    for kind, params in kinds:
        for p in np.linspace(0.001, 0.999, 41):
            x = dist(kind, "quantile", params, float(p))
            worst = max(worst, abs(dist(kind, "cdf", params, x) - p))
    ref = dist("student_t", "quantile", {"df": 10}, 0.975)
    ok = worst <= 1e-7 and abs(ref - 2.228139) <= 1e-5
    _report("10 distribution cdf/quantile pairs round-trip",
            ok, f"max round-trip err {worst:.1e}, t(10) q975 {ref:.6f}")


def test_11_experiment_outputs_byte_identical(tmp_path, monkeypatch, capsys):
    def run(tag, threads):
        monkeypatch.setenv("PANEL_HC_THREADS", threads)
        out = tmp_path / tag
        rc = cli_main([
            "mc", "--N", "12", "--T", "4", "--reps", "40", "--seed", "11",
            "--power", "--out-dir", str(out),
        ])
        assert rc == 0
        return ((out / "mc_metrics.csv").read_bytes(),
                (out / "mc_power.csv").read_bytes())

    a = run("t1_first", "1")
    b = run("t1_again", "1")
    c = run("t4", "4")
    capsys.readouterr()
    ok = a == b == c
    _report("11 experiment outputs are byte-identical across thread counts",
            ok, "reruns and PANEL_HC_THREADS 1 vs 4")
