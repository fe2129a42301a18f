"""Replication experiments: size, power, and the data generating process.

The DGP is a balanced N x T panel with five regressors built from two
standard normal draws (x3 = x1^2, x4 = x2^2, x5 = x1*x2), a uniform
fixed effect, and errors whose conditional variance follows the mean
index W_it = b0 + sum_j b_j x_it,j raised to a power gamma:

    sigma2_it = z(gamma) * W_it^gamma,   z(gamma) = 1 / mean(W^gamma),

so the in-sample average error variance is one by construction, whatever
gamma. gamma = 0 is homoskedastic; gamma must be a non-negative even
integer because W has full normal support and odd or fractional powers
would produce negative or undefined variances. Optional contamination
replaces a fixed 10% of x1 cells with N(5, 25^2) draws before the
derived regressors are formed, planting good-leverage points whose
influence propagates into x3 and x5.

Each replication r draws from its own counter-based substream keyed by
(seed, r), so results are bitwise identical no matter how many worker
threads execute them (the PANEL_HC_THREADS environment variable, or the
``threads`` argument, affects wall-clock time only).

A size run stores every replication's t and Wald statistics; the power
run then rescores those same statistics against shifted nulls, using
empirical percentiles of the stored null sample as critical values, so a
whole power curve costs no additional fits.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigurationError, EstimationError, ExperimentOrderError
from .fe_core import fit_within, leverage
from .inference import LinearRestriction, dist, t_test, wald_test
from .paneldata import PanelDataset, within_transform
from .vcov import (
    VcovKind,
    vcov_conventional,
    vcov_phc0,
    vcov_phc3,
    vcov_phc6,
    vcov_phcjk,
)

__all__ = [
    "Contamination",
    "McConfig",
    "TrueParams",
    "McMetrics",
    "SizeResult",
    "generate_panel",
    "moments_of_w",
    "run_size_experiment",
    "run_power_experiment",
    "empirical_percentile",
    "write_metrics_csv",
    "write_power_csv",
]

_DEFAULT_BETAS = (1.0, 1.0, 1.0, 1.0, 1.0, 0.0)
_DEFAULT_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(21))
_DEFAULT_ESTIMATORS = (VcovKind.PHC0, VcovKind.PHC3, VcovKind.PHC6, VcovKind.PHCJK)


@dataclass(frozen=True)
class Contamination:
    """Good-leverage contamination of x1: fixed count, cell-isolated."""

    enabled: bool = False
    fraction: float = 0.10
    mean: float = 5.0
    sd: float = 25.0

    def __post_init__(self):
        if not 0.0 <= self.fraction < 1.0:
            raise ConfigurationError(
                f"contamination fraction must be in [0, 1), got {self.fraction!r}"
            )
        if self.sd < 0:
            raise ConfigurationError(f"contamination sd must be >= 0, got {self.sd!r}")


@dataclass(frozen=True)
class McConfig:
    """Settings for one experiment cell.

    Attributes
    ----------
    N, T : int
        Units and periods of the balanced panel (both at least 2).
    gamma : float
        Heteroskedasticity degree; non-negative even integer (0 = none).
    betas : tuple of 6 floats
        (b0, b1..b5); the estimation design always has the 5 regressors.
    theta : float
        MA(1) coefficient on the lagged shock; 0 throughout the tested
        experiments.
    contamination : Contamination
    replications : int
    seed : int
    alpha : float
        Nominal test level.
    estimators : tuple of VcovKind
    power_grid : tuple of float
        Alternative values for coefficient 1, default 0.50..1.50 by 0.05.
    """

    N: int
    T: int
    gamma: float = 0.0
    betas: tuple = _DEFAULT_BETAS
    theta: float = 0.0
    contamination: Contamination = Contamination()
    replications: int = 1000
    seed: int = 0
    alpha: float = 0.05
    estimators: tuple = _DEFAULT_ESTIMATORS
    power_grid: tuple = _DEFAULT_GRID

    def __post_init__(self):
        if self.N < 2 or self.T < 2:
            raise ConfigurationError(
                f"need N >= 2 and T >= 2, got N={self.N}, T={self.T}"
            )
        g = self.gamma
        if g < 0 or g != int(g) or int(g) % 2 != 0:
            raise ConfigurationError(
                f"gamma={g!r} is unsupported: W_it has full normal support, so "
                f"W^gamma stays non-negative only for even gamma in {{0, 2, 4, ...}}"
            )
        betas = tuple(float(b) for b in self.betas)
        if len(betas) != 6:
            raise ConfigurationError(
                f"betas must be the 6-tuple (b0, b1..b5), got {len(betas)} values"
            )
        object.__setattr__(self, "betas", betas)
        if self.replications < 1:
            raise ConfigurationError(
                f"replications must be >= 1, got {self.replications!r}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha!r}")
        kinds = tuple(VcovKind(e) for e in self.estimators)
        if not kinds:
            raise ConfigurationError("estimators must not be empty")
        object.__setattr__(self, "estimators", kinds)
        object.__setattr__(
            self, "power_grid", tuple(float(b) for b in self.power_grid)
        )
        if not self.power_grid:
            raise ConfigurationError("power_grid must not be empty")


@dataclass(frozen=True)
class TrueParams:
    """What the generator actually used for one replication."""

    betas: tuple
    alpha: np.ndarray
    sigma2: np.ndarray
    z: float
    contaminated: np.ndarray
    theta: float


@dataclass
class McMetrics:
    """Aggregates for one estimator within one experiment cell.

    pb_* = 1 - mean(se)/sd(beta_hat); positive when the reported standard
    errors understate the sampling spread. rmse is the mean absolute
    deviation of the per-replication se around the Monte Carlo sd.
    sd_beta and mean_se refer to coefficient 1. power_curve maps the
    alternative b1 to its size-adjusted rejection rate once a power run
    has been attached.
    """

    kind: VcovKind
    pb_b1: float
    pb_b2: float
    rp_single: float
    rp_joint: float
    rmse: float
    sd_beta: float
    mean_se: float
    power_curve: Optional[dict] = None


@dataclass
class SizeResult:
    """Everything a size run produced, with per-replication samples kept
    so power curves can be computed without refitting."""

    config: McConfig
    metrics: dict
    null_stats: dict
    se1: dict
    beta1: np.ndarray
    beta2: np.ndarray
    failures: int
    n_used: int


def generate_panel(cfg: McConfig, rep_index: int) -> tuple[PanelDataset, TrueParams]:
    """Draw one balanced panel from the DGP.

    Deterministic in (cfg.seed, rep_index): the replication gets its own
    counter-based substream, and the draw order is fixed as x1, x2,
    contamination (cell choice, then replacement values), the fixed
    effects, then the shocks.

    Returns
    -------
    (PanelDataset, TrueParams)
        Units are labeled 1..N, times 1..T, regressors "x1".."x5".
    """
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=cfg.seed,
                                                spawn_key=(int(rep_index),)))
    )
    N, T = cfg.N, cfg.T
    nt = N * T
    x1 = rng.standard_normal(nt)
    x2 = rng.standard_normal(nt)
    contaminated = np.empty(0, dtype=np.int64)
    con = cfg.contamination
    if con.enabled:
        m = int(math.floor(con.fraction * nt))
        if m > 0:
            contaminated = np.sort(rng.choice(nt, size=m, replace=False))
            x1[contaminated] = con.mean + con.sd * rng.standard_normal(m)
    alpha = rng.random(N)
    eps = rng.standard_normal((N, T + 1))
    # derived regressors inherit the contamination in x1
    x = np.column_stack((x1, x2, x1 * x1, x2 * x2, x1 * x2))
    b0, b = cfg.betas[0], np.asarray(cfg.betas[1:])
    w = b0 + x @ b
    wg = np.ones(nt) if cfg.gamma == 0 else w ** cfg.gamma
    z = 1.0 / float(wg.mean())
    sigma2 = z * wg
    u = np.sqrt(sigma2).reshape(N, T) * eps[:, 1:] + cfg.theta * eps[:, :-1]
    y = w + np.repeat(alpha, T) + u.reshape(nt)
    panel = PanelDataset(
        units=tuple(range(1, N + 1)),
        times=np.tile(np.arange(1, T + 1, dtype=np.int64), N),
        y=y,
        x=np.asfortranarray(x),
        offsets=np.arange(0, nt + 1, T, dtype=np.int64),
        column_names=("x1", "x2", "x3", "x4", "x5"),
    )
    return panel, TrueParams(
        betas=cfg.betas,
        alpha=alpha,
        sigma2=sigma2,
        z=z,
        contaminated=contaminated,
        theta=cfg.theta,
    )


def moments_of_w(
    gamma: int,
    betas: Sequence[float] = _DEFAULT_BETAS,
    mu: float = 0.0,
    sigma: float = 1.0,
) -> tuple[float, float]:
    """Mean and variance of W^gamma under independent normal regressors.

    A validation utility, not part of the generator: the generator's
    derived regressors are neither independent nor normal, so these
    closed forms apply to the idealized design where every x_j is an
    independent N(mu_j, sigma_j^2) draw. W is then itself normal, giving

        E W    = b0 + sum b_j mu_j          Var W    = sum b_j^2 sigma_j^2
        E W^2  = (E W)^2 + Var W            Var W^2  = 2 (Var W)^2 + 4 (E W)^2 Var W

    Parameters
    ----------
    gamma : {1, 2}
    betas : (b0, b1..bJ)
    mu, sigma : float or sequence of length J
        Regressor means and standard deviations.

    Returns
    -------
    (mean, variance) of W^gamma.
    """
    betas = tuple(float(v) for v in betas)
    b0, b = betas[0], np.asarray(betas[1:])
    mu_v = np.broadcast_to(np.asarray(mu, dtype=float), b.shape)
    sd_v = np.broadcast_to(np.asarray(sigma, dtype=float), b.shape)
    mean_w = b0 + float(b @ mu_v)
    var_w = float((b * sd_v) @ (b * sd_v))
    if gamma == 1:
        return mean_w, var_w
    if gamma == 2:
        mean_w2 = mean_w * mean_w + var_w
        var_w2 = 2.0 * var_w * var_w + 4.0 * mean_w * mean_w * var_w
        return mean_w2, var_w2
    raise ValueError(f"closed-form moments available for gamma in {{1, 2}}, got {gamma!r}")


def empirical_percentile(sample, p: float) -> float:
    """Order statistic at index ceil(p * n) of the sorted sample (1-based)."""
    s = np.sort(np.asarray(sample, dtype=float))
    if s.size == 0:
        raise ValueError("empty sample")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p!r}")
    idx = max(int(math.ceil(p * s.size)), 1)
    return float(s[idx - 1])


def _estimate(kind: VcovKind, fit, dm, lev):
    if kind == VcovKind.CONVENTIONAL:
        return vcov_conventional(fit)
    if kind == VcovKind.PHC0:
        return vcov_phc0(fit, dm)
    if kind == VcovKind.PHC3:
        return vcov_phc3(fit, dm, lev)
    if kind == VcovKind.PHC6:
        return vcov_phc6(fit, dm, lev)
    return vcov_phcjk(fit, dm, lev)


def _replicate(cfg: McConfig, rep: int, restr: LinearRestriction):
    panel, _ = generate_panel(cfg, rep)
    dm = within_transform(panel)
    fit = fit_within(dm)
    lev = leverage(fit, dm)
    per_kind = {}
    for kind in cfg.estimators:
        est = _estimate(kind, fit, dm, lev)
        t = t_test(fit, est, 0, cfg.betas[1])
        w = wald_test(fit, est, restr)
        per_kind[kind] = (
            math.sqrt(max(float(est.matrix[0, 0]), 0.0)),
            math.sqrt(max(float(est.matrix[1, 1]), 0.0)),
            t.statistic,
            w.statistic,
        )
    return float(fit.beta[0]), float(fit.beta[1]), per_kind


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        raw = os.environ.get("PANEL_HC_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigurationError(
                f"PANEL_HC_THREADS={raw!r} is not an integer"
            ) from None
    if threads < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {threads}")
    return threads


def run_size_experiment(cfg: McConfig, threads: Optional[int] = None) -> SizeResult:
    """Estimate empirical size, proportional bias, and RMSE at the true null.

    Each replication fits the model, computes every requested covariance
    estimate, and evaluates the t test of H0: b1 = its true value plus
    the joint Wald of b1..b4 at their true values (chi-square(4) rule).
    Replications where estimation fails are dropped and counted; more
    than 1% failures raises a RuntimeWarning.

    Parameters
    ----------
    cfg : McConfig
    threads : int, optional
        Worker threads; defaults to the PANEL_HC_THREADS environment
        variable (or 1). Never affects the numbers.

    Returns
    -------
    SizeResult
    """
    if cfg.replications < 2:
        raise ConfigurationError(
            "size experiments need at least 2 replications for the MC sd"
        )
    threads = _resolve_threads(threads)
    restr = LinearRestriction(
        np.hstack((np.eye(4), np.zeros((4, 1)))), np.asarray(cfg.betas[1:5])
    )

    def work(r: int):
        try:
            return _replicate(cfg, r, restr)
        except EstimationError as exc:
            return exc

    # pin the BLAS pool to one thread: adaptive BLAS parallelism would change
    # summation order (hence bits) with the worker count, and at these block
    # sizes it is overhead anyway
    reps = range(cfg.replications)
    with threadpool_limits(limits=1, user_api="blas"):
        if threads == 1:
            raw = [work(r) for r in reps]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                raw = list(pool.map(work, reps))

    ok = [r for r in raw if not isinstance(r, EstimationError)]
    failures = len(raw) - len(ok)
    if failures > 0.01 * cfg.replications:
        warnings.warn(
            f"{failures} of {cfg.replications} replications failed and were "
            f"excluded",
            RuntimeWarning,
            stacklevel=2,
        )
    if len(ok) < 2:
        raise EstimationError(
            f"only {len(ok)} of {cfg.replications} replications succeeded"
        )

    beta1 = np.array([r[0] for r in ok])
    beta2 = np.array([r[1] for r in ok])
    sd1 = float(np.std(beta1, ddof=1))
    sd2 = float(np.std(beta2, ddof=1))
    chi_crit = dist("chi_square", "quantile", {"df": 4}, 1.0 - cfg.alpha)
    n, k = cfg.N * cfg.T, 5
    metrics: dict = {}
    null_stats: dict = {}
    se1_all: dict = {}
    for kind in cfg.estimators:
        se1 = np.array([r[2][kind][0] for r in ok])
        se2 = np.array([r[2][kind][1] for r in ok])
        tstat = np.array([r[2][kind][2] for r in ok])
        wstat = np.array([r[2][kind][3] for r in ok])
        dfr = n - cfg.N - k if kind == VcovKind.CONVENTIONAL else cfg.N - 1
        tcrit = dist("student_t", "quantile", {"df": dfr}, 1.0 - cfg.alpha / 2.0)
        mean_se1 = float(se1.mean())
        metrics[kind] = McMetrics(
            kind=kind,
            pb_b1=1.0 - mean_se1 / sd1,
            pb_b2=1.0 - float(se2.mean()) / sd2,
            rp_single=float(np.mean(np.abs(tstat) > tcrit)),
            rp_joint=float(np.mean(wstat > chi_crit)),
            rmse=float(np.mean(np.abs(se1 - sd1))),
            sd_beta=sd1,
            mean_se=mean_se1,
        )
        null_stats[kind] = tstat
        se1_all[kind] = se1
    return SizeResult(
        config=cfg,
        metrics=metrics,
        null_stats=null_stats,
        se1=se1_all,
        beta1=beta1,
        beta2=beta2,
        failures=failures,
        n_used=len(ok),
    )


def run_power_experiment(cfg: McConfig, size: Optional[SizeResult] = None) -> dict:
    """Size-adjusted power curves from a completed size run.

    Critical values are the alpha/2 and 1 - alpha/2 empirical percentiles
    of the stored null t statistics. For an alternative b1 the statistic
    shifts to T1_r = T0_r + (b1_true - b1)/se_r, so the whole curve is
    rescoring, not refitting; at b1 = b1_true the rejection rate is alpha
    up to percentile granularity.

    Parameters
    ----------
    cfg : McConfig
    size : SizeResult
        The stored run for this exact configuration.

    Returns
    -------
    dict
        kind -> {b1 alternative -> rejection rate}; also attached to
        each McMetrics as ``power_curve``.

    Raises
    ------
    ExperimentOrderError
        If the size run is missing or was computed for a different
        configuration.
    """
    if size is None:
        raise ExperimentOrderError(
            "power needs the null statistics: run run_size_experiment(cfg) "
            "first and pass its result"
        )
    if size.config != cfg:
        raise ExperimentOrderError(
            "size result was computed for a different configuration"
        )
    true_b1 = cfg.betas[1]
    curves: dict = {}
    for kind in cfg.estimators:
        null = size.null_stats[kind]
        se = size.se1[kind]
        lo = empirical_percentile(null, cfg.alpha / 2.0)
        hi = empirical_percentile(null, 1.0 - cfg.alpha / 2.0)
        curve = {}
        for b1 in cfg.power_grid:
            t1 = null + (true_b1 - b1) / se
            curve[b1] = float(np.mean((t1 < lo) | (t1 > hi)))
        curves[kind] = curve
        size.metrics[kind].power_curve = curve
    return curves


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_metrics_csv(results: Sequence[SizeResult], path) -> None:
    """One row per (N, T, gamma, estimator); full-precision floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["N", "T", "gamma", "estimator", "pb_b1", "pb_b2",
             "rp_single", "rp_joint", "rmse"]
        )
        for res in results:
            cfg = res.config
            for kind in cfg.estimators:
                m = res.metrics[kind]
                w.writerow(
                    [cfg.N, cfg.T, _fmt(cfg.gamma), kind.value,
                     _fmt(m.pb_b1), _fmt(m.pb_b2), _fmt(m.rp_single),
                     _fmt(m.rp_joint), _fmt(m.rmse)]
                )


def write_power_csv(result: SizeResult, path) -> None:
    """Power curves as (estimator, beta1_alt, rejection_rate) rows."""
    for kind in result.config.estimators:
        if result.metrics[kind].power_curve is None:
            raise ExperimentOrderError(
                f"no power curve for {kind.value}: run run_power_experiment first"
            )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "beta1_alt", "rejection_rate"])
        for kind in result.config.estimators:
            for b1, rate in result.metrics[kind].power_curve.items():
                w.writerow([kind.value, _fmt(b1), _fmt(rate)])
