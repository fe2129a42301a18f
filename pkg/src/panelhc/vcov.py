"""Covariance estimators for the within-group coefficients.

All matrices are on the finite-sample Var(beta_hat) scale: they are built
from the un-normalized cross-product inverse (X'X)^-1 and plain unit sums,
so t and Wald statistics need no extra sample-size factor. Multiply by N
to recover the asymptotic-scale AVar.

The robust family shares one sandwich shape,

    (X'X)^-1 [ sum_i c_i  X_i' e_i e_i' X_i ] (X'X)^-1,

and differs only in the per-unit residual transform e_i and scale c_i:

=========  =======================  ==========================================
kind       e_i                      c_i
=========  =======================  ==========================================
phc0       u_i                      (n-1)/(n-k) * N/(N-1), every unit
phc3       (I - H_i)^-1 u_i         (N-1)/N, every unit
phc6       u_i or transformed       c0 while h*_i < 2, else c3 with transform
phcjk      leave-one-out form       (N-1)/N on deviations from the L1O mean
=========  =======================  ==========================================

phc6's boundary behavior is exact by construction: with no flagged units
it runs the identical floating-point sequence as phc0, with all units
flagged the identical sequence as phc3.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import fe_core
from .errors import InsufficientDOFError
from .fe_core import FEFit, LeverageSet
from .paneldata import DemeanedPanel

__all__ = [
    "VcovKind",
    "VcovEstimate",
    "vcov_conventional",
    "vcov_phc0",
    "vcov_phc3",
    "vcov_phc6",
    "vcov_phcjk",
    "vcov_phcjk_closed",
    "to_csv",
    "to_json",
]


class VcovKind(str, Enum):
    """The five supported covariance estimators; values match CLI names."""

    CONVENTIONAL = "conventional"
    PHC0 = "phc0"
    PHC3 = "phc3"
    PHC6 = "phc6"
    PHCJK = "phcjk"

    def __str__(self) -> str:  # "phc0" rather than "VcovKind.PHC0"
        return self.value


@dataclass(frozen=True)
class VcovEstimate:
    """A k x k covariance matrix plus bookkeeping.

    Attributes
    ----------
    matrix : ndarray, shape (k, k)
        Symmetric PSD estimate of Var(beta_hat), finite-sample scale.
    kind : VcovKind
    correction : str
        Human-readable record of the small-sample factors applied.
    flagged_units : tuple
        Unit labels with h*_i at or above the threshold (phc6 only).
    """

    matrix: np.ndarray
    kind: VcovKind
    correction: str
    flagged_units: tuple = ()


def _c0_factor(n: int, N: int, k: int) -> float:
    return (n - 1) / (n - k) * N / (N - 1)


def _c3_factor(N: int) -> float:
    return (N - 1) / N


def _sandwich(fit: FEFit, meat: np.ndarray) -> np.ndarray:
    v = fit.sxx_inv @ meat @ fit.sxx_inv
    return (v + v.T) / 2


def vcov_conventional(fit: FEFit) -> VcovEstimate:
    """Homoskedastic OLS variance sigma2 (X'X)^-1.

    sigma2 = rss / (n - N - k); N counts every unit, singletons included,
    since each consumes one fixed-effect degree of freedom.

    Raises
    ------
    InsufficientDOFError
        If n - N - k <= 0.
    """
    dof = fit.n - fit.N - fit.k
    if dof <= 0:
        raise InsufficientDOFError(
            f"residual degrees of freedom n - N - k = "
            f"{fit.n} - {fit.N} - {fit.k} = {dof} (need > 0)"
        )
    sigma2 = fit.rss / dof
    return VcovEstimate(
        matrix=sigma2 * fit.sxx_inv,
        kind=VcovKind.CONVENTIONAL,
        correction=f"sigma2 = rss/(n - N - k) = {sigma2:.6g}",
    )


def vcov_phc0(fit: FEFit, panel: DemeanedPanel) -> VcovEstimate:
    """Cluster-robust sandwich with scores X_i'u_i and correction c0.

    Raises
    ------
    InsufficientDOFError
        If N = 1 (the N/(N-1) correction is undefined).
    """
    if fit.N < 2:
        raise InsufficientDOFError("phc0 correction undefined for a single unit")
    c0 = _c0_factor(fit.n, fit.N, fit.k)
    meat = np.zeros((fit.k, fit.k))
    for i in range(fit.N):
        g = panel.x_block(i).T @ fit.resid_block(i)
        meat += c0 * np.outer(g, g)
    return VcovEstimate(
        matrix=_sandwich(fit, meat),
        kind=VcovKind.PHC0,
        correction=f"c0 = (n-1)/(n-k) * N/(N-1) = {c0:.6g}",
    )


def vcov_phc3(fit: FEFit, panel: DemeanedPanel, lev: LeverageSet) -> VcovEstimate:
    """Sandwich on transformed residuals (I - H_i)^-1 u_i with factor (N-1)/N.

    Raises
    ------
    PerfectLeverageError
        If some (I - H_i) is numerically singular; the message names the
        unit.
    """
    c3 = _c3_factor(fit.N)
    meat = np.zeros((fit.k, fit.k))
    for i in range(fit.N):
        v = fe_core._transformed_residual(fit, panel, lev, i)
        g = panel.x_block(i).T @ v
        meat += c3 * np.outer(g, g)
    return VcovEstimate(
        matrix=_sandwich(fit, meat),
        kind=VcovKind.PHC3,
        correction=f"c3 = (N-1)/N = {c3:.6g}",
    )


def vcov_phc6(
    fit: FEFit,
    panel: DemeanedPanel,
    lev: LeverageSet,
    threshold: float = 2.0,
    per_unit: bool = True,
) -> VcovEstimate:
    """Leverage-gated hybrid of the phc0 and phc3 sandwiches.

    Units whose maximal relative leverage h*_i stays below ``threshold``
    enter with raw residuals and factor c0; units at or above it enter
    with transformed residuals and factor c3. Only flagged units ever
    need the (I - H_i) solve, so perfect leverage among unflagged units
    cannot fail this estimator.

    Parameters
    ----------
    threshold : float
        Flagging cutoff on h*_i, default 2.
    per_unit : bool
        Default True applies each unit's own factor inside the sum. False
        switches to a single global factor for the whole sum (c3 as soon
        as any unit is flagged, c0 otherwise) while keeping the per-unit
        residual transforms; kept for experimentation, not the default
        behavior anywhere else in the package.
    """
    if fit.N < 2:
        raise InsufficientDOFError("phc6 corrections undefined for a single unit")
    c0 = _c0_factor(fit.n, fit.N, fit.k)
    c3 = _c3_factor(fit.N)
    flags = lev.max_relative >= threshold
    flagged = tuple(u for u, f in zip(panel.units, flags) if f)
    if per_unit:
        factors = np.where(flags, c3, c0)
    else:
        factors = np.full(fit.N, c3 if flags.any() else c0)
    meat = np.zeros((fit.k, fit.k))
    for i in range(fit.N):
        if flags[i]:
            e = fe_core._transformed_residual(fit, panel, lev, i)
        else:
            e = fit.resid_block(i)
        g = panel.x_block(i).T @ e
        meat += factors[i] * np.outer(g, g)
    if per_unit:
        applied = (
            f"per-unit c0 = {c0:.6g} (h* < {threshold:g}) / c3 = {c3:.6g} "
            f"(h* >= {threshold:g})"
        )
    elif flags.any():
        applied = f"global c3 = {c3:.6g}"
    else:
        applied = f"global c0 = {c0:.6g}"
    return VcovEstimate(
        matrix=_sandwich(fit, meat),
        kind=VcovKind.PHC6,
        correction=f"{applied}; {len(flagged)} of {fit.N} units flagged",
        flagged_units=flagged,
    )


def vcov_phcjk(fit: FEFit, panel: DemeanedPanel, lev: LeverageSet) -> VcovEstimate:
    """Delete-one-unit jackknife covariance, definitional form.

    ((N-1)/N) sum_i (beta_(i) - beta_bar)(beta_(i) - beta_bar)', with the
    downdates beta_(i) from :func:`fe_core.leave_one_out`.

    Raises
    ------
    PerfectLeverageError
        Propagated from any unit's downdate.
    EstimationError
        If N < 2.
    """
    b = np.empty((fit.N, fit.k))
    for i in range(fit.N):
        b[i] = fe_core.leave_one_out(fit, panel, i, lev=lev)
    d = b - b.mean(axis=0)
    v = (_c3_factor(fit.N)) * (d.T @ d)
    return VcovEstimate(
        matrix=(v + v.T) / 2,
        kind=VcovKind.PHCJK,
        correction=f"(N-1)/N = {_c3_factor(fit.N):.6g} on leave-one-out deviations",
    )


def vcov_phcjk_closed(fit: FEFit, panel: DemeanedPanel, lev: LeverageSet) -> VcovEstimate:
    """Closed-form jackknife, an algebraic rearrangement of the definitional sum.

    With scores g_i = X_i'(I - H_i)^-1 u_i and their mean mu*, the
    deviations satisfy beta_(i) - beta_bar = -(X'X)^-1 (g_i - mu*), so

        V = ((N-1)/N) (X'X)^-1 [ sum_i g_i g_i' - N mu* mu*' ] (X'X)^-1.

    Kept as a cross-check for the definitional route; the two must agree
    to floating-point accuracy.
    """
    if fit.N < 2:
        raise InsufficientDOFError("jackknife undefined for a single unit")
    g = np.empty((fit.N, fit.k))
    for i in range(fit.N):
        v = fe_core._transformed_residual(fit, panel, lev, i)
        g[i] = panel.x_block(i).T @ v
    mu = g.mean(axis=0)
    meat = g.T @ g - fit.N * np.outer(mu, mu)
    return VcovEstimate(
        matrix=_c3_factor(fit.N) * _sandwich(fit, meat),
        kind=VcovKind.PHCJK,
        correction=f"(N-1)/N = {_c3_factor(fit.N):.6g}, closed form",
    )


def to_csv(est: VcovEstimate, names=None) -> str:
    """Render the k x k matrix as CSV with a header row of coefficient names."""
    k = est.matrix.shape[0]
    names = tuple(names) if names is not None else tuple(f"b{j + 1}" for j in range(k))
    if len(names) != k:
        raise ValueError(f"{len(names)} names for a {k} x {k} matrix")
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in est.matrix:
        buf.write(",".join(format(v, ".17g") for v in row) + "\n")
    return buf.getvalue()


def to_json(est: VcovEstimate) -> str:
    """Serialize kind, correction, matrix, and flagged units as JSON."""
    return json.dumps(
        {
            "kind": est.kind.value,
            "correction": est.correction,
            "matrix": [[float(v) for v in row] for row in est.matrix],
            "flagged_units": [_plain(u) for u in est.flagged_units],
        }
    )


def _plain(label):
    if isinstance(label, np.generic):
        return label.item()
    return label
