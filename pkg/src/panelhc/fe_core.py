"""Within-group least squares, leverage diagnostics, leave-one-unit-out updates.

The fit solves the pooled demeaned normal equations through a pivoted QR
factorization so rank deficiency is detected (and the dependent columns
named) instead of silently producing garbage. The cross-product inverse
(X'X)^-1 is materialized because every sandwich formula downstream needs
it explicitly.

Leverage works per unit: H_i = X_i (X'X)^-1 X_i' is the unit's hat block,
h_itt its diagonal, and h*_i = max_t h_itt / hbar_tt the unit's maximal
leverage relative to the cross-section average at each time position.
Deleting a whole unit never requires a refit: the downdated coefficients
follow from a Woodbury identity,

    beta_(i) = beta - (X'X)^-1 X_i' (I - H_i)^-1 u_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateLeverageError,
    EstimationError,
    PerfectLeverageError,
    SingularDesignError,
)
from .paneldata import DemeanedPanel

__all__ = ["FEFit", "LeverageSet", "fit_within", "leverage", "leave_one_out", "loo_mean"]

# relative pivot tolerance for rank detection in the QR of the demeaned design
_PIVOT_RTOL = 1e-12
# (I - H_i) with smallest eigenvalue below this is treated as singular
_MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class FEFit:
    """Within-group OLS fit.

    Attributes
    ----------
    beta : ndarray, shape (k,)
        Coefficients (X'X)^-1 X'y on the demeaned data.
    residuals : ndarray, shape (n,)
        Stacked per-unit residuals, grouped like the source panel.
    sxx : ndarray, shape (k, k)
        Un-normalized cross-product X'X.
    sxx_inv : ndarray, shape (k, k)
    n, N, k : int
        Observations, units (singletons included), regressors.
    t_lengths : ndarray, shape (N,)
    offsets : ndarray, shape (N+1,)
    rss : float
    """

    beta: np.ndarray
    residuals: np.ndarray
    sxx: np.ndarray
    sxx_inv: np.ndarray
    n: int
    N: int
    k: int
    t_lengths: np.ndarray
    offsets: np.ndarray
    rss: float

    def resid_block(self, i: int) -> np.ndarray:
        return self.residuals[self.offsets[i]:self.offsets[i + 1]]


@dataclass(frozen=True)
class LeverageSet:
    """Per-unit hat blocks and the leverage summaries built from them.

    Attributes
    ----------
    hat : tuple of ndarray
        H_i per unit, each (T_i, T_i) and symmetric.
    diagonals : ndarray, shape (n,)
        Stacked h_itt, grouped like the panel.
    time_labels : ndarray
        Sorted distinct time labels.
    time_averages : ndarray
        hbar_tt per label: mean h_itt over the non-singleton units observed
        at that time.
    max_relative : ndarray, shape (N,)
        h*_i per unit; 0.0 for singletons (their hat blocks are zero).
    """

    hat: tuple
    diagonals: np.ndarray
    time_labels: np.ndarray
    time_averages: np.ndarray
    max_relative: np.ndarray
    # memo of (I - H_i)^-1 u_i keyed by unit index; idempotent fill
    _vhat_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def time_average_rows(self, times: np.ndarray) -> np.ndarray:
        """hbar_tt aligned with a stacked vector of time labels."""
        return self.time_averages[np.searchsorted(self.time_labels, times)]


def fit_within(panel: DemeanedPanel) -> FEFit:
    """Pooled OLS on the demeaned data.

    Parameters
    ----------
    panel : DemeanedPanel

    Returns
    -------
    FEFit

    Raises
    ------
    SingularDesignError
        If the demeaned design has rank below k. The message names the
        columns the pivoted QR placed beyond the numerical rank; any
        column constant within every unit lands here.
    """
    X, yv, k = panel.x, panel.y, panel.k
    if k == 0:
        raise SingularDesignError("design has no regressor columns", columns=())
    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    tol = _PIVOT_RTOL * (d[0] if d.size else 0.0)
    rank = int(np.count_nonzero(d > tol))
    if rank < k:
        bad = tuple(panel.column_names[j] for j in np.sort(piv[rank:]))
        raise SingularDesignError(
            f"demeaned design is rank deficient (rank {rank} < k={k}); "
            f"dependent or all-constant columns: {', '.join(map(str, bad))}",
            columns=bad,
        )
    z = scipy.linalg.solve_triangular(r, q.T @ yv, lower=False)
    beta = np.empty(k)
    beta[piv] = z
    resid = yv - X @ beta
    sxx = X.T @ X
    sxx = (sxx + sxx.T) / 2
    sxx_inv = np.linalg.inv(sxx)
    sxx_inv = (sxx_inv + sxx_inv.T) / 2
    return FEFit(
        beta=beta,
        residuals=resid,
        sxx=sxx,
        sxx_inv=sxx_inv,
        n=panel.n,
        N=panel.N,
        k=k,
        t_lengths=panel.t_lengths,
        offsets=panel.offsets,
        rss=float(resid @ resid),
    )


def leverage(fit: FEFit, panel: DemeanedPanel) -> LeverageSet:
    """Hat blocks H_i = X_i (X'X)^-1 X_i' and leverage summaries.

    Parameters
    ----------
    fit : FEFit
        Must come from ``fit_within`` on the same panel.
    panel : DemeanedPanel

    Returns
    -------
    LeverageSet

    Raises
    ------
    DegenerateLeverageError
        If the average leverage hbar_tt vanishes at some time label, i.e.
        every unit observed there (singletons aside) has zero leverage.

    Notes
    -----
    Sum of all h_itt equals k (the trace of the pooled projection).
    Singleton units have zero demeaned rows, hence zero hat blocks; they
    are left out of the hbar_tt denominators and get h*_i = 0.
    """
    hats = []
    diag = np.empty(panel.n)
    for i in range(panel.N):
        xi = panel.x_block(i)
        h = xi @ fit.sxx_inv @ xi.T
        h = (h + h.T) / 2
        hats.append(h)
        diag[panel.offsets[i]:panel.offsets[i + 1]] = np.diagonal(h)
    labels, inv = np.unique(panel.times, return_inverse=True)
    in_avg = np.repeat(panel.t_lengths > 1, panel.t_lengths)
    counts = np.bincount(inv[in_avg], minlength=labels.size)
    sums = np.bincount(inv[in_avg], weights=diag[in_avg], minlength=labels.size)
    degenerate = (counts == 0) | (sums == 0.0)
    if degenerate.any():
        t = labels[int(np.flatnonzero(degenerate)[0])]
        if isinstance(t, np.generic):
            t = t.item()
        raise DegenerateLeverageError(
            f"average leverage at time {t!r} is zero", time=t
        )
    hbar = sums / counts
    ratio = diag / hbar[inv]
    hstar = np.maximum.reduceat(ratio, panel.offsets[:-1])
    return LeverageSet(
        hat=tuple(hats),
        diagonals=diag,
        time_labels=labels,
        time_averages=hbar,
        max_relative=hstar,
    )


def _solve_im(hat_block: np.ndarray, u: np.ndarray, unit) -> np.ndarray:
    """(I - H_i)^-1 u_i via a symmetric eigendecomposition.

    The eigenvalues double as the singularity check: the smallest one is
    1 - max eigenvalue of H_i, and anything below _MIN_EIGENVALUE means
    unit i carries an entire direction of the fit.
    """
    m = -hat_block.copy()
    np.fill_diagonal(m, 1.0 + np.diagonal(m))
    w, v = np.linalg.eigh(m)
    if w[0] < _MIN_EIGENVALUE:
        raise PerfectLeverageError(
            f"unit {unit!r} has perfect leverage: I - H_i is numerically "
            f"singular (smallest eigenvalue {w[0]:.3e})",
            unit=unit,
        )
    return v @ ((v.T @ u) / w)


def _transformed_residual(fit: FEFit, panel: DemeanedPanel, lev: LeverageSet, i: int) -> np.ndarray:
    """Memoized v_i = (I - H_i)^-1 u_i for unit i."""
    v = lev._vhat_cache.get(i)
    if v is None:
        v = _solve_im(lev.hat[i], fit.resid_block(i), panel.units[i])
        lev._vhat_cache[i] = v
    return v


def leave_one_out(
    fit: FEFit,
    panel: DemeanedPanel,
    i: int,
    lev: Optional[LeverageSet] = None,
) -> np.ndarray:
    """Coefficients after deleting unit i's entire history, without refitting.

    Parameters
    ----------
    fit : FEFit
    panel : DemeanedPanel
    i : int
        Unit index (position in ``panel.units``).
    lev : LeverageSet, optional
        Reuses precomputed hat blocks when given; otherwise H_i is built
        on the spot.

    Returns
    -------
    ndarray, shape (k,)
        beta_(i), identical to a brute-force refit on the other units.

    Raises
    ------
    PerfectLeverageError
        If (I - H_i) is numerically singular, i.e. the remaining units
        cannot support rank k.
    EstimationError
        If the panel has a single unit.
    """
    if fit.N < 2:
        raise EstimationError("leave-one-out requires at least two units")
    if lev is not None:
        v = _transformed_residual(fit, panel, lev, i)
    else:
        xi = panel.x_block(i)
        h = xi @ fit.sxx_inv @ xi.T
        v = _solve_im((h + h.T) / 2, fit.resid_block(i), panel.units[i])
    return fit.beta - fit.sxx_inv @ (panel.x_block(i).T @ v)


def loo_mean(
    fit: FEFit,
    panel: DemeanedPanel,
    lev: Optional[LeverageSet] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean of the N leave-one-out coefficient vectors.

    Returns
    -------
    (beta_bar, mu_star)
        ``mu_star`` is the average score N^-1 sum_i X_i'(I - H_i)^-1 u_i;
        the mean satisfies beta_bar = beta - (X'X)^-1 mu_star exactly.

    Raises
    ------
    EstimationError
        If N < 2 (deleting the only unit leaves nothing).
    PerfectLeverageError
        Propagated from any unit's downdate.
    """
    if fit.N < 2:
        raise EstimationError("leave-one-out requires at least two units")
    g = np.zeros(fit.k)
    for i in range(fit.N):
        if lev is not None:
            v = _transformed_residual(fit, panel, lev, i)
        else:
            xi = panel.x_block(i)
            h = xi @ fit.sxx_inv @ xi.T
            v = _solve_im((h + h.T) / 2, fit.resid_block(i), panel.units[i])
        g += panel.x_block(i).T @ v
    mu_star = g / fit.N
    return fit.beta - fit.sxx_inv @ mu_star, mu_star
