"""Shared fixtures and independent oracles.

The refit oracle deliberately avoids the library's QR path: it demeans
with plain means and solves with lstsq, so agreement is evidence, not
tautology.
"""

from __future__ import annotations

import numpy as np
import pytest

from panelhc import PanelDataset, within_transform, fit_within


def make_random_panel(rng, N, T, k, fe_scale=1.0, unbalanced=False):
    """Random well-conditioned panel with unit fixed effects in y."""
    lengths = np.full(N, T)
    if unbalanced:
        lengths = rng.integers(2, T + 1, size=N)
    units = np.repeat(np.arange(1, N + 1), lengths)
    times = np.concatenate([np.arange(1, t + 1) for t in lengths])
    n = int(lengths.sum())
    x = rng.standard_normal((n, k))
    beta = rng.standard_normal(k)
    fe = np.repeat(fe_scale * rng.standard_normal(N), lengths)
    y = x @ beta + fe + rng.standard_normal(n)
    return PanelDataset.from_arrays(units, times, y, x,
                                    [f"x{j+1}" for j in range(k)])


def refit_beta(panel, exclude=None):
    """Brute-force within fit, optionally dropping one unit entirely.

    Independent implementation: per-unit mean subtraction and an lstsq
    solve on the stacked result.
    """
    ys, xs = [], []
    for i, u in enumerate(panel.units):
        if exclude is not None and i == exclude:
            continue
        yb = panel.y_block(i)
        xb = panel.x_block(i)
        ys.append(yb - yb.mean())
        xs.append(xb - xb.mean(axis=0))
    yd = np.concatenate(ys)
    xd = np.vstack(xs)
    beta, *_ = np.linalg.lstsq(xd, yd, rcond=None)
    return beta


@pytest.fixture
def toy_panel():
    """Two units, one regressor, perfect fit: the hand-computed example."""
    return PanelDataset.from_arrays(
        units=[1, 1, 2, 2],
        times=[1, 2, 1, 2],
        y=[0.0, 1.0, 0.0, 2.0],
        x=[[0.0], [1.0], [0.0], [2.0]],
        column_names=["x"],
    )


@pytest.fixture
def toy_fit(toy_panel):
    dm = within_transform(toy_panel)
    return toy_panel, dm, fit_within(dm)


def make_identical_units_panel(rng, N=5, T=4, k=2):
    """All units share the same x block: every h*_i is 1, nothing flags."""
    xb = rng.standard_normal((T, k))
    x = np.tile(xb, (N, 1))
    units = np.repeat(np.arange(1, N + 1), T)
    times = np.tile(np.arange(1, T + 1), N)
    y = x @ np.ones(k) + np.repeat(rng.standard_normal(N), T) \
        + rng.standard_normal(N * T)
    return PanelDataset.from_arrays(units, times, y, x,
                                    [f"x{j+1}" for j in range(k)])


def make_all_flagged_panel(rng, reps=1):
    """Rotations of (3, -1, -1, -1): every unit has h*_i = 3, all flag.

    The pattern is zero-mean with exactly representable entries, and by
    symmetry each time position averages the same leverage, so the ratio
    peaks at 3 for every unit.
    """
    base = np.array([3.0, -1.0, -1.0, -1.0])
    blocks = [np.roll(base, s) for s in range(4) for _ in range(reps)]
    x = np.concatenate(blocks)[:, None]
    N = len(blocks)
    units = np.repeat(np.arange(1, N + 1), 4)
    times = np.tile(np.arange(1, 5), N)
    y = x[:, 0] + np.repeat(rng.standard_normal(N), 4) \
        + rng.standard_normal(4 * N)
    return PanelDataset.from_arrays(units, times, y, x, ["x"])


@pytest.fixture
def exact_fit_panel():
    """Perfect fit with power-of-two values: bit-exact zero residuals."""
    return PanelDataset.from_arrays(
        units=[1, 1, 2, 2],
        times=[1, 2, 1, 2],
        y=[0.0, 2.0, 1.0, 3.0],
        x=[[0.0], [2.0], [4.0], [6.0]],
        column_names=["x"],
    )
