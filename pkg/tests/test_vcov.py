"""Covariance estimators: factors, sandwiches, hybrids, jackknife."""

import csv
import io
import json

import numpy as np
import pytest

from panelhc import (
    FEFit,
    InsufficientDOFError,
    PanelDataset,
    PerfectLeverageError,
    VcovKind,
    fit_within,
    leverage,
    to_csv,
    to_json,
    vcov_conventional,
    vcov_phc0,
    vcov_phc3,
    vcov_phc6,
    vcov_phcjk,
    vcov_phcjk_closed,
    within_transform,
)

from conftest import (
    make_all_flagged_panel,
    make_identical_units_panel,
    make_random_panel,
)


def _fitted(rng, N, T, k, unbalanced=False):
    p = make_random_panel(rng, N, T, k, unbalanced=unbalanced)
    dm = within_transform(p)
    fit = fit_within(dm)
    return p, dm, fit


def _phc0_oracle(dm, fit):
    """Independent re-summation with an explicit factor, no shared loop."""
    c0 = (fit.n - 1) / (fit.n - fit.k) * fit.N / (fit.N - 1)
    gs = np.stack([dm.x_block(i).T @ fit.resid_block(i)
                   for i in range(fit.N)])
    meat = c0 * np.einsum("ij,il->jl", gs, gs)
    return fit.sxx_inv @ meat @ fit.sxx_inv


class TestConventional:
    def test_formula_on_random_panel(self):
        rng = np.random.default_rng(401)
        p, dm, fit = _fitted(rng, N=10, T=5, k=3)
        est = vcov_conventional(fit)
        sigma2 = fit.rss / (fit.n - fit.N - fit.k)
        np.testing.assert_allclose(est.matrix, sigma2 * fit.sxx_inv,
                                   rtol=1e-14)
        assert est.kind is VcovKind.CONVENTIONAL

    def test_hand_arithmetic(self):
        fit = FEFit(
            beta=np.zeros(1), residuals=np.zeros(100),
            sxx=np.eye(1), sxx_inv=np.eye(1),
            n=100, N=4, k=1,
            t_lengths=np.full(4, 25), offsets=np.arange(0, 101, 25),
            rss=10.0,
        )
        est = vcov_conventional(fit)
        assert est.matrix[0, 0] == pytest.approx(10.0 / 95.0, rel=1e-15)

    def test_zero_dof_rejected(self):
        # two units, two periods, two regressors: n - N - k = 0
        p = PanelDataset.from_arrays(
            units=[1, 1, 2, 2],
            times=[1, 2, 1, 2],
            y=[0.0, 1.0, 0.0, 2.0],
            x=[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]],
            column_names=["x1", "x2"],
        )
        fit = fit_within(within_transform(p))
        with pytest.raises(InsufficientDOFError, match="4 - 2 - 2"):
            vcov_conventional(fit)


class TestPhc0:
    def test_matches_independent_resummation(self):
        rng = np.random.default_rng(402)
        for _ in range(5):
            p, dm, fit = _fitted(rng, N=int(rng.integers(3, 20)),
                                 T=4, k=2, unbalanced=True)
            est = vcov_phc0(fit, dm)
            np.testing.assert_allclose(est.matrix, _phc0_oracle(dm, fit),
                                       rtol=1e-12)

    def test_factor_value_n125(self):
        # n = 125, N = 25, k = 5: (124/120)(25/24) = 1.076389...
        rng = np.random.default_rng(403)
        p, dm, fit = _fitted(rng, N=25, T=5, k=5)
        est = vcov_phc0(fit, dm)
        c0 = (124.0 / 120.0) * (25.0 / 24.0)
        assert c0 == pytest.approx(1.0763888888888888, rel=1e-15)
        gs = np.stack([dm.x_block(i).T @ fit.resid_block(i) for i in range(25)])
        plain = fit.sxx_inv @ np.einsum("ij,il->jl", gs, gs) @ fit.sxx_inv
        np.testing.assert_allclose(est.matrix, c0 * plain, rtol=1e-12)
        assert "1.07639" in est.correction

    def test_single_unit_rejected(self):
        rng = np.random.default_rng(404)
        p, dm, fit = _fitted(rng, N=1, T=6, k=1)
        with pytest.raises(InsufficientDOFError):
            vcov_phc0(fit, dm)


class TestPhc3:
    def test_matches_per_unit_solve(self):
        rng = np.random.default_rng(405)
        p, dm, fit = _fitted(rng, N=12, T=4, k=3)
        lev = leverage(fit, dm)
        est = vcov_phc3(fit, dm, lev)
        meat = np.zeros((3, 3))
        for i in range(12):
            xi = dm.x_block(i)
            h = xi @ fit.sxx_inv @ xi.T
            v = np.linalg.solve(np.eye(4) - h, fit.resid_block(i))
            g = xi.T @ v
            meat += np.outer(g, g)
        expect = (11.0 / 12.0) * fit.sxx_inv @ meat @ fit.sxx_inv
        np.testing.assert_allclose(est.matrix, expect, rtol=1e-10)
        assert "0.96" not in est.correction  # N=12 here, not 25

    def test_factor_c3_for_25_units(self):
        rng = np.random.default_rng(406)
        p, dm, fit = _fitted(rng, N=25, T=5, k=2)
        est = vcov_phc3(fit, dm, leverage(fit, dm))
        assert "0.96" in est.correction

    def test_perfect_leverage_raises(self):
        p = PanelDataset.from_arrays(
            units=[1, 1, 2, 2],
            times=[1, 2, 1, 2],
            y=[0.0, 1.0, 2.0, 3.0],
            x=[[0.0], [2.0], [5.0], [5.0]],
            column_names=["x1"],
        )
        dm = within_transform(p)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        with pytest.raises(PerfectLeverageError, match="unit 1"):
            vcov_phc3(fit, dm, lev)


class TestPhc6:
    def test_no_flags_equals_phc0_exactly(self):
        rng = np.random.default_rng(407)
        p = make_identical_units_panel(rng, N=6, T=4, k=2)
        dm = within_transform(p)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        hybrid = vcov_phc6(fit, dm, lev)
        assert hybrid.flagged_units == ()
        np.testing.assert_array_equal(hybrid.matrix,
                                      vcov_phc0(fit, dm).matrix)

    def test_all_flagged_equals_phc3_exactly(self):
        rng = np.random.default_rng(408)
        p = make_all_flagged_panel(rng)
        dm = within_transform(p)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        hybrid = vcov_phc6(fit, dm, lev)
        assert len(hybrid.flagged_units) == 4
        np.testing.assert_array_equal(hybrid.matrix,
                                      vcov_phc3(fit, dm, lev).matrix)

    def test_threshold_boundary_counts_as_flagged(self):
        rng = np.random.default_rng(409)
        p = make_all_flagged_panel(rng)
        dm = within_transform(p)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        at = vcov_phc6(fit, dm, lev, threshold=float(lev.max_relative.min()))
        assert len(at.flagged_units) == 4
        above = vcov_phc6(fit, dm, lev, threshold=3.5)
        assert above.flagged_units == ()

    def test_flagged_labels_match_leverage(self):
        rng = np.random.default_rng(410)
        p, dm, fit = _fitted(rng, N=14, T=4, k=2)
        lev = leverage(fit, dm)
        cut = float(np.median(lev.max_relative))
        est = vcov_phc6(fit, dm, lev, threshold=cut)
        expect = tuple(u for u, h in zip(dm.units, lev.max_relative)
                       if h >= cut)
        assert est.flagged_units == expect
        assert f"{len(expect)} of 14 units flagged" in est.correction

    def test_unflagged_units_never_need_the_solve(self):
        # unit 1 has perfect leverage; with a high threshold nothing is
        # flagged, so phc6 must succeed where phc3 fails
        p = PanelDataset.from_arrays(
            units=[1, 1, 2, 2],
            times=[1, 2, 1, 2],
            y=[0.0, 1.0, 2.0, 3.0],
            x=[[0.0], [2.0], [5.0], [5.0]],
            column_names=["x1"],
        )
        dm = within_transform(p)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        est = vcov_phc6(fit, dm, lev, threshold=10.0)
        np.testing.assert_array_equal(est.matrix, vcov_phc0(fit, dm).matrix)
        with pytest.raises(PerfectLeverageError):
            vcov_phc6(fit, dm, lev, threshold=2.0)

    def test_global_variant(self):
        rng = np.random.default_rng(411)
        p, dm, fit = _fitted(rng, N=10, T=4, k=2)
        lev = leverage(fit, dm)
        cut = float(np.median(lev.max_relative))
        local = vcov_phc6(fit, dm, lev, threshold=cut)
        glob = vcov_phc6(fit, dm, lev, threshold=cut, per_unit=False)
        c0 = (fit.n - 1) / (fit.n - fit.k) * fit.N / (fit.N - 1)
        c3 = (fit.N - 1) / fit.N
        # same residual mix, one shared factor: rebuild from the pieces
        meat = np.zeros((2, 2))
        for i in range(10):
            xi = dm.x_block(i)
            if lev.max_relative[i] >= cut:
                h = xi @ fit.sxx_inv @ xi.T
                e = np.linalg.solve(np.eye(4) - h, fit.resid_block(i))
            else:
                e = fit.resid_block(i)
            g = xi.T @ e
            meat += c3 * np.outer(g, g)
        expect = fit.sxx_inv @ meat @ fit.sxx_inv
        np.testing.assert_allclose(glob.matrix, expect, rtol=1e-10)
        assert "global" in glob.correction
        assert not np.array_equal(local.matrix, glob.matrix)

        none = vcov_phc6(fit, dm, lev, threshold=1e9, per_unit=False)
        np.testing.assert_allclose(none.matrix,
                                   vcov_phc0(fit, dm).matrix, rtol=1e-14)


class TestJackknife:
    def test_definitional_equals_closed_form(self):
        rng = np.random.default_rng(412)
        for N in (5, 17, 40):
            p, dm, fit = _fitted(rng, N=N, T=4, k=3)
            lev = leverage(fit, dm)
            a = vcov_phcjk(fit, dm, lev).matrix
            b = vcov_phcjk_closed(fit, dm, lev).matrix
            scale = np.linalg.norm(a)
            assert np.linalg.norm(a - b) <= 1e-12 * max(scale, 1e-300)

    def test_two_unit_hand_formula(self):
        rng = np.random.default_rng(413)
        p, dm, fit = _fitted(rng, N=2, T=8, k=1)
        lev = leverage(fit, dm)
        est = vcov_phcjk(fit, dm, lev)
        bs = []
        for keep in (1, 0):
            xk = p.x_block(keep) - p.x_block(keep).mean(axis=0)
            yk = p.y_block(keep) - p.y_block(keep).mean()
            bs.append(float(xk[:, 0] @ yk / (xk[:, 0] @ xk[:, 0])))
        expect = (bs[0] - bs[1]) ** 2 / 4.0
        assert est.matrix[0, 0] == pytest.approx(expect, rel=1e-9)


class TestSharedProperties:
    def _all_on(self, dm, fit, lev):
        return [
            vcov_conventional(fit),
            vcov_phc0(fit, dm),
            vcov_phc3(fit, dm, lev),
            vcov_phc6(fit, dm, lev),
            vcov_phcjk(fit, dm, lev),
        ]

    def test_symmetric_and_psd(self):
        rng = np.random.default_rng(414)
        p, dm, fit = _fitted(rng, N=20, T=5, k=4, unbalanced=True)
        lev = leverage(fit, dm)
        for est in self._all_on(dm, fit, lev):
            np.testing.assert_array_equal(est.matrix, est.matrix.T)
            w = np.linalg.eigvalsh(est.matrix)
            assert w.min() >= -1e-12 * max(abs(w.max()), 1.0)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(415)
        p = make_random_panel(rng, N=9, T=4, k=2)
        a = 3.5
        scaled = PanelDataset.from_arrays(
            np.repeat(p.units, p.t_lengths), p.times, a * p.y, p.x,
            p.column_names)
        d1, d2 = within_transform(p), within_transform(scaled)
        f1, f2 = fit_within(d1), fit_within(d2)
        l1, l2 = leverage(f1, d1), leverage(f2, d2)
        for e1, e2 in zip(self._all_on(d1, f1, l1),
                          self._all_on(d2, f2, l2)):
            np.testing.assert_allclose(e2.matrix, a * a * e1.matrix,
                                       rtol=1e-9)

    def test_zero_residuals_give_zero_matrices(self, exact_fit_panel):
        dm = within_transform(exact_fit_panel)
        fit = fit_within(dm)
        lev = leverage(fit, dm)
        for est in self._all_on(dm, fit, lev):
            np.testing.assert_array_equal(est.matrix,
                                          np.zeros_like(est.matrix))


class TestSerialization:
    def test_csv_round_trip_full_precision(self):
        rng = np.random.default_rng(416)
        p, dm, fit = _fitted(rng, N=8, T=4, k=3)
        est = vcov_phc0(fit, dm)
        text = to_csv(est, names=("a", "b", "c"))
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["a", "b", "c"]
        back = np.array([[float(v) for v in r] for r in rows[1:]])
        np.testing.assert_array_equal(back, est.matrix)

    def test_csv_default_names_and_validation(self):
        rng = np.random.default_rng(417)
        p, dm, fit = _fitted(rng, N=5, T=3, k=2)
        est = vcov_conventional(fit)
        assert to_csv(est).splitlines()[0] == "b1,b2"
        with pytest.raises(ValueError):
            to_csv(est, names=("only_one",))

    def test_json_round_trip(self):
        rng = np.random.default_rng(418)
        p, dm, fit = _fitted(rng, N=10, T=4, k=2)
        lev = leverage(fit, dm)
        cut = float(np.median(lev.max_relative))
        est = vcov_phc6(fit, dm, lev, threshold=cut)
        doc = json.loads(to_json(est))
        assert doc["kind"] == "phc6"
        assert doc["correction"] == est.correction
        np.testing.assert_allclose(np.array(doc["matrix"]), est.matrix,
                                   rtol=0, atol=0)
        assert tuple(doc["flagged_units"]) == est.flagged_units
