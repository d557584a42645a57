import io

import numpy as np
import pytest

from cvp import (
    AnnealSchedule,
    ManifoldModel,
    WeightedMeasure,
    action,
    anneal,
    circle_uniform,
    merge_clusters,
    octahedron,
    optimal_weights,
    optimal_weights_info,
    sample_uniform,
    tau_scan,
    theta_max,
    write_scan_csv,
)
from cvp.exact import circle_chain_minimizer
from cvp.optimize import ScanRow


def light(model, seed=0, **kw):
    return AnnealSchedule.light(model, seed=seed, **kw)


class TestSchedule:
    def test_default_values(self):
        model = ManifoldModel.sphere(1.5)
        s = AnnealSchedule.default(model)
        assert s.t_start == pytest.approx(model.kernel_scale)
        assert s.t_end == pytest.approx(1e-6 * model.kernel_scale)
        assert s.cooling == 0.97
        assert s.steps_per_temp == 200
        assert s.restarts == 8

    def test_validation(self):
        with pytest.raises(ValueError):
            AnnealSchedule(t_start=1.0, t_end=2.0)
        with pytest.raises(ValueError):
            AnnealSchedule(t_start=1.0, t_end=0.1, cooling=1.5)
        with pytest.raises(ValueError):
            AnnealSchedule(t_start=1.0, t_end=0.1, restarts=0)


class TestOptimalWeights:
    def test_chain_weights_match_closed_form(self):
        tau = 3.0
        model = ManifoldModel.circle(tau)
        chain = circle_chain_minimizer(tau)
        w = optimal_weights(model, chain.measure.points)
        assert np.max(np.abs(w - chain.measure.weights)) < 1e-10

    def test_spacelike_points_uniform(self):
        model = ManifoldModel.sphere(2.5)  # theta_max < pi/2
        pts = np.vstack([np.eye(3), -np.eye(3)])
        w = optimal_weights(model, pts)
        assert np.max(np.abs(w - 1 / 6)) < 1e-12

    def test_coincident_points_degenerate(self):
        model = ManifoldModel.sphere(1.5)
        pts = np.array([[1.0, 0, 0], [1.0, 0, 0]])
        info = optimal_weights_info(model, pts)
        assert info.weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(info.weights >= 0)
        assert info.action == pytest.approx(model.kernel_scale, rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_kkt_residual(self, seed):
        model = ManifoldModel.sphere(1.8)
        pts = sample_uniform(model, 12, seed=seed)
        info = optimal_weights_info(model, pts)
        assert info.kkt_residual < 1e-9

    def test_simplex_feasibility_exact(self):
        model = ManifoldModel.circle(2.4)
        pts = sample_uniform(model, 15, seed=4)
        w = optimal_weights(model, pts)
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)


class TestMergeClusters:
    def test_doublets_merge_to_six(self):
        model = ManifoldModel.sphere(1.2)
        base = octahedron().points
        jit = np.array(
            [[1e-4, 0, 0], [0, 1e-4, 0], [0, 0, 1e-4]] * 2
        )
        doubled = np.vstack([base, base + np.roll(jit, 1, axis=1)])
        doubled /= np.linalg.norm(doubled, axis=1, keepdims=True)
        m = WeightedMeasure(doubled, np.full(12, 1 / 12))
        res = merge_clusters(model, m, 1e-3)
        assert len(res.measure) == 6
        assert np.max(np.abs(res.measure.weights - 1 / 6)) < 1e-12
        assert abs(res.action_delta) <= res.action_delta_bound + 1e-12

    def test_zero_radius_identity(self, circle13):
        m = circle_uniform(5)
        res = merge_clusters(circle13, m, 0.0)
        assert res.measure is m
        assert res.action_delta == 0.0

    def test_strict_threshold(self, circle13):
        radius = 0.05
        m = WeightedMeasure(np.array([0.0, 2 * radius]), np.array([0.5, 0.5]))
        res = merge_clusters(circle13, m, radius)
        assert len(res.measure) == 2

    def test_wraparound_distance(self, circle13):
        m = WeightedMeasure(np.array([0.01, 2 * np.pi - 0.01]), np.array([0.5, 0.5]))
        res = merge_clusters(circle13, m, 0.05)
        assert len(res.measure) == 1

    def test_flag_merge(self, flag32):
        pts = sample_uniform(flag32, 1, seed=0)
        x = pts[0]
        # same point with a rephased pair representation still merges
        y = np.stack([x[0] * np.exp(0.3j), x[1] * np.exp(-1.1j)])
        m = WeightedMeasure(np.stack([x, y]), np.array([0.5, 0.5]))
        res = merge_clusters(flag32, m, 1e-6)
        assert len(res.measure) == 1
        assert abs(res.action_delta) <= res.action_delta_bound + 1e-12

    def test_negative_radius(self, circle13):
        with pytest.raises(ValueError):
            merge_clusters(circle13, circle_uniform(3), -1.0)


class TestAnneal:
    def test_never_above_initial(self, circle13):
        # X_6 at tau=1.3 is already a minimizer; the annealer must match it
        init = circle_uniform(6)
        s0 = action(circle13, init)
        out = anneal(circle13, 6, light(circle13, steps_per_temp=20), init=init)
        assert action(circle13, out) <= s0 + 1e-12

    def test_deterministic(self, circle13):
        a = anneal(circle13, 5, light(circle13, steps_per_temp=10))
        b = anneal(circle13, 5, light(circle13, steps_per_temp=10))
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.weights, b.weights)

    def test_single_point(self, sphere12):
        m = anneal(sphere12, 1, light(sphere12, steps_per_temp=5))
        assert len(m) == 1
        assert action(sphere12, m) == pytest.approx(sphere12.kernel_scale)

    def test_circle_timelike_value(self, circle13):
        out = anneal(circle13, 6, light(circle13))
        nu0 = 4 * 1.3**2 - 1.3**4
        assert action(circle13, out) <= nu0 * 1.01

    def test_monotone_in_m_with_cascade(self):
        # best action is non-increasing in the number of available points
        for tau in (1.3, 3.0):
            model = ManifoldModel.circle(tau)
            prev = None
            actions = []
            for m in range(4, 15):
                sched = light(model, steps_per_temp=30)
                best = anneal(model, m, sched, init=prev)
                actions.append(action(model, best))
                prev = best
            diffs = np.diff(actions)
            assert np.all(diffs <= 1e-9), (tau, actions)

    def test_m_validation(self, circle13):
        with pytest.raises(ValueError):
            anneal(circle13, 0)


@pytest.fixture(scope="module")
def scan_rows():
    return tau_scan(
        "circle", [1.38, 1.40, 1.42, 1.44], m=8, seed=0, steps_per_temp=60
    )


class TestTauScan:

    def test_row_shape(self, scan_rows):
        rows = scan_rows
        assert [r.tau for r in rows] == [1.38, 1.40, 1.42, 1.44]
        assert all(r.m == 8 for r in rows)
        assert all(r.action > 0 for r in rows)

    def test_transition_bracketed(self, scan_rows):
        rows = scan_rows
        # support 4 -> 5 and the classification flip both happen at sqrt(2)
        sizes = [r.support_size_after_merge for r in rows]
        assert sizes[0] == 4 and sizes[1] == 4
        assert sizes[2] == 5 and sizes[3] == 5
        kinds = [r.classification for r in rows]
        assert kinds[1] == "generically_timelike"
        assert kinds[2] == "singular_candidate"

    def test_warm_start_not_worse_than_cold(self, scan_rows):
        rows = scan_rows
        for row in rows:
            model = ManifoldModel.circle(row.tau)
            cold = anneal(
                model, 8, AnnealSchedule.light(model, steps_per_temp=60, seed=0)
            )
            assert row.action <= action(model, cold) + 1e-9

    def test_el_residual_small(self, scan_rows):
        rows = scan_rows
        for row in rows:
            assert row.el_residual < 1e-2 * row.action

    def test_csv_format(self, scan_rows):
        rows = scan_rows
        buf = io.StringIO()
        write_scan_csv(rows, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "tau,m,action,support_size,classification,el_residual"
        assert len(lines) == 5
        first = lines[1].split(",")
        assert float(first[0]) == 1.38
        assert int(first[1]) == 8

    def test_empty_grid(self):
        assert tau_scan("circle", [], m=4) == []

    def test_unsorted_grid_rejected(self):
        with pytest.raises(ValueError):
            tau_scan("circle", [1.4, 1.2], m=4)

    def test_scan_row_validation(self):
        with pytest.raises(ValueError):
            ScanRow(1.0, 4, -1.0, 3, "unclassified", 0.0)
