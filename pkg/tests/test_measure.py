import json

import numpy as np
import pytest

from cvp import (
    DensityMeasure,
    ManifoldModel,
    WeightedMeasure,
    action,
    circle_uniform,
    density_action,
    kernel_potential,
    lagrangian_potential,
    load_measure,
    measure_from_dict,
    measure_to_dict,
    octahedron,
    quadrature_grid,
    sample_uniform,
    save_measure,
    uniform_density,
    volume_action,
)
from cvp.manifold import kernel_cross

from conftest import brute_action, brute_potentials

E1 = np.array([1.0, 0.0, 0.0])


class TestWeightedMeasure:
    def test_weight_validation(self):
        with pytest.raises(ValueError):
            WeightedMeasure(np.array([0.0, 1.0]), np.array([0.7, 0.2]))
        with pytest.raises(ValueError):
            WeightedMeasure(np.array([0.0, 1.0]), np.array([1.1, -0.1]))

    def test_pruned_drops_zero_weights(self):
        m = WeightedMeasure(np.array([0.0, 1.0, 2.0]), np.array([0.5, 0.0, 0.5]))
        assert m.support_size == 2
        assert len(m.pruned()) == 2


class TestAction:
    def test_octahedron_equals_nu0(self):
        model = ManifoldModel.sphere(1.2)
        assert action(model, octahedron()) == pytest.approx(2.9952, abs=1e-12)

    def test_single_point(self):
        model = ManifoldModel.sphere(1.7)
        m = WeightedMeasure(E1[None, :], np.array([1.0]))
        assert action(model, m) == pytest.approx(8 * 1.7**2, abs=1e-12)

    def test_circle_uniform_x4(self, circle13):
        val = 4 * 1.3**2 - 1.3**4
        assert action(circle13, circle_uniform(4)) == pytest.approx(val, abs=1e-12)
        assert val == pytest.approx(3.9039, abs=1e-10)

    @pytest.mark.parametrize(
        "model, n",
        [
            (ManifoldModel.circle(1.8), 7),
            (ManifoldModel.sphere(1.4), 6),
            (ManifoldModel.flag(3, 1.5), 5),
        ],
        ids=["circle", "sphere", "flag"],
    )
    def test_matches_scalar_oracle(self, model, n):
        pts = sample_uniform(model, n, seed=2)
        w = np.random.default_rng(3).random(n)
        w /= w.sum()
        m = WeightedMeasure(pts, w)
        assert action(model, m) == pytest.approx(brute_action(model, m), rel=1e-12)

    def test_consistency_with_potential(self, sphere12):
        pts = sample_uniform(sphere12, 9, seed=7)
        w = np.random.default_rng(1).random(9)
        w /= w.sum()
        m = WeightedMeasure(pts, w)
        s = action(sphere12, m)
        ells = lagrangian_potential(sphere12, m, pts)
        assert s == pytest.approx(float(w @ ells), rel=1e-12)

    def test_permutation_invariance(self, circle13):
        pts = sample_uniform(circle13, 8, seed=5)
        w = np.random.default_rng(2).random(8)
        w /= w.sum()
        m = WeightedMeasure(pts, w)
        perm = np.random.default_rng(4).permutation(8)
        m2 = WeightedMeasure(pts[perm], w[perm])
        assert action(circle13, m2) == pytest.approx(action(circle13, m), rel=1e-10)

    def test_rotation_invariance(self, sphere12):
        pts = sample_uniform(sphere12, 8, seed=5)
        w = np.full(8, 1 / 8)
        q, _ = np.linalg.qr(np.random.default_rng(6).standard_normal((3, 3)))
        m = WeightedMeasure(pts, w)
        m2 = WeightedMeasure(pts @ q.T, w)
        assert action(sphere12, m2) == pytest.approx(action(sphere12, m), rel=1e-10)


class TestPotentials:
    def test_ell_on_octahedron_support(self):
        model = ManifoldModel.sphere(1.2)
        m = octahedron()
        assert lagrangian_potential(model, m, E1) == pytest.approx(2.9952, abs=1e-12)
        ell, dee = brute_potentials(model, m, E1)
        assert lagrangian_potential(model, m, E1) == pytest.approx(ell, rel=1e-12)
        assert kernel_potential(model, m, E1) == pytest.approx(dee, rel=1e-12)

    def test_delta_measure(self):
        model = ManifoldModel.circle(2.0)
        m = WeightedMeasure(np.array([0.4]), np.array([1.0]))
        assert lagrangian_potential(model, m, 0.4) == pytest.approx(32.0, abs=1e-12)
        assert kernel_potential(model, m, 0.4) == pytest.approx(32.0, abs=1e-12)

    @pytest.mark.parametrize("tau", [1.1, 1.9, 3.0])
    @pytest.mark.parametrize("m", [3, 4, 7])
    def test_circle_uniform_dee_constant(self, tau, m):
        # d is nu0 = 4 tau^2 - tau^4 everywhere, for every m >= 3
        model = ManifoldModel.circle(tau)
        meas = circle_uniform(m)
        xs = np.linspace(0, 2 * np.pi, 23)
        vals = kernel_potential(model, meas, xs)
        assert np.max(np.abs(vals - (4 * tau**2 - tau**4))) < 1e-10

    def test_octahedron_dee_constant_any_tau(self):
        model = ManifoldModel.sphere(1.9)
        m = octahedron()
        xs = sample_uniform(model, 200, seed=0)
        vals = kernel_potential(model, m, xs)
        nu0 = 4 * 1.9**2 - 4 / 3 * 1.9**4
        assert np.max(np.abs(vals - nu0)) < 1e-10


class TestQuadratureGrid:
    def test_total_mass(self):
        g = quadrature_grid(ManifoldModel.sphere(1.0), 60)
        assert g.integrate(np.ones_like(g.weights)) == pytest.approx(1.0, abs=1e-13)

    def test_odd_moment_vanishes(self):
        g = quadrature_grid(ManifoldModel.sphere(1.0), 200)
        assert abs(g.integrate(g.nodes[:, 2])) < 1e-12

    def test_kernel_integral_is_nu0(self):
        model = ManifoldModel.sphere(1.5)
        g = quadrature_grid(model, 200)
        vals = kernel_cross(model, E1[None, :], g.nodes)[0]
        assert g.integrate(vals) == pytest.approx(2.25, abs=1e-8)

    def test_circle_grid(self):
        g = quadrature_grid(ManifoldModel.circle(1.0), 128)
        assert len(g.nodes) == 128
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_flag_unsupported(self, flag32):
        with pytest.raises(ValueError):
            quadrature_grid(flag32, 10)

    def test_breakpoints_split_panels(self):
        g = quadrature_grid(ManifoldModel.sphere(1.0), 60, breakpoints=[0.0])
        assert g.panels.tolist() == [-1.0, 0.0, 1.0]
        step = g.integrate(np.where(np.repeat(g.cos_nodes, g.n_phi) > 0, 1.0, 0.0))
        assert step == pytest.approx(0.5, abs=1e-14)


class TestDensityMeasure:
    def test_validation(self):
        g = quadrature_grid(ManifoldModel.sphere(1.0), 40)
        with pytest.raises(ValueError):
            DensityMeasure(g, -np.ones_like(g.weights))
        with pytest.raises(ValueError):
            DensityMeasure(g, 2.0 * np.ones_like(g.weights))

    @pytest.mark.parametrize("tau", [1.0, 1.5, 2.0, 3.0])
    def test_uniform_matches_closed_form(self, tau):
        model = ManifoldModel.sphere(tau)
        dm = uniform_density(model)
        assert density_action(model, dm) == pytest.approx(
            4 - 4 / (3 * tau**2), abs=1e-6
        )

    def test_uniform_tau2_value(self):
        model = ManifoldModel.sphere(2.0)
        assert density_action(model, uniform_density(model)) == pytest.approx(
            11.0 / 3.0, abs=1e-6
        )

    def test_circle_uniform_matches_closed_form(self):
        for tau in (1.0, 1.3, 2.0):
            model = ManifoldModel.circle(tau)
            dm = uniform_density(model, 1024)
            assert density_action(model, dm) == pytest.approx(
                volume_action(model), abs=1e-8
            )

    def test_truncation_converged(self):
        model = ManifoldModel.sphere(1.7)
        dm = uniform_density(model)
        a1 = density_action(model, dm, lmax=240)
        a2 = density_action(model, dm, lmax=480)
        assert a1 == pytest.approx(a2, abs=1e-10)


class TestSerialization:
    @pytest.mark.parametrize(
        "model, n",
        [
            (ManifoldModel.circle(1.4), 5),
            (ManifoldModel.sphere(2.2), 6),
            (ManifoldModel.flag(3, 1.6), 4),
        ],
        ids=["circle", "sphere", "flag"],
    )
    def test_round_trip_action_drift(self, model, n, tmp_path):
        pts = sample_uniform(model, n, seed=9)
        w = np.random.default_rng(5).random(n)
        w /= w.sum()
        m = WeightedMeasure(pts, w)
        path = tmp_path / "m.json"
        save_measure(path, model, m)
        model2, m2 = load_measure(path)
        assert model2 == model
        assert abs(action(model2, m2) - action(model, m)) < 1e-12

    def test_dict_schema(self, circle13):
        m = circle_uniform(3)
        d = measure_to_dict(circle13, m)
        assert d["manifold"] == "circle"
        assert d["points"][1] == [2 * np.pi / 3]
        back_model, back = measure_from_dict(json.loads(json.dumps(d)))
        assert np.array_equal(back.points, m.points)

    def test_flag_dict_schema(self, flag32):
        pts = sample_uniform(flag32, 2, seed=3)
        m = WeightedMeasure(pts, np.array([0.5, 0.5]))
        d = measure_to_dict(flag32, m)
        assert d["f"] == 3
        assert len(d["points"][0]["u"]) == 3
        _, back = measure_from_dict(d)
        assert np.allclose(back.points, pts)


class TestVolumeAction:
    def test_sphere_formula(self):
        assert volume_action(ManifoldModel.sphere(1.0)) == pytest.approx(8 / 3)

    def test_flag_unsupported(self, flag32):
        with pytest.raises(ValueError):
            volume_action(flag32)
