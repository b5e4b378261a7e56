import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpacs.errors import ConfigError, DimensionError, SolverError
from fpacs.model import GeometryConfig, NoiseSpec, OpticsConfig, build_map, simulate_capture, stack
from fpacs.patterns import make_sequence
from fpacs.recon import (SolverConfig, TvKind, backprojection, data_gradient, divergence_op,
                         gradient_op, least_squares_baseline, lipschitz_estimate, solve, tv_prox,
                         tv_value)


def assert_monotone(result):
    tr = result.objective_trace
    assert tr.size == result.iterations_run
    assert np.all(np.diff(tr) <= 0), "objective increased"


def system_for(geometry, kind, T, scene, seed=0, optics=None, noise=None, frame_count=1):
    m = build_map(geometry, optics)
    seq = make_sequence(kind, geometry, T, seed=seed)
    return stack(m, seq, simulate_capture(m, seq, scene, noise), geometry, frame_count)


class TestTv:
    def test_constant_is_zero(self):
        assert tv_value(np.full((4, 5), 3.0)) == 0.0

    def test_corner_impulse(self):
        assert tv_value(np.array([[1.0, 0.0], [0.0, 0.0]])) == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_homogeneity(self, rng):
        x = rng.standard_normal((6, 7))
        assert tv_value(2.5 * x) == pytest.approx(2.5 * tv_value(x), rel=1e-12)
        c = rng.standard_normal((3, 4, 4))
        assert tv_value(-2.5 * c, "3d") == pytest.approx(2.5 * tv_value(c, "3d"), rel=1e-12)

    def test_3d_counts_time(self):
        cube = np.zeros((2, 2, 2))
        cube[1] = 1.0
        # only the temporal differences at frame 0 are nonzero
        assert tv_value(cube, "3d") == pytest.approx(4.0)
        assert tv_value(cube, "2d") == 0.0

    def test_3d_needs_frames(self):
        with pytest.raises(DimensionError):
            tv_value(np.zeros((4, 4)), TvKind.TV3D)
        with pytest.raises(DimensionError):
            tv_value(np.zeros((1, 4, 4)), TvKind.TV3D)

    def test_hand_gradient(self):
        g = gradient_op(np.array([[0.0, 1.0, 0.0]]))
        np.testing.assert_array_equal(g[1], [[1.0, -1.0, 0.0]])
        np.testing.assert_array_equal(g[0], 0.0)

    def test_gradient_of_constant(self):
        assert not gradient_op(np.full((3, 3, 3), 2.0), "3d").any()

    @pytest.mark.parametrize("shape,kind", [((5, 7), "2d"), ((3, 5, 7), "2d"), ((4, 5, 6), "3d")])
    def test_negative_adjoint(self, rng, shape, kind):
        x = rng.standard_normal(shape)
        g = rng.standard_normal(gradient_op(x, kind).shape)
        lhs = np.vdot(gradient_op(x, kind), g)
        rhs = -np.vdot(x, divergence_op(g, kind))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_divergence_component_check(self):
        with pytest.raises(DimensionError):
            divergence_op(np.zeros((3, 4, 4)), "2d")


class TestProx:
    def test_zero_lambda_is_identity(self, rng):
        v = rng.standard_normal((5, 5))
        np.testing.assert_array_equal(tv_prox(v, 0.0), v)

    def test_huge_lambda_gives_mean(self, rng):
        v = rng.random((6, 6))
        lam = 1e3 * float(np.ptp(v)) * v.size
        u = tv_prox(v, lam, inner_iters=200)
        np.testing.assert_allclose(u, v.mean(), rtol=0.01)

    def test_two_level_closed_form(self):
        # each flat run of 2 samples moves by lam / 2 (jump shrinks by lam)
        v = np.array([[0.0, 0.0, 1.0, 1.0]])
        lam = 0.1
        u = tv_prox(v, lam, inner_iters=500)
        np.testing.assert_allclose(u, [[lam / 2, lam / 2, 1 - lam / 2, 1 - lam / 2]], atol=1e-6)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
    def test_nonexpansive(self, seed, lam):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal((2, 5, 6))
        pa, pb = tv_prox(a, lam, inner_iters=60), tv_prox(b, lam, inner_iters=60)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) * (1 + 1e-3)

    def test_nonneg_clamp(self, rng):
        assert tv_prox(rng.standard_normal((4, 4)), 0.05, nonneg=True).min() >= 0

    def test_bad_args(self):
        with pytest.raises(ConfigError):
            tv_prox(np.zeros((2, 2)), 0.1, inner_iters=0)
        with pytest.raises(ConfigError):
            tv_prox(np.zeros((2, 2)), -1.0)


class TestLipschitz:
    def test_averaging_bound(self):
        g = GeometryConfig(1, 1, 2, 2)
        s = stack(build_map(g), np.ones((1, 2, 2), np.uint8), np.ones((1, 1, 1)), g)
        raw = lipschitz_estimate(s, safety=1.0)
        assert raw <= 1 + 1e-6
        assert raw == pytest.approx(0.25, rel=1e-6)

    def test_deterministic_and_quadratic(self, rng):
        g = GeometryConfig(4, 4, 3, 3)
        m = build_map(g, OpticsConfig(0.5))
        seq = make_sequence("random-binary", g, 5, seed=2)
        y = np.zeros((5, 4, 4))
        s1 = stack(m, seq, y)
        s2 = stack(m.scaled(2.0), seq, y)
        assert lipschitz_estimate(s1, seed=3) == lipschitz_estimate(s1, seed=3)
        dense = s1.dense()
        top = np.linalg.eigvalsh(dense.T @ dense)[-1]
        assert lipschitz_estimate(s1, safety=1.0, max_iters=500, tol=1e-12) == pytest.approx(top, rel=1e-6)
        assert lipschitz_estimate(s2, max_iters=500, tol=1e-12) == pytest.approx(
            4 * lipschitz_estimate(s1, max_iters=500, tol=1e-12), rel=1e-6)

    def test_zero_operator(self):
        g = GeometryConfig(2, 2, 2, 2)
        s = stack(build_map(g), np.zeros((2, 4, 4), np.uint8), np.zeros((2, 2, 2)))
        with pytest.raises(SolverError):
            lipschitz_estimate(s)


class TestSolve:
    def test_identity_fixed_point(self, rng):
        g = GeometryConfig(6, 5, 1, 1)
        x0 = rng.random(g.dmd_shape)
        s = stack(build_map(g), np.ones((1,) + g.dmd_shape, np.uint8), x0[None])
        r = solve(s, "2d", SolverConfig(lam=1e-9))
        assert np.linalg.norm(r.estimate - x0) / np.linalg.norm(x0) <= 1e-6
        assert_monotone(r)

    def test_square_random_binary_blocks(self):
        # seed 1 gives invertible per-block 16x16 systems (seed 0 does not)
        g = GeometryConfig(2, 2, 4, 4)
        r_, c_ = np.indices(g.dmd_shape)
        x0 = 0.2 + 0.6 * (r_ >= 3) + 0.15 * (c_ >= 5)
        s = system_for(g, "random-binary", 16, x0, seed=1)
        dense = s.dense()
        assert np.linalg.cond(dense) < 1e4
        direct = np.linalg.lstsq(dense, s.measurements.ravel(), rcond=None)[0]
        assert np.linalg.norm(direct - x0.ravel()) / np.linalg.norm(x0) <= 1e-4
        lam = 1e-8 * float(np.linalg.norm(s.measurements))
        res = solve(s, "2d", SolverConfig(lam=lam, max_iters=10000, tol=0))
        assert np.linalg.norm(res.estimate - x0) / np.linalg.norm(x0) <= 1e-4
        assert_monotone(res)

    def test_data_gradient_finite_difference(self, rng):
        g = GeometryConfig(2, 2, 3, 3)
        s = system_for(g, "random-binary", 4, rng.random(g.dmd_shape), optics=OpticsConfig(0.5))
        x = rng.standard_normal(g.dmd_shape)
        d = rng.standard_normal(g.dmd_shape)

        def f(z):
            r = s.apply(z) - s.measurements
            return 0.5 * float(np.vdot(r, r))

        h = 1e-5
        fd = (f(x + h * d) - f(x - h * d)) / (2 * h)
        an = float(np.vdot(data_gradient(s, x), d))
        assert fd == pytest.approx(an, rel=1e-5)

    @pytest.mark.parametrize("kind,nonneg", [("random-binary", True), ("hadamard", False)])
    def test_monotone_and_tv_descent(self, kind, nonneg):
        g = GeometryConfig(4, 4, 4, 4)
        r_, c_ = np.indices(g.dmd_shape)
        scene = 0.2 + 0.7 * ((r_ >= 6) & (c_ < 10))
        s = system_for(g, kind, 8, scene, seed=5, noise=NoiseSpec(25, seed=1))
        res = solve(s, "2d", SolverConfig(lam=3e-4, max_iters=300, nonneg=nonneg))
        assert_monotone(res)
        assert tv_value(res.estimate) <= tv_value(backprojection(s))
        np.testing.assert_allclose(res.objective_trace, res.data_trace + 3e-4 * res.tv_trace)

    def test_video_3d(self):
        g = GeometryConfig(2, 2, 4, 4)
        cube = np.zeros((2, 8, 8))
        cube[0, 2:5, 1:4] = 1
        cube[1, 2:5, 2:5] = 1
        video = np.repeat(cube, 8, axis=0)
        m = build_map(g)
        seq = make_sequence("random-binary", g, 16, seed=1)
        s = stack(m, seq, simulate_capture(m, seq, video), g, frame_count=2)
        res = solve(s, "3d", SolverConfig(lam=1e-5, max_iters=400))
        assert res.estimate.shape == (2, 8, 8)
        assert_monotone(res)
        assert np.linalg.norm(res.estimate - cube) / np.linalg.norm(cube) < 0.1

    def test_3d_needs_video_system(self):
        g = GeometryConfig(2, 2, 2, 2)
        s = system_for(g, "random-binary", 2, np.ones((4, 4)))
        with pytest.raises(ConfigError):
            solve(s, "3d")

    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_divergence_reports_iteration(self):
        g = GeometryConfig(2, 2, 2, 2)
        s = system_for(g, "random-binary", 2, np.ones((4, 4)))
        s.measurements[0, 0, 0] = np.inf
        with pytest.raises(SolverError) as info:
            solve(s, "2d", SolverConfig(step=1.0), x0=np.zeros((4, 4)))
        assert info.value.iteration == 0

    def test_explicit_step_and_x0_shape(self):
        g = GeometryConfig(2, 2, 2, 2)
        s = system_for(g, "random-binary", 3, np.ones((4, 4)))
        res = solve(s, "2d", SolverConfig(step=1.0, max_iters=20))
        assert res.lipschitz == 1.0
        assert_monotone(res)
        with pytest.raises(DimensionError):
            solve(s, "2d", x0=np.zeros((3, 3)))

    @pytest.mark.parametrize("kwargs", [{"lam": 0}, {"max_iters": 0}, {"inner_prox_iters": 0},
                                        {"tol": -1}, {"step": "fast"}, {"step": -2.0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(**kwargs)


class TestLeastSquares:
    def test_square_system_matches_direct(self, rng):
        g = GeometryConfig(2, 2, 2, 2)
        x0 = rng.random(g.dmd_shape)
        s = system_for(g, "pixel-scan", None, x0, optics=OpticsConfig(0.4))
        direct = np.linalg.solve(s.dense(), s.measurements.ravel())
        np.testing.assert_allclose(least_squares_baseline(s).ravel(), direct, atol=1e-6)

    def test_single_all_ones_pattern_min_norm(self, rng):
        g = GeometryConfig(3, 2, 2, 3)
        y = rng.random((1,) + g.sensor_shape)
        s = stack(build_map(g), np.ones((1,) + g.dmd_shape, np.uint8), y)
        pinv = np.linalg.pinv(s.dense()) @ y.ravel()
        x = least_squares_baseline(s)
        np.testing.assert_allclose(x.ravel(), pinv, atol=1e-10)
        # block-constant upsampling of y
        np.testing.assert_allclose(x, np.kron(y[0], np.ones((2, 3))), atol=1e-10)

    def test_zero_measurements(self):
        g = GeometryConfig(2, 2, 2, 2)
        s = stack(build_map(g), np.ones((2, 4, 4), np.uint8), np.zeros((2, 2, 2)))
        assert not least_squares_baseline(s).any()
