import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from fpacs.analysis import (compression_factor, compression_sweep, derive_seed, make_chart,
                            make_moving_scene, median_filter_3d, mtf_curve, noise_sweep, psnr,
                            rate_report, ssim, ssim_map)
from fpacs.analysis.mtf import michelson
from fpacs.errors import ConfigError, DimensionError
from fpacs.io import read_csv
from fpacs.model import GeometryConfig
from fpacs.recon import SolverConfig


class TestRates:
    def test_prototype(self):
        r = rate_report(64, 480, 16)
        assert r.measurement_rate == 1_966_080
        assert r.str == 31_457_280
        assert isinstance(r.str, int)
        assert r.achievable[0][1] == pytest.approx(31.45728)

    def test_single_pixel_bound(self):
        assert rate_report(1, 20_000, 16).achievable == ((1.0, 0.32),)

    def test_nyquist_camera(self):
        assert rate_report(1000, 30, 1).str == 30_000_000

    @given(st.integers(1, 4096), st.integers(1, 20_000), st.fractions(min_value=0.01, max_value=64))
    def test_invariants(self, k, f, a):
        r = rate_report(k, f, a, (0.5, 2.0))
        assert r.measurement_rate == k * k * f
        assert r.str == pytest.approx(float(a) * k * k * f, rel=1e-15)
        assert r.achievable[1][1] == pytest.approx(r.str / 2e6, rel=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            rate_report(0, 480, 16)

    @pytest.mark.parametrize("T,expected", [(64, 3.8147), (128, 1.9073), (256, 0.9537), (512, 0.4768)])
    def test_compression_table(self, T, expected):
        assert compression_factor(10**6, T, 4096) == pytest.approx(expected, abs=5e-5)
        assert compression_factor(10**6, T, 4096) == 10**6 / (T * 4096)

    def test_full_sampling(self):
        assert compression_factor(64 * 256, 256, 64) == 1.0

    def test_t22(self):
        # the formula gives 11.10, not 11.6
        assert compression_factor(10**6, 22, 4096) == pytest.approx(11.0973, abs=1e-4)


class TestMetrics:
    def test_identical(self, rng):
        x = rng.random((16, 16))
        assert psnr(x, x) == math.inf
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_psnr_offset(self):
        ref = np.full((8, 8), 0.5)
        assert psnr(ref + 0.1, ref, peak=1.0) == pytest.approx(20.0, abs=1e-9)

    def test_ssim_constants_luminance_only(self):
        a, b, peak = 0.5, 0.7, 1.0
        c1 = (0.01 * peak) ** 2
        expected = (2 * a * b + c1) / (a * a + b * b + c1)
        got = ssim(np.full((12, 12), b), np.full((12, 12), a), peak=peak)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_ssim_matches_reference_implementation(self, rng):
        ref = rng.random((32, 40))
        x = np.clip(ref + 0.1 * rng.standard_normal(ref.shape), 0, 1)
        ours = ssim_map(x, ref, peak=1.0)[5:-5, 5:-5].mean()
        theirs = structural_similarity(x, ref, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                       use_sample_covariance=False)
        assert ours == pytest.approx(theirs, abs=1e-7)

    @given(st.integers(0, 2**32 - 1))
    def test_symmetry(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.random((2, 12, 12))
        assert psnr(a, b, peak=1.0) == pytest.approx(psnr(b, a, peak=1.0), rel=1e-14)
        assert ssim(a, b, peak=1.0) == pytest.approx(ssim(b, a, peak=1.0), rel=1e-12)
        assert -1 <= ssim(a, b) <= 1

    def test_shape_check(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((2, 2)), np.ones((3, 3)))


class TestScenes:
    def test_bars_square_wave(self):
        b = make_chart((4, 16), "bars", frequency=0.125)
        np.testing.assert_array_equal(b[2], [1, 1, 1, 1, 0, 0, 0, 0] * 2)
        assert np.all(b == b[0])
        assert michelson(make_chart((16, 64), "bars", frequency=1 / 16)) == 1.0

    def test_nyquist_bars_alternate(self):
        np.testing.assert_array_equal(make_chart((1, 6), "bars", frequency=0.5)[0], [1, 0] * 3)

    def test_charts_in_unit_range(self):
        g = GeometryConfig(8, 8, 8, 8)
        for kind in ("bars", "checker", "usaf-like"):
            c = make_chart(g, kind)
            assert c.shape == (64, 64) and c.min() >= 0 and c.max() <= 1
            assert np.array_equal(c, make_chart(g, kind))
        assert make_chart(g, "usaf-like").max() == 1

    def test_chart_errors(self):
        with pytest.raises(ConfigError):
            make_chart((8, 8), "bars", frequency=0.7)
        with pytest.raises(ConfigError):
            make_chart((10, 10), "usaf-like")
        with pytest.raises(ConfigError):
            make_chart((8, 8), "siemens")

    def test_static_object(self):
        cube = make_moving_scene((10, 10), 3, (0, 0), 4, start=(2, 2))
        assert all(np.array_equal(cube[0], f) for f in cube)

    @pytest.mark.parametrize("v", [(0.0, 1.0), (0.5, -0.75), (1.25, 0.4)])
    def test_offset_by_correlation_peak(self, v):
        obj = np.zeros((5, 5))
        obj[1:4, 1:4] = 1
        obj[2, 2] = 0.5
        cube = make_moving_scene((40, 40), obj, v, 10, start=(12, 12))
        for t in range(10):
            corr = np.fft.ifft2(np.fft.fft2(cube[t]) * np.conj(np.fft.fft2(cube[0]))).real
            peak = np.unravel_index(np.argmax(corr), corr.shape)
            shift = tuple(((p + 20) % 40) - 20 for p in peak)
            expected = tuple(int(math.copysign(math.floor(abs(c * t) + 0.5), c * t)) for c in v)
            assert shift == expected

    def test_object_leaves_frame(self):
        with pytest.raises(ConfigError):
            make_moving_scene((10, 10), 4, (0, 1), 10)


def brute_median(cube, r=(1, 1, 1)):
    ry, rx, rt = r
    T, R, C = cube.shape
    out = np.empty_like(cube)
    for t in range(T):
        for i in range(R):
            for j in range(C):
                vals = [cube[min(max(tt, 0), T - 1), min(max(ii, 0), R - 1), min(max(jj, 0), C - 1)]
                        for tt in range(t - rt, t + rt + 1)
                        for ii in range(i - ry, i + ry + 1)
                        for jj in range(j - rx, j + rx + 1)]
                out[t, i, j] = np.median(vals)
    return out


class TestMedian:
    def test_impulse_removed_and_idempotent(self):
        cube = np.full((5, 5, 5), 0.3)
        cube[2, 2, 2] = 9.0
        out = median_filter_3d(cube)
        np.testing.assert_array_equal(out, 0.3)
        np.testing.assert_array_equal(median_filter_3d(out), out)

    def test_brute_force(self, rng):
        cube = rng.random((4, 6, 6))
        np.testing.assert_array_equal(median_filter_3d(cube), brute_median(cube))
        np.testing.assert_array_equal(median_filter_3d(cube, (1, 2, 0)), brute_median(cube, (1, 2, 0)))

    def test_piecewise_constant_idempotent(self):
        cube = np.zeros((6, 8, 8))
        cube[:, :, 4:] = 1.0
        cube[3:] += 0.5
        once = median_filter_3d(cube)
        np.testing.assert_array_equal(median_filter_3d(once), once)
        np.testing.assert_array_equal(once, brute_median(cube))
        # away from region corners nothing moves
        np.testing.assert_array_equal(once[0], cube[0])

    @given(st.integers(0, 2**32 - 1))
    def test_no_new_values(self, seed):
        cube = np.random.default_rng(seed).integers(0, 5, (3, 4, 5)).astype(float)
        out = median_filter_3d(cube)
        assert np.isin(out, cube).all()


SOLVER = SolverConfig(lam=1e-5, max_iters=300)


class TestSweeps:
    def setup_method(self):
        self.g = GeometryConfig(4, 4, 4, 4)
        self.scene = make_chart(self.g, "bars", frequency=0.125)

    def test_seed_derivation(self):
        assert derive_seed(3, 0) == derive_seed(3, 0)
        assert derive_seed(3, 1) != derive_seed(3, 0)
        assert derive_seed(2, 1) == derive_seed(3, 0)  # function of base ^ index
        assert 0 <= derive_seed(2**70, 5) < 2**63

    def test_lengths_and_csv(self, tmp_path):
        res = compression_sweep(self.scene, self.g, None, "random-binary", [4, 8], solver_cfg=SOLVER,
                                seeds=(0, 1))
        assert len(res.psnr_db) == len(res.ssim) == 2
        assert res.psnr_per_seed.shape == (2, 2)
        res.to_csv(tmp_path / "c.csv")
        header, rows = read_csv(tmp_path / "c.csv")
        assert header[:3] == ["T", "psnr_db", "ssim"]
        assert [r[0] for r in rows] == ["4", "8"]

    def test_pixel_scan_exact(self):
        res = compression_sweep(self.scene, self.g, None, "pixel-scan", [16],
                                solver_cfg=SolverConfig(lam=1e-12))
        # relative error 1e-6 on a 0/1 chart is about 120 dB
        assert res.psnr_db[0] >= 20 * math.log10(1 / (1e-6 * math.sqrt(np.mean(self.scene ** 2))))

    def test_noise_reproducible_with_noiseless_point(self, tmp_path):
        a = noise_sweep(self.scene, self.g, None, "random-binary", [20, None], 8, SOLVER, seeds=(4,))
        b = noise_sweep(self.scene, self.g, None, "random-binary", [20, None], 8, SOLVER, seeds=(4,))
        assert a.psnr_db.tobytes() == b.psnr_db.tobytes()
        assert a.psnr_db[1] > a.psnr_db[0]
        a.to_csv(tmp_path / "n.csv")
        assert read_csv(tmp_path / "n.csv")[1][1][0] == "none"


class TestMtf:
    def test_low_frequency_full_sampling(self):
        g = GeometryConfig(8, 8, 4, 4)
        # bar width 16 = 4 blocks
        c = mtf_curve(g, None, "pixel-scan", None, [1 / 32], SolverConfig(lam=1e-9))
        assert c.mtf[0] >= 0.95
        assert c.alpha == pytest.approx(1.0)

    def test_values_clamped(self):
        g = GeometryConfig(4, 4, 4, 4)
        c = mtf_curve(g, None, "random-binary", 4, [1 / 16, 1 / 4, 0.5], SOLVER)
        assert np.all((c.mtf >= 0) & (c.mtf <= 1.05))

    def test_bad_frequency(self):
        with pytest.raises(ConfigError):
            mtf_curve(GeometryConfig(2, 2, 2, 2), None, "random-binary", 2, [0.6])

    def test_csv(self, tmp_path):
        g = GeometryConfig(2, 2, 4, 4)
        c = mtf_curve(g, None, "random-binary", 8, [0.125], SOLVER)
        c.to_csv(tmp_path / "m.csv")
        header, rows = read_csv(tmp_path / "m.csv")
        assert header == ["frequency", "mtf", "alpha"]
        assert float(rows[0][2]) == 2.0
