"""
Tests for SSIM, PSNR, flicker and the benchmark report.
"""

import csv
import json
import math

import numpy as np
import pytest

from services.dataset.frames import AcquisitionTag, Frame, FrameSequence
from services.metrics.quality import (
    C1,
    channel_mean_error,
    flicker,
    gaussian_window,
    mean_squared_error,
    psnr,
    psnr_from_mse,
    ssim,
    window_size_for,
)
from services.metrics.report import CSV_COLUMNS, MetricsReport, MetricsRow, evaluate, fingerprint
from utils.errors import ContractError, ShapeError


def ssim_oracle(x, y, size=11, sigma=1.5):
    """Window-by-window SSIM with explicit weighted statistics."""
    w = gaussian_window(size, sigma)
    c2 = (0.03) ** 2
    scores = []
    for c in range(x.shape[2]):
        values = []
        for i in range(x.shape[0] - size + 1):
            for j in range(x.shape[1] - size + 1):
                a = x[i:i + size, j:j + size, c]
                b = y[i:i + size, j:j + size, c]
                mu_a, mu_b = np.sum(w * a), np.sum(w * b)
                var_a = np.sum(w * (a - mu_a) ** 2)
                var_b = np.sum(w * (b - mu_b) ** 2)
                cov = np.sum(w * (a - mu_a) * (b - mu_b))
                values.append(
                    ((2 * mu_a * mu_b + C1) * (2 * cov + c2))
                    / ((mu_a ** 2 + mu_b ** 2 + C1) * (var_a + var_b + c2))
                )
        scores.append(np.mean(values))
    return float(np.mean(scores))


class TestSSIM:

    def test_identical_images_score_exactly_one(self, rng):
        x = rng.uniform(size=(20, 24, 3))
        assert ssim(x, x.copy()) == 1.0

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_window_oracle(self, seed):
        rng = np.random.default_rng(seed)
        height, width = (int(side) for side in rng.integers(8, 33, size=2))
        x = rng.uniform(size=(height, width, 3))
        y = np.clip(x + rng.normal(0.0, rng.uniform(0.01, 0.3), size=x.shape), 0.0, 1.0)
        expected = ssim_oracle(x, y, size=window_size_for(height, width))
        assert ssim(x, y) == pytest.approx(expected, abs=1e-10)

    def test_tiny_shift_stays_near_one(self, rng):
        x = rng.uniform(0.1, 0.9, size=(24, 24, 3))
        assert ssim(x, x + 1e-6) > 0.9999

    def test_symmetric_and_bounded(self, rng):
        x = rng.uniform(size=(16, 16, 3))
        y = rng.uniform(size=(16, 16, 3))
        assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-14)
        assert -1.0 <= ssim(x, y) < 1.0

    def test_constant_black_against_white(self):
        value = ssim(np.zeros((16, 16, 3)), np.ones((16, 16, 3)))
        assert value == pytest.approx(C1 / (1.0 + C1), rel=1e-9)

    def test_accepts_frames(self, frame):
        assert ssim(frame, frame) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((16, 16, 3)), np.zeros((16, 15, 3)))

    @pytest.mark.parametrize("height,width,expected", [(224, 224, 11), (11, 40, 11), (10, 40, 9), (8, 8, 7), (9, 12, 9)])
    def test_window_shrinks_for_small_images(self, height, width, expected):
        assert window_size_for(height, width) == expected

    def test_small_image_uses_smaller_window(self, rng):
        x = rng.uniform(size=(8, 8, 3))
        y = rng.uniform(size=(8, 8, 3))
        assert ssim(x, y) == pytest.approx(ssim_oracle(x, y, size=7), abs=1e-10)

    def test_gaussian_window_is_normalized(self):
        w = gaussian_window()
        assert w.shape == (11, 11)
        assert w.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(w, w.T)


class TestPSNR:

    def test_identical_images_are_infinite(self, frame):
        assert psnr(frame, frame) == math.inf

    def test_known_mse(self):
        x = np.zeros((8, 8, 3))
        y = np.full((8, 8, 3), 0.1)
        assert psnr(x, y) == pytest.approx(20.0)

    def test_peak(self):
        x = np.zeros((8, 8, 3))
        y = np.full((8, 8, 3), 25.5)
        assert psnr(x, y, peak=255.0) == pytest.approx(20.0)

    def test_from_mse(self):
        assert psnr_from_mse(0.01) == pytest.approx(20.0)
        assert psnr_from_mse(0.0) == math.inf
        x = np.zeros((8, 8, 3))
        y = np.full((8, 8, 3), 0.2)
        assert mean_squared_error(x, y) == pytest.approx(0.04)


class TestTemporal:

    def test_flicker_of_identical_videos_is_zero(self, make_sequence):
        seq = make_sequence(length=4)
        assert flicker(seq, seq) == 0.0

    def test_flicker_of_alternating_frames(self):
        ref = [np.full((8, 8, 3), 0.5)] * 4
        seq = [np.full((8, 8, 3), v) for v in (0.4, 0.6, 0.4, 0.6)]
        assert flicker(seq, ref) == pytest.approx(0.2)

    def test_flicker_of_frames_stepping_by_a_tenth(self):
        ref = [np.full((8, 8, 3), 0.5)] * 5
        seq = [np.full((8, 8, 3), v) for v in (0.5, 0.6, 0.5, 0.6, 0.5)]
        assert flicker(seq, ref) == pytest.approx(0.1)

    def test_flicker_grows_with_noise(self, rng):
        ref = [rng.uniform(0.2, 0.8, size=(16, 16, 3)) for _ in range(6)]
        values = [
            flicker([f + rng.uniform(-eps, eps, size=f.shape) for f in ref], ref)
            for eps in (0.01, 0.05, 0.15)
        ]
        assert values[0] < values[1] < values[2]

    def test_flicker_preconditions(self, make_sequence):
        with pytest.raises(ContractError):
            flicker(make_sequence(length=3), make_sequence(length=4))
        with pytest.raises(ContractError):
            flicker(make_sequence(length=1), make_sequence(length=1))

    def test_channel_mean_error(self):
        ref = [np.full((8, 8, 3), 0.5)] * 2
        seq = [np.full((8, 8, 3), 0.5) + np.array([0.1, 0.0, -0.2])] * 2
        assert channel_mean_error(seq, ref) == pytest.approx((0.1, 0.0, -0.2))


# =============================================================================
# Report
# =============================================================================

def sequence(pixels_list, lighting, density=None):
    return FrameSequence([
        (Frame(pixels), AcquisitionTag(position, lighting, density))
        for position, pixels in enumerate(pixels_list)
    ])


@pytest.fixture
def benchmark(rng):
    """Ground truth for two lightings plus an exact and a noisy method."""
    gts = {}
    exact = {}
    noisy = {}
    for lighting in (0, 2):
        frames = [rng.uniform(0.1, 0.9, size=(16, 16, 3)) for _ in range(3)]
        gts[lighting] = sequence(frames, lighting)
        for density in (0.05, 0.15):
            exact[(lighting, density)] = sequence(frames, lighting, density)
            noisy[(lighting, density)] = sequence(
                [np.clip(f + rng.normal(0, 0.05, f.shape), 0, 1) for f in frames], lighting, density
            )
    return {'exact': exact, 'noisy': noisy}, gts


class TestReport:

    def test_rows_per_cell_and_pooled(self, benchmark):
        methods, gts = benchmark
        report = evaluate(methods, gts, eval_size=16)
        assert len(report.rows) == 2 * 2 * 3
        assert report.errors == []
        pooled = report.row('noisy', 0.05)
        assert pooled.lighting == 'all'
        assert pooled.frames == 6
        per_lighting = [report.row('noisy', 0.05, lighting).ssim for lighting in (0, 2)]
        assert pooled.ssim == pytest.approx(np.mean(per_lighting))

    def test_exact_method_scores_perfectly(self, benchmark):
        methods, gts = benchmark
        report = evaluate(methods, gts, eval_size=16)
        row = report.row('exact', '0.15', 2)
        assert row.ssim == 1.0
        assert row.psnr == math.inf
        assert row.flicker == 0.0
        assert report.row('noisy', '0.15', 2).ssim < 1.0

    def test_one_identical_frame_keeps_pooled_psnr_finite(self, rng):
        frames = [rng.uniform(0.1, 0.9, size=(16, 16, 3)) for _ in range(3)]
        restored = [frames[0], np.clip(frames[1] + 0.05, 0, 1), np.clip(frames[2] - 0.1, 0, 1)]
        methods = {'partial': {(0, 0.05): sequence(restored, 0, 0.05)}}
        report = evaluate(methods, {0: sequence(frames, 0)}, eval_size=16)
        expected = 10.0 * math.log10(1.0 / np.mean([np.mean((r - f) ** 2) for r, f in zip(restored, frames)]))
        for lighting in (0, 'all'):
            row = report.row('partial', 0.05, lighting)
            assert math.isfinite(row.psnr)
            assert row.psnr == pytest.approx(expected)

    def test_rows_are_sorted(self, benchmark):
        methods, gts = benchmark
        report = evaluate(methods, gts, eval_size=16)
        keys = [row.key for row in report.rows]
        assert keys[:3] == [('exact', '0.05', 0), ('exact', '0.05', 2), ('exact', '0.05', 'all')]
        assert keys[-1] == ('noisy', '0.15', 'all')

    def test_missing_partners_are_reported(self, benchmark, rng):
        methods, gts = benchmark
        methods['noisy'][(4, 0.05)] = sequence([rng.uniform(size=(16, 16, 3))] * 3, 4, 0.05)
        methods['noisy'][(0, 0.05)] = sequence([rng.uniform(size=(16, 16, 3))] * 2, 0, 0.05)
        report = evaluate(methods, gts, eval_size=16)
        items = sorted(item for item, _ in report.errors)
        assert items == ['noisy/light_0/density_0.05', 'noisy/light_4/density_0.05']
        assert report.row('noisy', 0.05, 0) is None

    def test_frames_are_resized_for_scoring(self, benchmark):
        methods, gts = benchmark
        report = evaluate({'exact': methods['exact']}, gts, eval_size=32)
        assert report.row('exact', 0.05).ssim == pytest.approx(1.0)
        assert report.config['eval_size'] == 32

    def test_fingerprint_tracks_pixels(self, benchmark, rng):
        methods, gts = benchmark
        first = fingerprint(methods, gts)
        assert fingerprint(methods, gts) == first
        gts[0] = sequence([rng.uniform(size=(16, 16, 3)) for _ in range(3)], 0)
        assert fingerprint(methods, gts) != first

    def test_csv_and_json(self, benchmark, tmp_path):
        methods, gts = benchmark
        report = evaluate(methods, gts, eval_size=16, config={'seed': 0})
        report.write_csv(tmp_path / 'report.csv')
        report.write_json(tmp_path / 'report.json')

        with open(tmp_path / 'report.csv', newline='') as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert rows[1] == ['exact', '0.05', '0', '1.000000', 'inf', '3']
        assert len(rows) == 1 + len(report.rows)

        payload = json.loads((tmp_path / 'report.json').read_text())
        assert payload['config'] == {'seed': 0, 'eval_size': 16}
        assert payload['rows'][0]['psnr'] == 'inf'
        assert payload['fingerprint'] == report.fingerprint

    def test_duplicate_rows_rejected(self):
        row = MetricsRow('m', '0.05', 0, 0.5, 20.0, 3)
        with pytest.raises(ContractError):
            MetricsReport(rows=[row, row])
