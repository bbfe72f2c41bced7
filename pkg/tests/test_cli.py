"""
End-to-end tests of the fogbench commands through main().
"""

import csv
import json
import shutil

import cv2
import numpy as np
import pytest

from main import build_parser, main
from services.bench.procedural import SceneSpec
from services.dataset.loader import discover_dataset, read_frame
from services.fog.panel import CALIBRATION_TOLERANCE, DensityClass, density_class, panel_contrast


SIZE = 32
FRAMES = 4


def run(command, **settings):
    argv = [command]
    for key, value in settings.items():
        argv += ['--set', f'{key}={value}']
    return main(argv)


@pytest.fixture(scope='module')
def dataset(tmp_path_factory):
    """Procedural dataset: 2 lightings x 3 densities, with raw slices."""
    root = tmp_path_factory.mktemp('synth') / 'data'
    assert run('synth', output=root, size=SIZE, frames=FRAMES, lightings=2, raw='yes') == 0
    return root


@pytest.fixture(scope='module')
def restored(dataset, tmp_path_factory):
    base = tmp_path_factory.mktemp('restored')
    dcp = base / 'dcp'
    identity = base / 'identity'
    assert run('defog', method='dcp', input=dataset, output=dcp, patch=5, guided_radius=4) == 0
    assert run('defog', method='identity', input=dataset, output=identity) == 0
    return {'dcp': dcp, 'identity': identity}


class TestSynth:

    def test_tree_layout(self, dataset):
        index = discover_dataset(dataset)
        assert index.errors == []
        assert sorted(index.clear) == [0, 1]
        assert sorted(index.foggy) == [(l, d) for l in (0, 1) for d in (0.015, 0.05, 0.15)]
        assert all(len(seq) == FRAMES for seq in index.foggy.values())
        assert sorted(p.name for p in (dataset / 'depth').iterdir()) == [f'pos_{i:04d}.png' for i in range(FRAMES)]
        assert len(list((dataset / 'raw').glob('*.png'))) == FRAMES * 2 * 4

    def test_manifest_records_calibration(self, dataset):
        manifest = json.loads((dataset / 'manifest.json').read_text())
        assert manifest['generator'] == 'procedural'
        assert manifest['fps'] == 25.0
        assert len(manifest['calibration']) == 6
        for entry in manifest['calibration']:
            assert entry['contrast'] == pytest.approx(float(entry['density']), abs=CALIBRATION_TOLERANCE)
            assert entry['beta'] > 0
        assert len(manifest['files']) == FRAMES * (2 + 6)

    def test_stored_panels_hit_the_contrast_anchors(self, dataset):
        roi = SceneSpec(size=SIZE).panel_roi()
        expected = {0.015: DensityClass.DENSE, 0.05: DensityClass.MEDIUM, 0.15: DensityClass.LIGHT}
        index = discover_dataset(dataset)
        for (lighting, density), seq in index.foggy.items():
            for frame in seq.frames:
                contrast = panel_contrast(frame, roi)
                assert abs(contrast - density) <= CALIBRATION_TOLERANCE, (lighting, density, contrast)
                assert density_class(contrast) is expected[density]

    def test_dataset_frames_are_16_bit(self, dataset):
        for path in [*(dataset / 'foggy').rglob('*.png'), *(dataset / 'clear').rglob('*.png'), *(dataset / 'raw').glob('*.png')]:
            assert cv2.imread(str(path), cv2.IMREAD_UNCHANGED).dtype == np.uint16

    def test_full_lighting_grid(self, tmp_path):
        root = tmp_path / 'grid'
        assert run('synth', output=root, size=16, frames=2) == 0
        assert len(list((root / 'foggy').glob('light_*/density_*'))) == 18
        assert len(list((root / 'clear').glob('light_*'))) == 6

    def test_same_seed_same_files(self, tmp_path):
        for name in ('a', 'b'):
            assert run('synth', output=tmp_path / name, size=16, frames=2, lightings=1, seed=4) == 0
        frame = 'foggy/light_0/density_0.05/frame_0001.png'
        assert (tmp_path / 'a' / frame).read_bytes() == (tmp_path / 'b' / frame).read_bytes()

    def test_colored_airlight(self, tmp_path):
        root = tmp_path / 'colored'
        assert run('synth', output=root, size=SIZE, frames=2, lightings=1, densities='0.05', airlight='0.8,0.8,0.7') == 0
        manifest = json.loads((root / 'manifest.json').read_text())
        assert manifest['calibration'][0]['airlight'] == [0.8, 0.8, 0.7]
        assert manifest['calibration'][0]['contrast'] == pytest.approx(0.05, abs=CALIBRATION_TOLERANCE)


class TestRecompose:

    def test_rebuilds_videos_from_raw_slices(self, dataset, tmp_path):
        out = tmp_path / 'recomposed'
        assert run('recompose', input=dataset / 'raw', depth=dataset / 'depth', output=out) == 0
        original = discover_dataset(dataset)
        rebuilt = discover_dataset(out)
        assert sorted(rebuilt.foggy) == sorted(original.foggy)
        assert sorted(rebuilt.clear) == sorted(original.clear)
        for key, seq in original.foggy.items():
            assert rebuilt.foggy[key].tags == seq.tags
            np.testing.assert_array_equal(rebuilt.foggy[key].as_array(), seq.as_array())
        assert (out / 'depth' / 'pos_0000.png').exists()


class TestDefog:

    def test_outputs_mirror_the_foggy_tree(self, dataset, restored):
        for root in restored.values():
            index = discover_dataset(root)
            assert sorted(index.foggy) == sorted(discover_dataset(dataset).foggy)
            assert index.clear == {}

    def test_identity_copies_frames(self, dataset, restored):
        path = 'foggy/light_1/density_0.15/frame_0002.png'
        assert read_frame(restored['identity'] / path).pixels.tolist() == read_frame(dataset / path).pixels.tolist()

    def test_sidecar(self, restored):
        sidecar = json.loads((restored['dcp'] / 'defog.json').read_text())
        assert sidecar['method'] == 'dcp'
        assert sidecar['params']['patch'] == 5
        assert sidecar['sequences'] == 6
        assert sidecar['frames'] == 6 * FRAMES

    def test_single_sequence_directory(self, dataset, tmp_path):
        out = tmp_path / 'single'
        source = dataset / 'foggy' / 'light_0' / 'density_0.05'
        assert run('defog', method='identity', input=source, output=out) == 0
        assert sorted(p.name for p in out.glob('*.png')) == [f'frame_{i:04d}.png' for i in range(FRAMES)]

    def test_corrupt_frame_is_a_data_error(self, tmp_path):
        root = tmp_path / 'data'
        assert run('synth', output=root, size=16, frames=2, lightings=1, densities='0.05') == 0
        (root / 'foggy' / 'light_0' / 'density_0.05' / 'frame_0001.png').write_bytes(b'not a png')
        assert run('defog', method='identity', input=root, output=tmp_path / 'out') == 3

    def test_unknown_method(self, dataset, tmp_path):
        assert run('defog', method='magic', input=dataset, output=tmp_path / 'out') == 2

    def test_tcvd_without_checkpoint(self, dataset, tmp_path):
        assert run('defog', method='tcvd', input=dataset, output=tmp_path / 'out') == 2

    def test_output_must_differ_from_input(self, dataset):
        assert run('defog', method='identity', input=dataset, output=dataset) == 2


class TestEval:

    def test_reports_are_reproducible(self, dataset, restored, tmp_path):
        restored_list = f"dcp={restored['dcp']},identity={restored['identity']}"
        out = tmp_path / 'report'
        assert run('eval', restored=restored_list, gt=dataset, output=out, eval_size=SIZE) == 0
        first = {name: (out / name).read_bytes() for name in ('report.json', 'report.csv')}
        assert run('eval', restored=restored_list, gt=dataset, output=out, eval_size=SIZE) == 0
        assert {name: (out / name).read_bytes() for name in first} == first

    def test_full_chain_is_byte_identical(self, tmp_path):
        def chain():
            data, dcp, report = tmp_path / 'data', tmp_path / 'dcp', tmp_path / 'report'
            assert run('synth', output=data, size=SIZE, frames=3, lightings=1, seed=7) == 0
            assert run('defog', method='dcp', input=data, output=dcp, patch=5, guided_radius=4) == 0
            assert run('eval', restored=f'dcp={dcp}', gt=data, output=report, eval_size=SIZE) == 0
            outputs = {
                path.relative_to(tmp_path).as_posix(): path.read_bytes()
                for path in sorted(tmp_path.rglob('*')) if path.is_file()
            }
            for directory in (data, dcp, report):
                shutil.rmtree(directory)
            return outputs

        first = chain()
        assert 'report/report.csv' in first and 'report/report.json' in first
        assert chain() == first

    def test_dcp_beats_identity_at_every_density(self, dataset, restored, tmp_path):
        out = tmp_path / 'report'
        restored_list = f"dcp={restored['dcp']},identity={restored['identity']}"
        assert run('eval', restored=restored_list, gt=dataset, output=out, eval_size=SIZE) == 0
        with open(out / 'report.csv', newline='') as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2 * 3 * 3
        pooled = {(r['method'], r['density']): float(r['ssim']) for r in rows if r['lighting'] == 'all'}
        for density in ('0.015', '0.05', '0.15'):
            assert pooled[('dcp', density)] > pooled[('identity', density)], density
        payload = json.loads((out / 'report.json').read_text())
        assert payload['errors'] == []
        assert payload['config']['eval_size'] == SIZE

    def test_missing_ground_truth_exits_3(self, restored, tmp_path):
        gt = tmp_path / 'gt'
        assert run('synth', output=gt, size=SIZE, frames=FRAMES, lightings=1) == 0
        out = tmp_path / 'report'
        assert run('eval', restored=f"identity={restored['identity']}", gt=gt, output=out, eval_size=SIZE) == 3
        payload = json.loads((out / 'report.json').read_text())
        assert any('light_1' in error['item'] for error in payload['errors'])

    def test_bad_restored_list(self, dataset, tmp_path):
        assert run('eval', restored='nameonly', gt=dataset, output=tmp_path / 'r') == 2
        assert run('eval', restored=f'a={tmp_path / "gone"}', gt=dataset, output=tmp_path / 'r') == 2


class TestTrain:

    def test_train_then_defog_with_checkpoint(self, tmp_path):
        data = tmp_path / 'data'
        assert run('synth', output=data, size=SIZE, frames=3, lightings=1, densities='0.05') == 0
        checkpoint = tmp_path / 'model.ckpt'
        assert run('train', roots=data, checkpoint=checkpoint, steps=1, lr=1e-3) == 0
        assert checkpoint.exists()
        loss_rows = (tmp_path / 'model.loss.csv').read_text().splitlines()
        assert loss_rows[0] == 'step,loss'
        assert loss_rows[-1] == 'root_0_samples,1'

        out = tmp_path / 'tcvd'
        assert run('defog', method='tcvd', checkpoint=checkpoint, input=data, output=out) == 0
        sidecar = json.loads((out / 'defog.json').read_text())
        assert sidecar['params']['model']['input_size'] == 64
        assert read_frame(out / 'foggy' / 'light_0' / 'density_0.05' / 'frame_0000.png').size == (SIZE, SIZE)

    def test_unknown_model(self, tmp_path):
        data = tmp_path / 'data'
        assert run('synth', output=data, size=16, frames=2, lightings=1, densities='0.05') == 0
        assert run('train', roots=data, checkpoint=tmp_path / 'm.ckpt', model='huge') == 2


class TestParser:

    def test_config_file_and_overrides(self, tmp_path):
        config = tmp_path / 'synth.conf'
        config.write_text(f'output={tmp_path / "data"}\nsize=16\nframes=2\nlightings=1\n')
        assert main(['synth', '--config', str(config), '--set', 'densities=0.15']) == 0
        assert len(list((tmp_path / 'data' / 'foggy').glob('light_*/density_*'))) == 1

    def test_unknown_key_exits_2(self, tmp_path):
        assert run('synth', output=tmp_path / 'x', colour='red') == 2

    def test_bad_log_level_exits_2(self, tmp_path):
        assert run('synth', output=tmp_path / 'x', log_level='LOUD') == 2

    def test_subcommand_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_help_lists_keys(self):
        parser = build_parser()
        subparsers = next(a for a in parser._actions if a.dest == 'command')
        assert 'guided_radius' in subparsers.choices['defog'].epilog
