"""
Tests for frames, dataset-tree I/O, raw slices, recomposition, transforms and training samples.
"""

import json

import numpy as np
import pytest

from services.dataset.frames import (
    AcquisitionTag,
    DepthMap,
    Frame,
    FrameSequence,
    density_label,
    parse_density,
)
from services.dataset.loader import (
    clear_dir,
    discover_dataset,
    foggy_dir,
    load_raw_slices,
    load_sequence,
    parse_raw_name,
    parse_tag_dirs,
    quantize,
    raw_name,
    read_depth,
    read_frame,
    stored_frame,
    write_depth,
    write_frame,
    write_manifest,
    write_raw_slices,
    write_sequence,
)
from services.dataset.recompose import recompose, scatter, triplets
from services.dataset.samples import build_training_set, samples_from_sequences
from services.dataset.transforms import (
    DihedralTransform,
    augment,
    augment_frames,
    resize,
    resize_array,
    sample_transform,
)
from services.fog.panel import Rect
from utils.errors import AmbiguityError, ContractError, DataLoadError, ShapeError, TagParseError


def quantized(rng, size=16):
    """A frame that survives 8-bit PNG storage exactly."""
    return Frame(rng.integers(0, 256, size=(size, size, 3)) / 255.0)


def write_dataset(root, rng, lightings=(0, 1), densities=(0.05, 0.15), length=4, size=16):
    clear = {}
    for lighting in lightings:
        items = [(quantized(rng, size), AcquisitionTag(p, lighting)) for p in range(length)]
        clear[lighting] = FrameSequence(items)
        write_sequence(clear[lighting], clear_dir(root, lighting))
        for density in densities:
            foggy_items = [(quantized(rng, size), AcquisitionTag(p, lighting, density)) for p in range(length)]
            write_sequence(FrameSequence(foggy_items), foggy_dir(root, lighting, density))
    for position in range(length):
        write_depth(root / 'depth' / f'pos_{position:04d}.png', DepthMap(np.full((size, size), 300.0 + position)))
    return clear


# =============================================================================
# Core types
# =============================================================================

class TestFrameTypes:
    """Validation of Frame, DepthMap, AcquisitionTag and FrameSequence."""

    def test_frame_rejects_wrong_layout(self):
        with pytest.raises(ShapeError):
            Frame(np.zeros((16, 16)))

    def test_frame_rejects_tiny_images(self):
        with pytest.raises(ShapeError):
            Frame(np.zeros((4, 16, 3)))

    def test_frame_rejects_out_of_range_values(self):
        with pytest.raises(ContractError):
            Frame(np.full((8, 8, 3), 1.5))

    def test_frame_pixels_are_read_only(self, frame):
        with pytest.raises(ValueError):
            frame.pixels[0, 0, 0] = 0.5

    def test_clipped_frame(self):
        frame = Frame.clipped(np.full((8, 8, 3), 1.0 + 1e-12))
        assert frame.pixels.max() == 1.0

    def test_depth_mask_defaults_to_positive_depth(self):
        depth = np.full((8, 8), 100.0)
        depth[0, 0] = 0.0
        depth_map = DepthMap(depth)
        assert not depth_map.valid_mask[0, 0]
        assert depth_map.valid_mask.sum() == 63

    def test_depth_must_be_positive_where_valid(self):
        with pytest.raises(ContractError):
            DepthMap(np.zeros((8, 8)), valid_mask=np.ones((8, 8), dtype=bool))

    def test_density_labels(self):
        assert density_label(None) == 'none'
        assert density_label(0.015) == '0.015'
        assert parse_density('0.05') == 0.05
        assert parse_density('none') is None
        with pytest.raises(TagParseError):
            density_label(0.2)
        with pytest.raises(TagParseError):
            parse_density('thick')

    def test_tag_validation(self):
        assert AcquisitionTag(3, 5, 0.15).condition == (5, 0.15)
        assert AcquisitionTag(0, 0).is_clear
        with pytest.raises(TagParseError):
            AcquisitionTag(0, 6)
        with pytest.raises(TagParseError):
            AcquisitionTag(-1, 0)

    def test_sequence_requires_common_size(self, rng):
        items = [
            (Frame(rng.uniform(size=(8, 8, 3))), AcquisitionTag(0, 0)),
            (Frame(rng.uniform(size=(9, 8, 3))), AcquisitionTag(1, 0)),
        ]
        with pytest.raises(ShapeError):
            FrameSequence(items)

    def test_with_frames_keeps_tags(self, make_sequence):
        seq = make_sequence(length=3)
        replaced = seq.with_frames(list(reversed(seq.frames)))
        assert replaced.tags == seq.tags
        assert replaced.frames[0] is seq.frames[2]
        with pytest.raises(ContractError):
            seq.with_frames(seq.frames[:2])


# =============================================================================
# Files and trees
# =============================================================================

class TestFileIO:
    """PNG, depth and sequence loading."""

    def test_frame_png_quantizes_to_8_bits(self, tmp_path, frame):
        path = tmp_path / 'frame.png'
        write_frame(path, frame)
        loaded = read_frame(path)
        np.testing.assert_allclose(loaded.pixels, frame.pixels, atol=0.5 / 255 + 1e-12)

    def test_frame_png_16_bit_matches_stored_frame(self, tmp_path, frame):
        path = tmp_path / 'frame16.png'
        write_frame(path, frame, bit_depth=16)
        loaded = read_frame(path)
        np.testing.assert_array_equal(loaded.pixels, stored_frame(frame, 16).pixels)
        np.testing.assert_allclose(loaded.pixels, frame.pixels, atol=0.5 / 65535 + 1e-12)

    @pytest.mark.parametrize("bit_depth", [8, 16])
    def test_quantize_keeps_region_means(self, rng, bit_depth):
        pixels = rng.uniform(size=(12, 12, 3))
        region = Rect(2, 3, 7, 9)
        levels = 255 if bit_depth == 8 else 65535
        samples = quantize(pixels, bit_depth, regions=[region])
        inside = samples[region.slices()] / levels
        drift = np.abs(inside.mean(axis=(0, 1)) - pixels[region.slices()].mean(axis=(0, 1)))
        assert np.all(drift <= 0.5 / (levels * 30) + 1e-15)
        assert np.all(np.abs(samples[region.slices()] / levels - pixels[region.slices()]) < 1.0 / levels)
        outside = np.ones((12, 12), dtype=bool)
        outside[region.slices()] = False
        np.testing.assert_array_equal(samples[outside], np.round(pixels[outside] * levels))

    def test_quantize_is_deterministic_and_in_range(self):
        pixels = np.full((8, 8, 3), 0.3 / 255)
        pixels[0, 0] = 1.0
        region = Rect(0, 0, 8, 8)
        first = quantize(pixels, 8, regions=[region])
        np.testing.assert_array_equal(first, quantize(pixels, 8, regions=[region]))
        assert first.dtype == np.uint8
        assert first.max() == 255
        assert int(first[:, :, 0].sum()) == round(pixels[:, :, 0].sum() * 255)

    def test_unsupported_bit_depth(self, frame):
        with pytest.raises(ContractError):
            quantize(frame.pixels, 12)

    def test_unreadable_frame(self, tmp_path):
        path = tmp_path / 'broken.png'
        path.write_bytes(b'not a png')
        with pytest.raises(DataLoadError) as info:
            read_frame(path)
        assert info.value.failures == [(str(path), 'unreadable')]

    def test_depth_png_keeps_centimeters(self, tmp_path):
        depth = np.full((8, 8), 1234.0)
        depth[2, 3] = 0.0
        path = tmp_path / 'pos_0000.png'
        write_depth(path, DepthMap(depth))
        loaded = read_depth(path)
        np.testing.assert_array_equal(loaded.depth, depth)
        assert not loaded.valid_mask[2, 3]

    def test_parse_tag_dirs(self, tmp_path):
        assert parse_tag_dirs(foggy_dir(tmp_path, 2, 0.05)) == (2, 0.05)
        assert parse_tag_dirs(clear_dir(tmp_path, 4)) == (4, None)
        with pytest.raises(TagParseError):
            parse_tag_dirs(tmp_path / 'foggy' / 'light_1')
        with pytest.raises(TagParseError):
            parse_tag_dirs(tmp_path / 'foggy' / 'light_x' / 'density_0.05')

    def test_load_sequence_orders_and_attaches_depth(self, tmp_path, rng):
        write_dataset(tmp_path, rng, lightings=(1,), densities=(0.05,))
        seq = load_sequence(foggy_dir(tmp_path, 1, 0.05))
        assert [tag.position for tag in seq.tags] == [0, 1, 2, 3]
        assert all(tag.condition == (1, 0.05) for tag in seq.tags)
        assert sorted(seq.depth_maps) == [0, 1, 2, 3]
        assert seq.depth_for(seq.tags[2]).depth[0, 0] == 302.0

    def test_load_sequence_lists_every_failure(self, tmp_path, rng):
        directory = clear_dir(tmp_path, 0)
        write_sequence(FrameSequence([(quantized(rng), AcquisitionTag(p, 0)) for p in range(5)]), directory)
        (directory / 'frame_0001.png').write_bytes(b'garbage')
        (directory / 'frame_0003.png').unlink()
        (directory / 'notes.png').write_bytes(b'')
        with pytest.raises(DataLoadError) as info:
            load_sequence(directory)
        reasons = {path.split('/')[-1]: reason for path, reason in info.value.failures}
        assert reasons == {
            'frame_0001.png': 'unreadable',
            'frame_0003.png': 'missing frame',
            'notes.png': 'unexpected file name',
        }

    def test_manifest_overrides_positions(self, tmp_path, rng):
        write_dataset(tmp_path, rng, lightings=(0,), densities=(0.15,), length=3)
        write_manifest(tmp_path, {'files': {
            'foggy/light_0/density_0.15/frame_0000.png': {'position': 2, 'lighting': 0, 'density': '0.15'},
            'foggy/light_0/density_0.15/frame_0002.png': {'position': 0, 'lighting': 0, 'density': '0.15'},
        }})
        seq = load_sequence(foggy_dir(tmp_path, 0, 0.15))
        assert [tag.position for tag in seq.tags] == [0, 1, 2]
        original = read_frame(foggy_dir(tmp_path, 0, 0.15) / 'frame_0002.png')
        np.testing.assert_array_equal(seq.frames[0].pixels, original.pixels)

    def test_discover_dataset(self, tmp_path, rng):
        write_dataset(tmp_path, rng)
        index = discover_dataset(tmp_path)
        assert sorted(index.foggy) == [(0, 0.05), (0, 0.15), (1, 0.05), (1, 0.15)]
        assert sorted(index.clear) == [0, 1]
        assert index.errors == []
        assert sorted(index.depth_maps) == [0, 1, 2, 3]

    def test_discover_dataset_reports_broken_sequences(self, tmp_path, rng):
        write_dataset(tmp_path, rng, lightings=(0,), densities=(0.05,))
        (foggy_dir(tmp_path, 0, 0.05) / 'frame_0000.png').write_bytes(b'')
        index = discover_dataset(tmp_path)
        assert (0, 0.05) not in index.foggy
        assert len(index.errors) == 1

    def test_write_sequence_manifest_entries(self, tmp_path, make_sequence):
        seq = make_sequence(length=2, lighting=3, density=0.015)
        entries = write_sequence(seq, foggy_dir(tmp_path, 3, 0.015), tmp_path)
        assert entries['foggy/light_3/density_0.015/frame_0001.png'] == {
            'position': 1, 'lighting': 3, 'density': '0.015',
        }
        json.dumps(entries)


# =============================================================================
# Raw slices and recomposition
# =============================================================================

class TestRecompose:
    """Stop-motion slices regrouped into constant-condition videos."""

    def slices(self, rng, positions=(2, 0, 1)):
        out = []
        for position in positions:
            for lighting in (0, 3):
                for density in (None, 0.05):
                    out.append((quantized(rng, 8), AcquisitionTag(position, lighting, density)))
        return out

    def test_groups_by_condition_in_position_order(self, rng):
        videos = recompose(self.slices(rng))
        assert sorted(videos, key=lambda c: (c[0], c[1] or 0.0)) == [(0, None), (0, 0.05), (3, None), (3, 0.05)]
        for (lighting, density), seq in videos.items():
            assert [tag.position for tag in seq.tags] == [0, 1, 2]
            assert all(tag.condition == (lighting, density) for tag in seq.tags)

    def test_every_slice_lands_in_exactly_one_video(self, rng):
        slices = self.slices(rng)
        videos = recompose(slices)
        assert sum(len(seq) for seq in videos.values()) == len(slices)
        assert {tag for _, tag in scatter(videos)} == {tag for _, tag in slices}

    def test_scatter_then_recompose_restores_videos(self, rng):
        videos = recompose(self.slices(rng))
        again = recompose(scatter(videos))
        assert set(again) == set(videos)
        for condition, seq in videos.items():
            assert again[condition].tags == seq.tags
            for a, b in zip(again[condition].frames, seq.frames):
                np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_duplicate_slice_is_ambiguous(self, rng):
        slices = self.slices(rng)
        slices.append((quantized(rng, 8), AcquisitionTag(1, 3, 0.05)))
        with pytest.raises(AmbiguityError):
            recompose(slices)

    def test_missing_positions_still_build_a_video(self, rng):
        slices = self.slices(rng)
        slices = [(f, t) for f, t in slices if not (t.condition == (3, 0.05) and t.position == 1)]
        videos = recompose(slices)
        assert [tag.position for tag in videos[(3, 0.05)].tags] == [0, 2]

    def test_depth_maps_follow_positions(self, rng):
        depth = {p: DepthMap(np.full((8, 8), 10.0 * (p + 1))) for p in range(3)}
        videos = recompose(self.slices(rng), depth)
        assert videos[(0, None)].depth_for(AcquisitionTag(2, 0)).depth[0, 0] == 30.0

    def test_raw_names(self):
        tag = AcquisitionTag(12, 4, 0.015)
        assert raw_name(tag) == 'pos_0012_light_4_density_0.015.png'
        assert parse_raw_name(raw_name(tag)) == tag
        assert parse_raw_name('pos_0003_light_0_density_none.png') == AcquisitionTag(3, 0)
        with pytest.raises(TagParseError):
            parse_raw_name('pos_3_light_0.png')

    def test_raw_directory_round_trip_and_failures(self, tmp_path, rng):
        slices = self.slices(rng, positions=(0, 1))
        write_raw_slices(slices, tmp_path / 'raw')
        loaded = load_raw_slices(tmp_path / 'raw')
        assert {tag for _, tag in loaded} == {tag for _, tag in slices}

        (tmp_path / 'raw' / 'stray.png').write_bytes(b'')
        with pytest.raises(DataLoadError) as info:
            load_raw_slices(tmp_path / 'raw')
        assert len(info.value.failures) == 1

    def test_triplets_replicate_edges(self, make_sequence):
        seq = make_sequence(length=3)
        frames = seq.frames
        result = list(triplets(seq))
        assert len(result) == 3
        assert result[0] == (frames[0], frames[0], frames[1])
        assert result[1] == (frames[0], frames[1], frames[2])
        assert result[2] == (frames[1], frames[2], frames[2])
        assert list(triplets([])) == []

    def test_single_frame_triplet(self, make_sequence):
        seq = make_sequence(length=1)
        (only,) = triplets(seq)
        assert only == (seq.frames[0],) * 3


# =============================================================================
# Resizing and augmentation
# =============================================================================

class TestTransforms:
    """Corner-aligned resizing and dihedral augmentation."""

    def test_resize_keeps_corners(self, rng):
        pixels = rng.uniform(size=(10, 14, 3))
        out = resize_array(pixels, 7, 21)
        for (r, c), (R, C) in [((0, 0), (0, 0)), ((0, -1), (0, -1)), ((-1, 0), (-1, 0)), ((-1, -1), (-1, -1))]:
            np.testing.assert_allclose(out[r, c], pixels[R, C])

    def test_resize_is_identity_at_target_size(self, frame):
        assert resize(frame, 16) is frame

    def test_resize_constant_frame(self):
        frame = Frame(np.full((9, 13, 3), 0.25))
        np.testing.assert_allclose(resize(frame, 32).pixels, 0.25)

    def test_dihedral_inverse(self, rng):
        pixels = rng.uniform(size=(6, 6, 3))
        for flip in (False, True):
            for k in range(4):
                transform = DihedralTransform(flip, k)
                np.testing.assert_array_equal(transform.invert(transform.apply(pixels)), pixels)

    def test_sample_transform_is_seeded(self):
        assert sample_transform(123) == sample_transform(123)
        outcomes = {sample_transform(seed).outcome for seed in range(400)}
        assert len(outcomes) == 8

    def test_pair_gets_the_same_transform(self, frame):
        foggy, clear = augment((frame, frame), 7)
        np.testing.assert_array_equal(foggy.pixels, clear.pixels)
        transform = sample_transform(7)
        np.testing.assert_array_equal(foggy.pixels, transform.apply(frame.pixels))

    def test_rotation_needs_square_frames(self, rng):
        frames = [Frame(rng.uniform(size=(8, 12, 3)))] * 2
        seed = next(s for s in range(100) if sample_transform(s).k != 0)
        with pytest.raises(ContractError):
            augment_frames(frames, seed)


# =============================================================================
# Training samples
# =============================================================================

class TestTrainingSamples:

    def test_one_sample_per_foggy_frame(self, make_sequence):
        foggy = make_sequence(length=4, density=0.05)
        clear = make_sequence(length=4)
        samples = samples_from_sequences(foggy, clear, input_size=16)
        assert len(samples) == 4
        assert samples[0].foggy[0] is samples[0].foggy[1]
        assert samples[2].clear is clear.frames[2]

    def test_frames_are_resized(self, make_sequence):
        samples = samples_from_sequences(make_sequence(3, density=0.15), make_sequence(3), input_size=32)
        assert samples[1].foggy[1].size == (32, 32)
        assert samples[1].clear.size == (32, 32)

    def test_build_training_set_per_root(self, tmp_path, rng):
        write_dataset(tmp_path / 'a', rng, lightings=(0,), densities=(0.05,), length=3)
        write_dataset(tmp_path / 'b', rng, lightings=(0, 1), densities=(0.05, 0.15), length=2)
        per_root = build_training_set([tmp_path / 'a', tmp_path / 'b'], 16)
        assert [len(samples) for samples in per_root] == [3, 8]
        assert {s.root_index for s in per_root[1]} == {1}

    def test_empty_root_is_an_error(self, tmp_path):
        (tmp_path / 'empty').mkdir()
        with pytest.raises(DataLoadError):
            build_training_set([tmp_path / 'empty'], 16)
