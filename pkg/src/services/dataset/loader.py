"""
PNG I/O and dataset-tree loading.

Layout:
    dataset_root/foggy/light_<L>/density_<D>/frame_<NNNN>.png
    dataset_root/clear/light_<L>/frame_<NNNN>.png
    dataset_root/depth/pos_<NNNN>.png          (16-bit, centimeters, 0 = invalid)
    dataset_root/manifest.json                 (optional per-file tag overrides)

Raw stop-motion slices (before recomposition):
    raw_dir/pos_<NNNN>_light_<L>_density_<D|none>.png
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from services.dataset.frames import (
    AcquisitionTag,
    DepthMap,
    Frame,
    FrameSequence,
    MIN_SIDE,
    density_label,
    parse_density,
)
from utils.errors import ContractError, DataLoadError, FogbenchError, TagParseError


logger = logging.getLogger(__name__)

FRAME_PATTERN = re.compile(r'^frame_(\d{4})\.png$')
DEPTH_PATTERN = re.compile(r'^pos_(\d{4})\.png$')
LIGHT_PATTERN = re.compile(r'^light_(\d+)$')
DENSITY_PATTERN = re.compile(r'^density_(.+)$')
RAW_PATTERN = re.compile(r'^pos_(\d{4})_light_(\d+)_density_([^_]+)\.png$')
MANIFEST_NAME = 'manifest.json'
PNG_LEVELS = {8: (np.uint8, 255), 16: (np.uint16, 65535)}


def frame_name(index):
    return f'frame_{index:04d}.png'


def depth_name(position):
    return f'pos_{position:04d}.png'


def foggy_dir(root, lighting, density):
    return Path(root) / 'foggy' / f'light_{lighting}' / f'density_{density_label(density)}'


def clear_dir(root, lighting):
    return Path(root) / 'clear' / f'light_{lighting}'


# ---------------------------------------------------------------------------
# Single files
# ---------------------------------------------------------------------------

def read_frame(path):
    """
    Read an 8-bit (or 16-bit) RGB PNG into a Frame.

    Raises:
        DataLoadError: if the file cannot be decoded or is too small
    """
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise DataLoadError(f"cannot read image {path}", failures=[(str(path), 'unreadable')])
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    elif image.shape[2] == 4:
        image = image[:, :, :3]
    image = cv2.cvtColor(image, cv2.COLOR_BGR2RGB)
    scale = float(PNG_LEVELS[16 if image.dtype == np.uint16 else 8][1])
    pixels = image.astype(np.float64) / scale
    if pixels.shape[0] < MIN_SIDE or pixels.shape[1] < MIN_SIDE:
        raise DataLoadError(
            f"{path}: {pixels.shape[1]}x{pixels.shape[0]} is smaller than {MIN_SIDE}x{MIN_SIDE}",
            failures=[(str(path), 'too small')],
        )
    return Frame(pixels)


def quantize(pixels, bit_depth=8, regions=()):
    """
    Integer PNG samples for [0, 1] pixels.

    Pixels are rounded to the nearest level, except inside ``regions`` (Rects),
    where each channel is rounded with the largest-remainder rule so the
    region's integer sum equals its rounded float sum. A region mean then
    moves by at most half a level divided by the region's pixel count.
    """
    if bit_depth not in PNG_LEVELS:
        raise ContractError(f"PNG bit depth must be 8 or 16, got {bit_depth}")
    dtype, levels = PNG_LEVELS[bit_depth]
    scaled = np.asarray(pixels, dtype=np.float64) * levels
    out = np.round(scaled)
    for region in regions:
        window = region.slices()
        block = scaled[window].reshape(-1, scaled.shape[-1])
        floors = np.floor(block)
        remainders = block - floors
        for c in range(block.shape[1]):
            extra = int(round(remainders[:, c].sum()))
            floors[np.argsort(-remainders[:, c], kind='stable')[:extra], c] += 1.0
        out[window] = floors.reshape(out[window].shape)
    return np.clip(out, 0, levels).astype(dtype)


def stored_frame(frame, bit_depth=8, regions=()):
    """The Frame read_frame returns after write_frame with the same arguments."""
    return Frame(quantize(frame.pixels, bit_depth, regions) / PNG_LEVELS[bit_depth][1])


def write_frame(path, frame, bit_depth=8, regions=()):
    """Write a Frame as an 8- or 16-bit RGB PNG (see quantize for ``regions``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples = quantize(frame.pixels, bit_depth, regions)
    if not cv2.imwrite(str(path), cv2.cvtColor(samples, cv2.COLOR_RGB2BGR)):
        raise DataLoadError(f"cannot write image {path}", failures=[(str(path), 'unwritable')])


def read_depth(path):
    """Read a 16-bit grayscale depth PNG (value = centimeters, 0 = invalid)."""
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise DataLoadError(f"cannot read depth map {path}", failures=[(str(path), 'unreadable')])
    if image.ndim != 2:
        raise DataLoadError(f"{path}: depth map must be single channel", failures=[(str(path), 'not grayscale')])
    depth = image.astype(np.float64)
    return DepthMap(depth, valid_mask=depth > 0)


def write_depth(path, depth_map):
    """Write a DepthMap as 16-bit grayscale, rounding to whole centimeters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.where(depth_map.valid_mask, np.round(depth_map.depth), 0)
    values = np.clip(values, 0, 65535).astype(np.uint16)
    if not cv2.imwrite(str(path), values):
        raise DataLoadError(f"cannot write depth map {path}", failures=[(str(path), 'unwritable')])


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def read_manifest(root):
    """Load manifest.json from a dataset root; empty dict if absent."""
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        return {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataLoadError(f"invalid manifest {path}: {e}", failures=[(str(path), 'invalid json')]) from e


def write_manifest(root, manifest):
    path = Path(root) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
        f.write('\n')


def _tag_from_override(override, fallback):
    density = override.get('density', density_label(fallback.density))
    if isinstance(density, (int, float)):
        density = density_label(float(density))
    return AcquisitionTag(
        position=int(override.get('position', fallback.position)),
        lighting=int(override.get('lighting', fallback.lighting)),
        density=parse_density(density),
    )


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------

def parse_tag_dirs(directory):
    """
    Read (lighting, density) from a sequence directory's path components.

    Returns:
        tuple: (lighting, density) where density is None under clear/

    Raises:
        TagParseError: if the components do not follow the layout
    """
    parts = Path(directory).parts
    lighting = None
    density = None
    kind = None
    for part in parts:
        if part in ('foggy', 'clear'):
            kind = part
        match = LIGHT_PATTERN.match(part)
        if match:
            lighting = int(match.group(1))
        match = DENSITY_PATTERN.match(part)
        if match:
            density = parse_density(match.group(1))
    if lighting is None:
        raise TagParseError(f"{directory}: no light_<L> component in path")
    if kind == 'foggy' and density is None:
        raise TagParseError(f"{directory}: foggy sequence without density_<D> component")
    if kind == 'clear' and density is not None:
        raise TagParseError(f"{directory}: clear sequence must not carry a density")
    return lighting, density


def _find_root(directory):
    directory = Path(directory)
    for parent in [directory, *directory.parents]:
        if parent.name in ('foggy', 'clear'):
            return parent.parent
    return None


def load_sequence(directory, dataset_root=None, manifest=None):
    """
    Load every frame_<NNNN>.png under a sequence directory.

    Frames are sorted by filename index; tags come from the path components
    and may be overridden per file by the dataset manifest. Depth maps for the
    sequence's positions are attached when dataset_root/depth exists.

    Args:
        directory: sequence directory
        dataset_root: dataset root (inferred from the path when None)
        manifest: already-loaded manifest dict (read from the root when None)

    Returns:
        FrameSequence

    Raises:
        DataLoadError: listing every file that failed; loaded + failed == matched
        TagParseError: if the directory does not encode a valid tag
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataLoadError(f"sequence directory not found: {directory}", failures=[(str(directory), 'missing')])
    lighting, density = parse_tag_dirs(directory)
    root = Path(dataset_root) if dataset_root is not None else _find_root(directory)
    if manifest is None:
        manifest = read_manifest(root) if root is not None else {}
    overrides = manifest.get('files', {})

    failures = []
    indexed = []
    for path in sorted(directory.glob('*.png')):
        match = FRAME_PATTERN.match(path.name)
        if not match:
            failures.append((str(path), 'unexpected file name'))
            continue
        indexed.append((int(match.group(1)), path))
    indexed.sort()

    expected = 0
    for index, path in indexed:
        while expected < index:
            failures.append((str(directory / frame_name(expected)), 'missing frame'))
            expected += 1
        expected = index + 1

    items = []
    size = None
    for index, path in indexed:
        try:
            frame = read_frame(path)
        except DataLoadError as e:
            failures.extend(e.failures)
            continue
        if size is None:
            size = frame.size
        elif frame.size != size:
            failures.append((str(path), f'size {frame.size} differs from {size}'))
            continue
        tag = AcquisitionTag(position=index, lighting=lighting, density=density)
        if root is not None:
            relative = path.relative_to(root).as_posix()
            if relative in overrides:
                try:
                    tag = _tag_from_override(overrides[relative], tag)
                except FogbenchError as e:
                    failures.append((str(path), f'bad manifest tag: {e}'))
                    continue
        items.append((frame, tag))

    if failures:
        listing = '; '.join(f"{path} ({reason})" for path, reason in failures)
        raise DataLoadError(f"failed to load sequence {directory}: {listing}", failures=failures)

    items.sort(key=lambda item: item[1].position)
    depth_maps = {}
    if root is not None and (root / 'depth').is_dir():
        depth_maps = load_depth_maps(root, [tag.position for _, tag in items], size)
    logger.debug(f"Loaded {len(items)} frames from {directory}")
    return FrameSequence(items, depth_maps)


def load_depth_maps(root, positions, size=None):
    """Load depth/pos_<NNNN>.png for the given positions (absent files are skipped)."""
    depth_maps = {}
    failures = []
    for position in sorted(set(positions)):
        path = Path(root) / 'depth' / depth_name(position)
        if not path.exists():
            continue
        try:
            depth_map = read_depth(path)
        except DataLoadError as e:
            failures.extend(e.failures)
            continue
        if size is not None and depth_map.size != size:
            failures.append((str(path), f'depth size {depth_map.size} differs from frames {size}'))
            continue
        depth_maps[position] = depth_map
    if failures:
        listing = '; '.join(f"{path} ({reason})" for path, reason in failures)
        raise DataLoadError(f"failed to load depth maps: {listing}", failures=failures)
    return depth_maps


def write_sequence(seq, directory, root=None, bit_depth=8, regions=()):
    """
    Write a sequence as frame_0000.png, frame_0001.png, ... in order.

    Returns:
        dict: manifest 'files' entries (path relative to root -> tag) when root is given
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for index, (frame, tag) in enumerate(seq.items):
        path = directory / frame_name(index)
        write_frame(path, frame, bit_depth, regions)
        if root is not None:
            entries[path.relative_to(root).as_posix()] = {
                'position': tag.position,
                'lighting': tag.lighting,
                'density': density_label(tag.density),
            }
    return entries


@dataclass
class DatasetIndex:
    """Every sequence found under a dataset root."""

    root: Path
    foggy: dict = field(default_factory=dict)
    clear: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def depth_maps(self):
        maps = {}
        for seq in list(self.foggy.values()) + list(self.clear.values()):
            maps.update(seq.depth_maps)
        return maps


def discover_dataset(root):
    """
    Load every foggy and clear sequence under a dataset root.

    Sequences that fail to load are listed in DatasetIndex.errors rather
    than dropped silently.

    Args:
        root: dataset root

    Returns:
        DatasetIndex with foggy keyed by (lighting, density) and clear keyed by lighting
    """
    root = Path(root)
    if not root.is_dir():
        raise DataLoadError(f"dataset root not found: {root}", failures=[(str(root), 'missing')])
    manifest = read_manifest(root)
    index = DatasetIndex(root=root, manifest=manifest)

    for light_dir in sorted((root / 'foggy').glob('light_*')):
        for density_dir in sorted(light_dir.glob('density_*')):
            try:
                seq = load_sequence(density_dir, dataset_root=root, manifest=manifest)
                lighting, density = parse_tag_dirs(density_dir)
                index.foggy[(lighting, density)] = seq
            except (DataLoadError, TagParseError) as e:
                logger.error(f"Skipping foggy sequence {density_dir}: {e}")
                index.errors.append((str(density_dir), str(e)))

    for light_dir in sorted((root / 'clear').glob('light_*')):
        try:
            seq = load_sequence(light_dir, dataset_root=root, manifest=manifest)
            lighting, _ = parse_tag_dirs(light_dir)
            index.clear[lighting] = seq
        except (DataLoadError, TagParseError) as e:
            logger.error(f"Skipping clear sequence {light_dir}: {e}")
            index.errors.append((str(light_dir), str(e)))

    logger.info(
        f"Discovered {len(index.foggy)} foggy and {len(index.clear)} clear sequence(s) under {root}"
    )
    return index


# ---------------------------------------------------------------------------
# Raw stop-motion slices
# ---------------------------------------------------------------------------

def raw_name(tag):
    return f'pos_{tag.position:04d}_light_{tag.lighting}_density_{density_label(tag.density)}.png'


def parse_raw_name(name):
    """
    Tag encoded in a raw slice file name.

    Raises:
        TagParseError: if the name does not follow pos_<NNNN>_light_<L>_density_<D|none>.png
    """
    match = RAW_PATTERN.match(name)
    if not match:
        raise TagParseError(f"{name}: expected pos_<NNNN>_light_<L>_density_<D|none>.png")
    return AcquisitionTag(
        position=int(match.group(1)),
        lighting=int(match.group(2)),
        density=parse_density(match.group(3)),
    )


def load_raw_slices(directory):
    """
    Load every tagged slice in a raw directory.

    Returns:
        list: (Frame, AcquisitionTag) in file-name order

    Raises:
        DataLoadError: listing every file that failed to parse or decode
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataLoadError(f"raw directory not found: {directory}", failures=[(str(directory), 'missing')])
    slices = []
    failures = []
    for path in sorted(directory.glob('*.png')):
        try:
            tag = parse_raw_name(path.name)
            slices.append((read_frame(path), tag))
        except TagParseError as e:
            failures.append((str(path), str(e)))
        except DataLoadError as e:
            failures.extend(e.failures)
    if failures:
        listing = '; '.join(f"{path} ({reason})" for path, reason in failures)
        raise DataLoadError(f"failed to load raw slices from {directory}: {listing}", failures=failures)
    logger.info(f"Loaded {len(slices)} raw slice(s) from {directory}")
    return slices


def write_raw_slices(slices, directory, bit_depth=8, regions=()):
    """Write (Frame, AcquisitionTag) slices under their raw file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for frame, tag in slices:
        write_frame(directory / raw_name(tag), frame, bit_depth, regions)
    logger.debug(f"Wrote {len(slices)} raw slice(s) to {directory}")
