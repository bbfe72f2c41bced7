"""
Command implementations behind the fogbench CLI.

Every command takes a RunConfig, logs numbered steps, writes only under its
configured output and returns an exit code. Library errors propagate to the
caller, which maps them to exit codes.
"""

import json
import logging
from pathlib import Path

import numpy as np

from services.bench.procedural import SceneSpec, clear_scene
from services.dataset.frames import DENSITY_ANCHORS, LIGHTING_CONDITIONS, AcquisitionTag, FrameSequence, density_label
from services.dataset.loader import (
    clear_dir,
    depth_name,
    discover_dataset,
    foggy_dir,
    load_raw_slices,
    load_sequence,
    read_depth,
    stored_frame,
    write_depth,
    write_manifest,
    write_raw_slices,
    write_sequence,
)
from services.dataset.recompose import recompose, scatter
from services.dataset.samples import build_training_set
from services.dcp.dehazer import DcpParams, dcp_defog_video
from services.fog.panel import (
    CALIBRATION_TOLERANCE,
    PanelROI,
    Rect,
    beta_for_contrast,
    panel_airlight,
    panel_contrast,
    solve_beta,
)
from services.fog.scattering import FogParams, apply_fog
from services.metrics.report import evaluate
from services.tcvd.checkpoint import load_checkpoint, save_checkpoint
from services.tcvd.config import TcvdConfig
from services.tcvd.inference import infer_video
from services.tcvd.model import TcvdModel
from services.tcvd.trainer import TrainSettings, train
from utils.errors import ConfigError, ContractError, DataLoadError


logger = logging.getLogger(__name__)

METHODS = ('dcp', 'tcvd', 'identity')
SIDECAR_NAME = 'defog.json'
# sample depth of frames written by synth and recompose
DATASET_BIT_DEPTH = 16


def _write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def _check_output(config, *input_keys):
    output = Path(config['output'])
    for key in input_keys:
        source = config.get(key)
        if source is not None and Path(source).resolve() == output.resolve():
            raise ConfigError(f"output {output} must differ from {key} {source}")
    return output


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _parse_airlight(text):
    if text.strip().lower() == 'panel':
        return None
    try:
        values = tuple(float(v) for v in text.split(','))
    except ValueError:
        raise ConfigError(f"airlight must be 'panel' or r,g,b, got {text!r}") from None
    if len(values) != 3:
        raise ConfigError(f"airlight needs three channels, got {text!r}")
    return values


def _synth_sources(config):
    """Clear sequences, depth maps, panel ROI and panel depth for synth."""
    if config['input'] is None:
        lightings = config['lightings']
        if not 1 <= lightings <= LIGHTING_CONDITIONS:
            raise ConfigError(f"lightings must be in 1..{LIGHTING_CONDITIONS}, got {lightings}")
        spec = SceneSpec(size=config['size'], frames=config['frames'], seed=config.seed)
        clear, depth_maps = clear_scene(spec, range(lightings))
        return clear, depth_maps, spec.panel_roi(), spec.panel_depth, 'procedural'

    if not config['panel_black'] or not config['panel_white']:
        raise ConfigError("panel_black and panel_white are required when synthesizing from input")
    try:
        roi = PanelROI(Rect.parse(config['panel_black']), Rect.parse(config['panel_white']))
    except (ContractError, ValueError) as e:
        raise ConfigError(f"bad panel region: {e}") from None
    index = discover_dataset(config['input'])
    if not index.clear:
        raise DataLoadError(f"no clear sequences under {config['input']}")
    depth_maps = index.depth_maps
    if not depth_maps:
        raise DataLoadError(f"no depth maps under {config['input']}/depth")
    first = depth_maps[min(depth_maps)]
    panel = np.concatenate([
        first.depth[roi.black_region.slices()].ravel(),
        first.depth[roi.white_region.slices()].ravel(),
    ])
    panel_depth = float(np.median(panel))
    if np.ptp(panel) > 0:
        logger.warning("Panel depth is not constant; contrast targets are met by numerical calibration")
        panel_depth = None
    return index.clear, depth_maps, roi, panel_depth, 'input'


def cmd_synth(config):
    """
    Write a foggy/clear dataset tree calibrated to the panel-contrast anchors.

    Returns:
        int: exit code
    """
    output = _check_output(config, 'input')
    densities = config['densities']
    for density in densities:
        if not any(abs(density - anchor) < 1e-12 for anchor in DENSITY_ANCHORS):
            raise ConfigError(f"density {density} is not one of {list(DENSITY_ANCHORS)}")
    airlight_setting = _parse_airlight(config['airlight'])

    logger.info("Step 1: Preparing clear sequences and depth maps")
    clear, depth_maps, roi, panel_depth, generator = _synth_sources(config)

    logger.info("Step 2: Calibrating fog and rendering foggy sequences")
    panel_regions = (roi.black_region, roi.white_region)
    foggy = {}
    calibration = []
    for lighting in sorted(clear):
        seq = clear[lighting]
        reference = seq.frames[0]
        reference_depth = seq.depth_for(seq.tags[0])
        if reference_depth is None:
            raise DataLoadError(f"no depth map for position {seq.tags[0].position}")
        clear_contrast = panel_contrast(reference, roi)
        for density in densities:
            if airlight_setting is None and panel_depth is not None:
                airlight = panel_airlight(reference, roi)
                beta = beta_for_contrast(panel_depth, clear_contrast, density)
            else:
                airlight = airlight_setting or panel_airlight(reference, roi)
                beta = solve_beta(reference, reference_depth, roi, airlight, density)
            params = FogParams(beta, airlight)

            items = []
            for frame, tag in seq.items:
                depth = seq.depth_for(tag)
                if depth is None:
                    raise DataLoadError(f"no depth map for position {tag.position}")
                items.append((apply_fog(frame, depth, params), AcquisitionTag(tag.position, lighting, density)))
            foggy[(lighting, density)] = FrameSequence(items, dict(seq.depth_maps))
            measured = panel_contrast(stored_frame(items[0][0], DATASET_BIT_DEPTH, panel_regions), roi)
            if abs(measured - density) > CALIBRATION_TOLERANCE:
                logger.warning(
                    f"light_{lighting} density_{density_label(density)}: stored panel contrast {measured:.9f} "
                    f"misses {density} by more than {CALIBRATION_TOLERANCE:g}"
                )
            calibration.append({
                'lighting': lighting,
                'density': density_label(density),
                'beta': beta,
                'airlight': list(airlight),
                'clear_contrast': clear_contrast,
                'contrast': measured,
            })
            logger.debug(f"light_{lighting} density_{density_label(density)}: beta={beta:.6g} contrast={measured:.9f}")

    logger.info("Step 3: Writing dataset tree")
    files = {}
    for lighting, seq in sorted(clear.items()):
        files.update(write_sequence(seq, clear_dir(output, lighting), output, DATASET_BIT_DEPTH, panel_regions))
    for (lighting, density), seq in sorted(foggy.items()):
        files.update(write_sequence(seq, foggy_dir(output, lighting, density), output, DATASET_BIT_DEPTH, panel_regions))
    for position, depth in sorted(depth_maps.items()):
        write_depth(output / 'depth' / depth_name(position), depth)
    if config['raw']:
        videos = {(lighting, None): seq for lighting, seq in clear.items()}
        videos.update(foggy)
        write_raw_slices(scatter(videos), output / 'raw', DATASET_BIT_DEPTH, panel_regions)

    write_manifest(output, {
        'generator': generator,
        'fps': config['fps'],
        'config': config.as_dict(),
        'panel': {'black': str(roi.black_region), 'white': str(roi.white_region), 'depth': panel_depth},
        'calibration': calibration,
        'files': files,
    })
    logger.info(f"Synthesized {len(foggy)} foggy and {len(clear)} clear sequence(s) under {output}")
    return 0


# ---------------------------------------------------------------------------
# recompose
# ---------------------------------------------------------------------------

def cmd_recompose(config):
    """Regroup raw stop-motion slices into one video per (lighting, density)."""
    config.require_existing('input', 'depth')
    output = _check_output(config, 'input')

    logger.info("Step 1: Loading raw slices")
    slices = load_raw_slices(config['input'])

    depth_maps = {}
    if config['depth'] is not None:
        for position in sorted({tag.position for _, tag in slices}):
            path = Path(config['depth']) / depth_name(position)
            if path.exists():
                depth_maps[position] = read_depth(path)

    logger.info("Step 2: Recomposing videos")
    videos = recompose(slices, depth_maps)

    logger.info("Step 3: Writing dataset tree")
    files = {}
    foggy_count = 0
    for (lighting, density), seq in sorted(videos.items(), key=lambda item: (item[0][0], item[0][1] or 0.0)):
        if density is None:
            directory = clear_dir(output, lighting)
        else:
            directory = foggy_dir(output, lighting, density)
            foggy_count += 1
        files.update(write_sequence(seq, directory, output, DATASET_BIT_DEPTH))
    for position, depth in sorted(depth_maps.items()):
        write_depth(output / 'depth' / depth_name(position), depth)
    write_manifest(output, {'config': config.as_dict(), 'files': files})

    logger.info(f"Recomposed {foggy_count} foggy and {len(videos) - foggy_count} clear video(s) under {output}")
    return 0


# ---------------------------------------------------------------------------
# defog
# ---------------------------------------------------------------------------

def _restorer(config):
    """Return (restore function, parameter echo) for the configured method."""
    method = config['method']
    if method not in METHODS:
        raise ConfigError(f"unknown method '{method}'; choose one of {', '.join(METHODS)}")
    if method == 'dcp':
        params = DcpParams(
            omega=config['omega'],
            patch=config['patch'],
            t0=config['t0'],
            top_fraction=config['top_fraction'],
            guided_radius=config['guided_radius'],
            guided_eps=config['guided_eps'],
        )
        return (lambda seq: dcp_defog_video(seq, params)), params.as_dict()
    if method == 'tcvd':
        if config['checkpoint'] is None:
            raise ConfigError("method tcvd needs a checkpoint")
        config.require_existing('checkpoint')
        model, header = load_checkpoint(config['checkpoint'])
        return (lambda seq: infer_video(model, seq)), {
            'checkpoint': str(config['checkpoint']),
            'model': model.config.as_dict(),
            'parameters': model.parameter_count(),
        }
    return (lambda seq: seq.with_frames(seq.frames)), {}


def cmd_defog(config):
    """Restore every foggy sequence with dcp, tcvd or identity."""
    config.require_existing('input')
    output = _check_output(config, 'input')
    restore, params = _restorer(config)
    source = Path(config['input'])

    logger.info("Step 1: Loading foggy frames")
    if (source / 'foggy').is_dir():
        index = discover_dataset(source)
        if index.errors:
            raise DataLoadError(f"{len(index.errors)} sequence(s) under {source} failed to load", failures=index.errors)
        jobs = [(seq, foggy_dir(output, lighting, density)) for (lighting, density), seq in sorted(
            index.foggy.items(), key=lambda item: (item[0][0], item[0][1]))]
        root = output
    else:
        jobs = [(load_sequence(source), output)]
        root = None
    if not jobs:
        raise DataLoadError(f"no foggy sequences under {source}")

    logger.info(f"Step 2: Restoring {len(jobs)} sequence(s) with {config['method']}")
    files = {}
    frames = 0
    for seq, directory in jobs:
        restored = restore(seq)
        files.update(write_sequence(restored, directory, root))
        frames += len(restored)
        logger.debug(f"Restored {len(restored)} frame(s) into {directory}")

    logger.info("Step 3: Writing sidecar")
    if root is not None:
        write_manifest(output, {'config': config.as_dict(), 'files': files})
    _write_json(output / SIDECAR_NAME, {
        'method': config['method'],
        'params': params,
        'config': config.as_dict(),
        'sequences': len(jobs),
        'frames': frames,
    })
    logger.info(f"Restored {frames} frame(s) with {config['method']} into {output}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _model_config(config):
    name = config['model']
    weights = dict(loss_a=config['loss_a'], loss_b=config['loss_b'])
    if name == 'desk':
        return TcvdConfig.desk(**weights)
    if name == 'full':
        return TcvdConfig.full(**weights)
    raise ConfigError(f"unknown model '{name}'; choose desk or full")


def cmd_train(config):
    """Train TCVD on one or more dataset roots; write checkpoint and loss CSV."""
    config.require_existing('roots')
    model_config = _model_config(config)
    checkpoint = Path(config['checkpoint'])
    loss_log = config['loss_log'] or checkpoint.with_name(checkpoint.stem + '.loss.csv')

    logger.info("Step 1: Collecting training samples")
    per_root = build_training_set(config['roots'], model_config.input_size)

    logger.info("Step 2: Training")
    model = TcvdModel(model_config, seed=config.seed)
    settings = TrainSettings(
        steps=config['steps'],
        lr=config['lr'],
        batch_size=config['batch_size'],
        augment=config['augment'],
        seed=config.seed,
    )
    log = train(model, per_root, settings)

    logger.info("Step 3: Writing checkpoint and loss log")
    save_checkpoint(model, checkpoint, extra={
        'config': config.as_dict(),
        'steps': settings.steps,
        'root_counts': log.root_counts,
        'final_loss': log.final_loss,
    })
    log.write_csv(loss_log)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _parse_restored(text):
    pairs = {}
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        if '=' not in item:
            raise ConfigError(f"restored entries must be name=path, got {item!r}")
        name, path = (part.strip() for part in item.split('=', 1))
        if name in pairs:
            raise ConfigError(f"method '{name}' listed twice")
        if not Path(path).is_dir():
            raise ConfigError(f"restored: path does not exist: {path}")
        pairs[name] = Path(path)
    if not pairs:
        raise ConfigError("restored lists no methods")
    return pairs


def cmd_eval(config):
    """
    Score restored trees against ground truth and write report.json and report.csv.

    Returns:
        int: 0, or 3 when any sequence could not be scored
    """
    restored = _parse_restored(config['restored'])
    config.require_existing('gt')
    output = Path(config['output'])

    logger.info("Step 1: Loading restored and ground-truth sequences")
    methods = {}
    load_errors = []
    for name, root in restored.items():
        index = discover_dataset(root)
        methods[name] = index.foggy
        load_errors.extend((f'{name}: {item}', reason) for item, reason in index.errors)
    gt_index = discover_dataset(config['gt'])
    load_errors.extend((f'gt: {item}', reason) for item, reason in gt_index.errors)

    logger.info("Step 2: Computing metrics")
    report = evaluate(methods, gt_index.clear, eval_size=config['eval_size'], config=config.as_dict())
    report.errors = load_errors + report.errors

    logger.info("Step 3: Writing reports")
    report.write_json(output / 'report.json')
    report.write_csv(output / 'report.csv')

    print("\n" + "=" * 80)
    print("QUALITY (pooled over lightings):")
    print("=" * 80)
    for row in report.rows:
        if row.lighting == 'all':
            print(f"{row.method:<12} density {row.density:<6} SSIM {row.ssim:.4f}  PSNR {row.psnr:.2f} dB  ({row.frames} frames)")
    print("=" * 80 + "\n")

    if report.errors:
        for item, reason in report.errors:
            logger.error(f"Not scored: {item}: {reason}")
        return DataLoadError.exit_code
    return 0
