"""
Benchmark aggregation: per-(method, density, lighting) SSIM/PSNR rows and their serializations.
"""

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from services.dataset.frames import density_label, parse_density
from services.dataset.transforms import resize
from services.metrics.quality import channel_mean_error, flicker, mean_squared_error, psnr_from_mse, ssim
from utils.errors import ContractError


logger = logging.getLogger(__name__)

CSV_COLUMNS = ('method', 'density', 'lighting', 'ssim', 'psnr', 'frames')
POOLED = 'all'


@dataclass
class MetricsRow:
    """Mean quality of one method on one (density, lighting) cell."""

    method: str
    density: str
    lighting: Union[int, str]
    ssim: float
    psnr: float
    frames: int
    flicker: Optional[float] = None
    channel_error: Optional[Tuple[float, float, float]] = None

    @property
    def key(self):
        return self.method, self.density, self.lighting

    def sort_key(self):
        lighting = (1, 0) if self.lighting == POOLED else (0, self.lighting)
        return parse_density(self.density) or 0.0, self.method, lighting

    def as_dict(self):
        return {
            'method': self.method,
            'density': self.density,
            'lighting': self.lighting,
            'ssim': self.ssim,
            'psnr': _json_float(self.psnr),
            'frames': self.frames,
            'flicker': self.flicker,
            'channel_error': list(self.channel_error) if self.channel_error is not None else None,
        }


def _json_float(value):
    if value is None:
        return None
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def _csv_float(value):
    if math.isinf(value):
        return 'inf'
    return f'{value:.6f}'


@dataclass
class MetricsReport:
    """Sorted metrics rows plus everything needed to reproduce them."""

    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    fingerprint: str = ''
    errors: list = field(default_factory=list)

    def __post_init__(self):
        keys = [row.key for row in self.rows]
        if len(keys) != len(set(keys)):
            raise ContractError("metrics rows must have unique (method, density, lighting) keys")

    def row(self, method, density, lighting=POOLED):
        label = density if isinstance(density, str) else density_label(density)
        for row in self.rows:
            if row.key == (method, label, lighting):
                return row
        return None

    def as_dict(self):
        return {
            'rows': [row.as_dict() for row in self.rows],
            'config': self.config,
            'fingerprint': self.fingerprint,
            'errors': [{'item': item, 'reason': reason} for item, reason in self.errors],
        }

    def write_json(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.as_dict(), f, indent=2, sort_keys=True)
            f.write('\n')
        logger.info(f"Report saved to: {path}")

    def write_csv(self, path):
        """Table-shaped CSV: method,density,lighting,ssim,psnr,frames."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([
                    row.method,
                    row.density,
                    row.lighting,
                    _csv_float(row.ssim),
                    _csv_float(row.psnr),
                    row.frames,
                ])
        logger.info(f"CSV saved to: {path}")


def fingerprint(methods, gts):
    """SHA-256 over every sequence's condition key and pixel data, in sorted order."""
    digest = hashlib.sha256()
    for lighting in sorted(gts):
        digest.update(f'gt/light_{lighting}'.encode())
        digest.update(np.ascontiguousarray(gts[lighting].as_array()).tobytes())
    for name in sorted(methods):
        for lighting, density in sorted(methods[name], key=lambda key: (key[0], key[1] or 0.0)):
            digest.update(f'{name}/light_{lighting}/density_{density_label(density)}'.encode())
            digest.update(np.ascontiguousarray(methods[name][(lighting, density)].as_array()).tobytes())
    return digest.hexdigest()


def _pair_frames(restored, gt, eval_size):
    """Match restored frames to ground truth by position, resized for evaluation."""
    gt_by_position = {tag.position: frame for frame, tag in gt.items}
    if len(restored) != len(gt):
        raise ContractError(f"length {len(restored)} differs from ground truth length {len(gt)}")
    pairs = []
    for frame, tag in restored.items:
        target = gt_by_position.get(tag.position)
        if target is None:
            raise ContractError(f"no ground-truth frame for position {tag.position}")
        pairs.append((resize(frame, eval_size), resize(target, eval_size)))
    return pairs


def evaluate(methods, gts, eval_size=224, config=None):
    """
    Score restored videos against ground truth.

    Args:
        methods: dict method name -> dict (lighting, density) -> restored FrameSequence
        gts: dict lighting -> ground-truth FrameSequence
        eval_size: frames are resized to eval_size x eval_size before scoring
        config: configuration echoed into the report

    Returns:
        MetricsReport with one row per (method, density, lighting) and a pooled
        "all" row per (method, density). Sequences without a usable partner are
        listed in errors and produce no row. A row's PSNR comes from the mean
        squared error over its frames, so it is infinite only when every frame matches.
    """
    rows = []
    errors = []
    for name in sorted(methods):
        pooled = {}
        for (lighting, density), restored in sorted(
            methods[name].items(), key=lambda item: (item[0][0], item[0][1] or 0.0)
        ):
            label = density_label(density)
            item = f'{name}/light_{lighting}/density_{label}'
            gt = gts.get(lighting)
            if gt is None:
                logger.warning(f"{item}: no ground truth for lighting {lighting}")
                errors.append((item, f'no ground truth for lighting {lighting}'))
                continue
            try:
                pairs = _pair_frames(restored, gt, eval_size)
            except ContractError as e:
                logger.warning(f"{item}: {e}")
                errors.append((item, str(e)))
                continue
            if not pairs:
                errors.append((item, 'empty sequence'))
                continue

            ssims = [ssim(x, y) for x, y in pairs]
            mses = [mean_squared_error(x, y) for x, y in pairs]
            restored_frames = [x for x, _ in pairs]
            gt_frames = [y for _, y in pairs]
            cell_flicker = flicker(restored_frames, gt_frames) if len(pairs) >= 2 else None
            rows.append(MetricsRow(
                method=name,
                density=label,
                lighting=lighting,
                ssim=float(np.mean(ssims)),
                psnr=psnr_from_mse(float(np.mean(mses))),
                frames=len(pairs),
                flicker=cell_flicker,
                channel_error=channel_mean_error(restored_frames, gt_frames),
            ))
            logger.debug(f"{item}: ssim={rows[-1].ssim:.4f} psnr={rows[-1].psnr:.2f}")

            cell = pooled.setdefault(label, {'ssim': [], 'mse': [], 'flicker': [], 'restored': [], 'gt': []})
            cell['ssim'].extend(ssims)
            cell['mse'].extend(mses)
            cell['restored'].extend(restored_frames)
            cell['gt'].extend(gt_frames)
            if cell_flicker is not None:
                cell['flicker'].append(cell_flicker)

        for label, cell in pooled.items():
            rows.append(MetricsRow(
                method=name,
                density=label,
                lighting=POOLED,
                ssim=float(np.mean(cell['ssim'])),
                psnr=psnr_from_mse(float(np.mean(cell['mse']))),
                frames=len(cell['ssim']),
                flicker=float(np.mean(cell['flicker'])) if cell['flicker'] else None,
                channel_error=channel_mean_error(cell['restored'], cell['gt']),
            ))

    rows.sort(key=MetricsRow.sort_key)
    echo = dict(config or {})
    echo.setdefault('eval_size', eval_size)
    report = MetricsReport(rows=rows, config=echo, fingerprint=fingerprint(methods, gts), errors=errors)
    logger.info(f"Evaluated {len(rows)} row(s), {len(errors)} error(s)")
    return report
