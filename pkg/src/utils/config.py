"""
Configuration management for fogbench commands.

A run is configured by a plain key=value file (one per line, # comments),
parsed with python-dotenv, plus repeatable --set key=value overrides.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

from dotenv import dotenv_values

from utils.errors import ConfigError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfigKey:
    """One documented configuration key."""

    name: str
    kind: str
    default: object
    help: str
    required: bool = False


TRUE_WORDS = ('1', 'true', 'yes', 'on')
FALSE_WORDS = ('0', 'false', 'no', 'off')

COMMON_KEYS = [
    ConfigKey('seed', 'int', 0, 'seed of every random draw'),
    ConfigKey('log_level', 'str', 'INFO', 'DEBUG, INFO, WARNING or ERROR'),
]

DCP_KEYS = [
    ConfigKey('omega', 'float', 0.95, 'DCP haze retention factor'),
    ConfigKey('patch', 'int', 15, 'DCP dark-channel window side (odd)'),
    ConfigKey('t0', 'float', 0.1, 'DCP transmission floor'),
    ConfigKey('top_fraction', 'float', 0.001, 'DCP share of brightest dark-channel pixels for airlight'),
    ConfigKey('guided_radius', 'int', 15, 'DCP guided-filter radius'),
    ConfigKey('guided_eps', 'float', 1e-3, 'DCP guided-filter regularization'),
]

COMMAND_KEYS = {
    'synth': [
        ConfigKey('output', 'path', None, 'dataset root to create', required=True),
        ConfigKey('input', 'path', None, 'dataset root with clear/ and depth/ (procedural scene when empty)'),
        ConfigKey('size', 'int', 64, 'procedural frame side in pixels'),
        ConfigKey('frames', 'int', 12, 'procedural robot positions per video'),
        ConfigKey('lightings', 'int', 6, 'procedural lighting conditions (1..6)'),
        ConfigKey('densities', 'floats', [0.015, 0.05, 0.15], 'panel-contrast targets'),
        ConfigKey('airlight', 'str', 'panel', "'panel' (mean panel luminance) or r,g,b"),
        ConfigKey('panel_black', 'str', '', 'black panel region x0,y0,x1,y1 (required with input)'),
        ConfigKey('panel_white', 'str', '', 'white panel region x0,y0,x1,y1 (required with input)'),
        ConfigKey('raw', 'bool', False, 'also write raw stop-motion slices under raw/'),
        ConfigKey('fps', 'float', 25.0, 'frame rate recorded in the manifest'),
    ],
    'recompose': [
        ConfigKey('input', 'path', None, 'directory of pos_<NNNN>_light_<L>_density_<D|none>.png slices', required=True),
        ConfigKey('output', 'path', None, 'dataset root to create', required=True),
        ConfigKey('depth', 'path', None, 'directory of pos_<NNNN>.png depth maps to attach'),
    ],
    'defog': [
        ConfigKey('method', 'str', 'dcp', 'dcp, tcvd or identity'),
        ConfigKey('input', 'path', None, 'dataset root (foggy/ tree) or one sequence directory', required=True),
        ConfigKey('output', 'path', None, 'directory for restored frames', required=True),
        ConfigKey('checkpoint', 'path', None, 'TCVD checkpoint (required for tcvd)'),
    ] + DCP_KEYS,
    'train': [
        ConfigKey('roots', 'paths', [], 'comma-separated dataset roots', required=True),
        ConfigKey('checkpoint', 'path', None, 'checkpoint file to write', required=True),
        ConfigKey('loss_log', 'path', None, 'loss CSV (defaults to <checkpoint>.loss.csv)'),
        ConfigKey('model', 'str', 'desk', 'desk or full'),
        ConfigKey('steps', 'int', 500, 'optimizer steps'),
        ConfigKey('lr', 'float', 1e-4, 'ADAM learning rate; overfitting one pair below 0.2x its initial loss in 500 steps needs about 2e-3'),
        ConfigKey('batch_size', 'int', 1, 'triplets per step'),
        ConfigKey('augment', 'bool', True, 'random flips and quarter turns'),
        ConfigKey('loss_a', 'float', 1.0, 'weight of 1 - SSIM'),
        ConfigKey('loss_b', 'float', 1.0, 'weight of mean absolute error'),
    ],
    'eval': [
        ConfigKey('restored', 'str', '', 'comma-separated name=dataset_root pairs', required=True),
        ConfigKey('gt', 'path', None, 'dataset root holding clear/ ground truth', required=True),
        ConfigKey('output', 'path', None, 'directory for report.json and report.csv', required=True),
        ConfigKey('eval_size', 'int', 224, 'frames are resized to this side before scoring'),
    ],
}


def keys_for(command):
    if command not in COMMAND_KEYS:
        raise ConfigError(f"unknown command '{command}'")
    return COMMON_KEYS + COMMAND_KEYS[command]


def describe_keys(command):
    """Help text listing every key of a command with its default."""
    lines = ['configuration keys (set in --config or with --set key=value):']
    for key in keys_for(command):
        default = key.default
        if isinstance(default, list):
            default = ','.join(str(v) for v in default)
        marker = ' (required)' if key.required else ''
        lines.append(f"  {key.name:<14} default={default!s:<10} {key.help}{marker}")
    return '\n'.join(lines)


def _coerce(key, raw):
    text = '' if raw is None else str(raw).strip()
    try:
        if key.kind == 'int':
            return int(text)
        if key.kind == 'float':
            return float(text)
        if key.kind == 'bool':
            if text.lower() in TRUE_WORDS:
                return True
            if text.lower() in FALSE_WORDS:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if key.kind == 'floats':
            return [float(v) for v in text.split(',') if v.strip()]
        if key.kind == 'paths':
            return [Path(v.strip()) for v in text.split(',') if v.strip()]
        if key.kind == 'path':
            return Path(text) if text else None
        return text
    except ValueError as e:
        raise ConfigError(f"bad value for '{key.name}': {e}") from None


class RunConfig:
    """Validated settings of one command run."""

    def __init__(self, command, values):
        self.command = command
        self.values = values

    @classmethod
    def load(cls, command, path=None, overrides=()):
        """
        Build a command's configuration.

        Args:
            command: synth, recompose, defog, train or eval
            path: optional key=value config file
            overrides: iterable of 'key=value' strings applied after the file

        Returns:
            RunConfig

        Raises:
            ConfigError: on an unreadable file, unknown key, bad value or missing required key
        """
        table = {key.name: key for key in keys_for(command)}
        raw = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            raw.update(dotenv_values(path, interpolate=False))
        for item in overrides:
            if '=' not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            name, value = item.split('=', 1)
            raw[name.strip()] = value

        unknown = sorted(set(raw) - set(table))
        if unknown:
            raise ConfigError(f"unknown config key(s) for '{command}': {', '.join(unknown)}")

        values = {}
        for name, key in table.items():
            values[name] = _coerce(key, raw[name]) if name in raw else key.default
        missing = [
            name for name, key in table.items()
            if key.required and values[name] in (None, '', [])
        ]
        if missing:
            raise ConfigError(f"missing required config key(s) for '{command}': {', '.join(missing)}")

        logger.debug(f"Configuration for {command}: {values}")
        return cls(command, values)

    def __getitem__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise ConfigError(f"'{self.command}' has no config key '{name}'") from None

    def get(self, name, default=None):
        return self.values.get(name, default)

    @property
    def seed(self):
        return self.values['seed']

    def require_existing(self, *names):
        """
        Check that the paths under the given keys exist.

        Raises:
            ConfigError: naming the first missing path
        """
        for name in names:
            value = self.values.get(name)
            paths = value if isinstance(value, list) else [value]
            for path in paths:
                if path is not None and not Path(path).exists():
                    raise ConfigError(f"{name}: path does not exist: {path}")

    def as_dict(self):
        """JSON-friendly copy of the settings (paths as strings)."""
        echo = {}
        for name, value in self.values.items():
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, list):
                value = [str(v) if isinstance(v, Path) else v for v in value]
            echo[name] = value
        return {'command': self.command, **echo}
