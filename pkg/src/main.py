"""
fogbench main entry point.

Each subcommand (synth, recompose, defog, train, eval) is configured by an
optional key=value file plus --set overrides and returns an exit code:
0 success, 1 unexpected error, 2 configuration error, 3 data or contract
error, 4 numerical abort.
"""

import sys
import argparse
import logging
from pathlib import Path

# Add src directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from utils.config import COMMAND_KEYS, RunConfig, describe_keys
from utils.errors import FogbenchError, NumericalAbort
from utils.guardrail import NumericGuardrail
from services.bench.commands import cmd_defog, cmd_eval, cmd_recompose, cmd_synth, cmd_train


# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

logger = logging.getLogger(__name__)

COMMANDS = {
    'synth': (cmd_synth, 'Synthesize a calibrated foggy/clear dataset tree'),
    'recompose': (cmd_recompose, 'Regroup raw stop-motion slices into videos'),
    'defog': (cmd_defog, 'Restore foggy videos with dcp, tcvd or identity'),
    'train': (cmd_train, 'Train the TCVD network'),
    'eval': (cmd_eval, 'Score restored videos against ground truth'),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog='fogbench',
        description='fogbench - synthesize, restore and score foggy videos'
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name in COMMAND_KEYS:
        _, help_text = COMMANDS[name]
        sub = subparsers.add_parser(
            name,
            help=help_text,
            description=help_text,
            epilog=describe_keys(name),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        sub.add_argument(
            '--config',
            type=Path,
            default=None,
            help='key=value configuration file'
        )
        sub.add_argument(
            '--set',
            dest='overrides',
            action='append',
            default=[],
            metavar='KEY=VALUE',
            help='override one configuration key (repeatable)'
        )
    return parser


def run_command(command, config_path=None, overrides=()):
    """
    Load the configuration and run one command.

    Returns:
        int: Exit code (0=success, 1=unexpected, 2=config, 3=data/contract, 4=numerical)
    """
    logger.info(f"Starting {command}")
    try:
        config = RunConfig.load(command, config_path, overrides)
        level = getattr(logging, str(config['log_level']).upper(), None)
        if not isinstance(level, int):
            logger.error(f"Configuration error: unknown log_level '{config['log_level']}'")
            return 2
        logging.getLogger().setLevel(level)

        handler, _ = COMMANDS[command]
        exit_code = handler(config)
        if exit_code == 0:
            logger.info(f"{command} completed successfully")
        return exit_code

    except NumericalAbort as e:
        return NumericGuardrail.enforce(e)
    except FogbenchError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return 1


def main(argv=None):
    """Main entry point for the application."""
    parser = build_parser()
    args = parser.parse_args(argv)
    return run_command(args.command, args.config, args.overrides)


if __name__ == '__main__':
    sys.exit(main())
