"""CLI parser setup and helpers."""
import argparse
import json
import logging
import os
import sys
from argparse import Namespace
from typing import Any, Dict, List, Optional

import yaml

from zrpfluct.config import flatten, parse_settings
from zrpfluct.constants import (
    CONFIG_FILENAME,
    INVALID_CONFIG_RC,
    OUTPUT_DIR_ENVVAR,
    WORKERS_ENVVAR,
)

_logger = logging.getLogger(__name__)

# options that may appear at the top level of a config file
_OPTION_KEYS = ("verbosity", "workers")


def parse_flat_text(text: str, source: str = "<text>") -> Dict[str, Any]:
    """Parse ``section.key = value`` lines; values are read as YAML scalars.

    >>> parse_flat_text("sim.N = 64  # sites\\nfields.modes = [1, 2]")
    {'sim.N': 64, 'fields.modes': [1, 2]}
    """
    config: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{source}:{number}: expected 'key = value', got {raw!r}")
        config[key.strip()] = yaml.safe_load(value) if value.strip() else None
    return config


def read_config_file(path: str) -> Dict[str, Any]:
    """Read a flat, JSON or YAML config file into dotted keys."""
    with open(path, "r", encoding="utf-8") as stream:
        text = stream.read()
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".json":
        config = json.loads(text)
    elif suffix in (".yml", ".yaml"):
        config = yaml.safe_load(text) or {}
    else:
        return parse_flat_text(text, path)
    if not isinstance(config, dict):
        raise ValueError(f"expected a mapping in {path}")
    return flatten(config)


def load_config(config_file: Optional[str]) -> Dict[str, Any]:
    """Load configuration from disk."""
    config_path = None
    if config_file:
        config_path = os.path.abspath(config_file)
        if not os.path.exists(config_path):
            _logger.error("Config file not found '%s'", config_path)
            sys.exit(INVALID_CONFIG_RC)
    config_path = config_path or get_config_path()
    if not config_path or not os.path.exists(config_path):
        # a missing default config file should not trigger an error
        return {}

    try:
        config = read_config_file(config_path)
    except (ValueError, yaml.YAMLError) as exc:
        _logger.error("Invalid configuration file %s: %s", config_path, exc)
        sys.exit(INVALID_CONFIG_RC)

    config['config_file'] = config_path
    return config


def get_config_path(config_file: str = CONFIG_FILENAME) -> Optional[str]:
    """Return local config file."""
    project_filenames = [config_file]
    parent = tail = os.getcwd()
    while tail:
        for project_filename in project_filenames:
            filename = os.path.abspath(os.path.join(parent, project_filename))
            if os.path.exists(filename):
                return filename
            if os.path.exists(os.path.abspath(os.path.join(parent, '.git'))):
                # Avoid looking outside .git folders as we do not want endup
                # picking config files from upper level projects if current
                # project has no config.
                return None
        (parent, tail) = os.path.split(parent)
    return None


def _add_actions(
    subparsers: Any, command: str, help_text: str, actions: Dict[str, str]
) -> None:
    parser = subparsers.add_parser(command, help=help_text)
    nested = parser.add_subparsers(dest="action", metavar="ACTION")
    nested.required = True
    for action, action_help in actions.items():
        nested.add_parser(action, help=action_help)


def get_cli_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zrpfluct",
        description="Simulate and verify fluctuation fields of multi-species "
        "weakly asymmetric zero-range processes.",
    )

    parser.add_argument(
        '-c',
        dest='config_file',
        help=f'Specify configuration file to use. Defaults to "{CONFIG_FILENAME}"',
    )
    parser.add_argument(
        '-q',
        dest='quiet',
        default=0,
        action='count',
        help="quieter, reduce verbosity, can be specified twice.",
    )
    parser.add_argument(
        '-v',
        dest='verbosity',
        action='count',
        help="Increase verbosity level (-vv for more)",
        default=0,
    )
    # Do not use store_true/store_false because they create opposite defaults.
    parser.add_argument(
        '--nocolor',
        dest='colored',
        action='store_const',
        const=False,
        help="disable colored output, same as NO_COLOR=1",
    )
    parser.add_argument(
        '--force-color',
        dest='colored',
        action='store_const',
        const=True,
        help="Force colored output, same as FORCE_COLOR=1",
    )
    parser.add_argument(
        '-o',
        dest='output_dir',
        help=f"artifact directory, overrides {OUTPUT_DIR_ENVVAR} and output.dir",
    )
    parser.add_argument(
        '-j',
        dest='workers',
        type=int,
        help=f"replica worker threads, overrides {WORKERS_ENVVAR}",
    )
    parser.add_argument(
        '--set',
        dest='settings',
        action='append',
        default=[],
        metavar='KEY=VALUE',
        help="override one configuration key, e.g. --set sim.N=256. "
        "This option is repeatable.",
    )
    parser.add_argument(
        '--version',
        action='store_true',
    )

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.add_parser("simulate", help="run replicas and record field values")
    _add_actions(
        subparsers, "ensemble", "product measure tables", {"dump": "write moments"}
    )
    _add_actions(
        subparsers, "frame", "frame condition", {"solve": "solve for a frame density"}
    )
    _add_actions(
        subparsers, "coupling", "coupling tensor", {"build": "build the tensor"}
    )
    _add_actions(
        subparsers, "decouple", "decoupleability", {"scan": "scan rotation angles"}
    )
    _add_actions(subparsers, "spde", "spectral reference", {"run": "integrate"})
    fields = subparsers.add_parser(
        "fields", help="field decomposition, structure factors and A^eps"
    )
    fields.add_argument(
        '--profile',
        dest='profile',
        action='store_true',
        default=False,
        help="also record a hydrodynamic density profile",
    )
    _add_actions(
        subparsers,
        "diagnose",
        "ensemble and Boltzmann-Gibbs diagnostics",
        {"eoe": "equivalence of ensembles", "bg": "Boltzmann-Gibbs functional"},
    )
    compare = subparsers.add_parser("compare", help="compare two run directories")
    compare.add_argument('run_a')
    compare.add_argument('run_b')
    conditions = subparsers.add_parser("conditions", help="check rate conditions")
    conditions.add_argument(
        '-L',
        dest='listconditions',
        default=False,
        action='store_true',
        help="list all the conditions",
    )
    conditions.add_argument(
        '-T',
        dest='listtags',
        default=False,
        action='store_true',
        help="list all the tags",
    )
    conditions.add_argument(
        '-x',
        '--skip',
        dest='skip',
        action='append',
        default=[],
        help="skip conditions by their id. This option is repeatable.",
    )
    conditions.add_argument(
        '--enable',
        dest='enable',
        action='append',
        default=[],
        help="activate optional conditions by their id. This option is repeatable.",
    )

    return parser


def merge_config(file_config: Dict[Any, Any], cli_config: Namespace) -> Namespace:
    """Merge file values under explicit command line values.

    Booleans are OR-ed, command line scalars win, lists are extended and
    ``--set`` overrides any dotted key of the file.
    """
    bools = {'profile': 'fields.profile'}
    lists_map = {'enable': 'conditions.enable', 'skip': 'conditions.skip'}
    scalar_map = {'workers': None}

    file_config = dict(file_config)
    cli_config.config_file = file_config.pop(
        'config_file', getattr(cli_config, 'config_file', None)
    )

    for entry, key in bools.items():
        x = getattr(cli_config, entry, False) or bool(file_config.pop(key, False))
        setattr(cli_config, entry, x)

    for entry, default in scalar_map.items():
        x = getattr(cli_config, entry, None) or file_config.pop(entry, default)
        setattr(cli_config, entry, x)

    for entry, key in lists_map.items():
        value = list(getattr(cli_config, entry, None) or [])
        extra = file_config.pop(key, [])
        value.extend([extra] if isinstance(extra, str) else extra)
        setattr(cli_config, entry, value)

    if 'verbosity' in file_config:
        cli_config.verbosity = cli_config.verbosity + int(file_config.pop('verbosity'))

    experiment = {k: v for k, v in file_config.items() if k not in _OPTION_KEYS}
    experiment.update(parse_settings(cli_config.settings))
    if cli_config.profile:
        experiment['fields.profile'] = True
    if cli_config.enable:
        experiment['conditions.enable'] = cli_config.enable
    if cli_config.skip:
        experiment['conditions.skip'] = cli_config.skip
    cli_config.experiment = experiment
    return cli_config


def get_config(arguments: List[str]) -> Namespace:
    parser = get_cli_parser()
    options = parser.parse_args(arguments)
    defaults = (
        ('profile', False),
        ('enable', []),
        ('skip', []),
        ('listconditions', False),
        ('listtags', False),
        ('action', None),
    )
    for name, default in defaults:
        if not hasattr(options, name):
            setattr(options, name, default)

    file_config = load_config(options.config_file)

    config = merge_config(file_config, options)

    if config.workers is None and os.environ.get(WORKERS_ENVVAR, "").strip():
        config.workers = int(os.environ[WORKERS_ENVVAR])

    # Compute final verbosity level by subtracting -q counter.
    config.verbosity -= config.quiet
    return config


def print_help(file: Any = sys.stdout) -> None:
    get_cli_parser().print_help(file=file)
