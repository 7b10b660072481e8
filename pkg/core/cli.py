"""``p2e-mec`` entry point and the option handling shared by the management commands.

Exit codes: 0 success, 1 usage error (no subcommand, unknown flag, bad
config value), 2 runtime failure.
"""
import os
import sys

from django.core.management.base import CommandError

from .config import load_config, parse_overrides
from .exceptions import ConfigError

SUBCOMMANDS = ('train', 'sweep', 'eval', 'oracle', 'aggregate', 'calibrate')
PROG = 'p2e-mec'

USAGE = f"""usage: {PROG} <command> [options]

commands:
  train      train one run (mals, ida, ctde or random)
  sweep      multi-seed campaign over a q or h weight sweep
  eval       greedy evaluation of a saved checkpoint
  oracle     brute-force allocation search on a tiny instance
  aggregate  tail-mean summary of a finished campaign
  calibrate  check a scenario's link budget, battery sizing and penalty dominance

'{PROG} <command> --help' lists the options of a command.
"""


def add_config_arguments(parser):
    parser.add_argument('--config', help='Path to a key = value config document')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one config key; repeatable')
    parser.add_argument('--mbs', type=int, help='Number of MBSs (m_mbs)')
    parser.add_argument('--ues', type=int, help='Number of UEs (n_ues)')


def split_list(text, cast=float):
    try:
        return [cast(part) for part in text.split(',') if part.strip()]
    except ValueError as exc:
        raise CommandError(f"cannot parse list {text!r}: {exc}")


def resolve_configs(options, **flag_keys):
    """Build (NetworkConfig, TrainConfig) from --config, --set and shortcut flags.

    ``flag_keys`` maps extra option names to config keys, e.g. seed='seed'.
    """
    source = ''
    if options.get('config'):
        try:
            with open(options['config'], encoding='utf-8') as handle:
                source = handle.read()
        except OSError as exc:
            raise CommandError(f"cannot read config {options['config']}: {exc}", returncode=2)
    keys = {'mbs': 'm_mbs', 'ues': 'n_ues', **flag_keys}
    try:
        overrides = parse_overrides(options.get('set'))
        for option, key in keys.items():
            if options.get(option) is not None:
                overrides[key] = options[option]
        return load_config(source, overrides)
    except ConfigError as exc:
        raise CommandError(str(exc))


def _setup_django():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'django_project.settings')
    import django

    django.setup()


def cli_main(argv=None, stdout=None, stderr=None):
    """Run one subcommand and return its exit code"""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in SUBCOMMANDS:
        if argv and argv[0] in ('-h', '--help'):
            stdout.write(USAGE)
            return 0
        if argv:
            stderr.write(f"unknown command {argv[0]!r}\n")
        stderr.write(USAGE)
        return 1

    _setup_django()
    from django.core.management import load_command_class

    name = argv[0]
    command = load_command_class('core', name)
    parser = command.create_parser(PROG, name)
    try:
        options = parser.parse_args(argv[1:])
    except CommandError as exc:
        stderr.write(parser.format_usage())
        stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:
        return exc.code or 0

    cmd_options = vars(options)
    args = cmd_options.pop('args', ())
    cmd_options['stdout'] = stdout
    cmd_options['stderr'] = stderr
    try:
        command.execute(*args, **cmd_options)
    except CommandError as exc:
        stderr.write(f"{PROG} {name}: {exc}\n")
        return exc.returncode
    return 0


def main():
    sys.exit(cli_main())
