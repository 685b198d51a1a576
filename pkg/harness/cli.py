"""
Process entry point: `python -m harness.cli <subcommand> [flags]`.

Exit codes: 0 when the tolerance is met, 2 when a budget runs out first,
1 on configuration or parse errors (usage text goes to stderr).
"""
import os
import sys

import django


def _usage(subcommand=None):
    from harness.management.commands.ssp import Command

    parser = Command().create_parser('manage.py', 'ssp')
    if subcommand:
        for action in parser._subparsers._group_actions:
            if action.choices and subcommand in action.choices:
                return action.choices[subcommand].format_usage()
    return parser.format_usage()


def cli_main(argv=None, stdout=None, stderr=None):
    """
    Run the `ssp` management command with argv.

    Returns:
        int exit code
    """
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ssp_lab.settings')
    django.setup()
    from django.core.management import call_command
    from django.core.management.base import CommandError

    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr

    try:
        call_command('ssp', *argv, stdout=stdout, stderr=stderr)
    except CommandError as exc:
        stderr.write(f"{exc}\n")
        if exc.returncode != 2:
            stderr.write(_usage(argv[0] if argv else None))
        return exc.returncode
    return 0


if __name__ == '__main__':
    sys.exit(cli_main())
