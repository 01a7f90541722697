"""
=============
hstnalloc.bin
=============

This sub-module implements the top-level 'hstnalloc' command line
application. Its task is to delegate the processing to the sub-commands
defined in the sub-modules of the 'hstnalloc.bin' module.
"""
import argparse
import logging
import sys
import warnings


def hstnalloc(argv=None):
    """
    This function implements the top-level command line interface for the
    'hstnalloc' package. It serves as the global entry point to execute
    any of the available sub-commands.

    Args:
        argv: Optional list of command line arguments. Defaults to
            'sys.argv[1:]'.

    Return:
        The exit code of the sub-command.
    """
    from hstnalloc.bin import solve
    from hstnalloc.bin import sweep
    from hstnalloc.bin import validate_approx
    from hstnalloc.bin import gen_scenario

    logging.basicConfig(
        level="INFO",
        force=True,
        format='[%(levelname)s] (%(name)s): %(message)s'
    )
    warnings.filterwarnings("ignore", category=RuntimeWarning)

    description = (
        "hstnalloc: Power and channel allocation for hybrid "
        "satellite-terrestrial spectrum sharing"
    )

    parser = argparse.ArgumentParser(prog="hstnalloc", description=description)

    subparsers = parser.add_subparsers(help="Sub-commands")
    solve.add_parser(subparsers)
    sweep.add_parser(subparsers)
    validate_approx.add_parser(subparsers)
    gen_scenario.add_parser(subparsers)

    if argv is None:
        argv = sys.argv[1:]
    if len(argv) == 0:
        parser.print_help(sys.stderr)
        return 0

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == '__main__':
    sys.exit(hstnalloc())
