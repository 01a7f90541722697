"""
==========================
hstnalloc.bin.gen_scenario
==========================

This sub-module implements the CLI to generate scenario files.
"""
import json
import logging
import sys

LOGGER = logging.getLogger(__name__)


def add_parser(subparsers):
    """
    Add parser for 'gen-scenario' command to top-level parser. This function
    is called from the top-level parser defined in 'hstnalloc.bin'.

    Args:
        subparsers: The subparsers object provided by the top-level parser.
    """
    parser = subparsers.add_parser(
        "gen-scenario",
        help="Generate a scenario file with a random deployment.",
        description=(
            """
            Draw a random deployment and its large-scale fading and write
            them together with the scenario parameters to a JSON file that
            can be passed to 'solve'.
            """
        ),
    )
    parser.add_argument(
        "--config",
        metavar="path",
        type=str,
        default=None,
        help=(
            "Scenario file holding the parameters of the scenario. Defaults "
            "to the reference scenario."
        ),
    )
    parser.add_argument(
        "--seed",
        metavar="seed",
        type=int,
        default=0,
        help="Seed of the random deployment.",
    )
    parser.add_argument(
        "--out",
        metavar="path",
        type=str,
        default=None,
        help="File to write the scenario to. Defaults to stdout.",
    )
    parser.set_defaults(func=run)


def run(args):
    """
    Generate a scenario file.

    Args:
        args: The namespace object provided by the top-level parser.
    """
    from hstnalloc.config import (
        ConfigError,
        load_scenario_file,
        parse_seed,
        scenario_file_dict,
        write_json,
    )
    from hstnalloc.scenario import ScenarioConfig, sample_deployment

    try:
        if args.config is None:
            cfg = ScenarioConfig()
        else:
            cfg = load_scenario_file(args.config)[0]
        seed = parse_seed(args.seed, "--seed")
    except ConfigError as error:
        LOGGER.error("%s", error)
        return 1

    geometry, large_scale = sample_deployment(cfg, seed)
    data = scenario_file_dict(cfg, seed, geometry, large_scale)
    if args.out is None:
        sys.stdout.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    else:
        try:
            write_json(data, args.out)
        except OSError as error:
            LOGGER.error("Could not write scenario file '%s': %s", args.out, error)
            return 1
        LOGGER.info("Wrote scenario with seed %s to '%s'.", seed, args.out)
    return 0
