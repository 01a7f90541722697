"""
===================
hstnalloc.bin.solve
===================

This sub-module implements the CLI to solve the joint power and channel
allocation of a single scenario.
"""
import json
import logging
import sys

import numpy as np

LOGGER = logging.getLogger(__name__)


def add_parser(subparsers):
    """
    Add parser for 'solve' command to top-level parser. This function
    is called from the top-level parser defined in 'hstnalloc.bin'.

    Args:
        subparsers: The subparsers object provided by the top-level parser.
    """
    parser = subparsers.add_parser(
        "solve",
        help="Solve power and channel allocation for one scenario.",
        description=(
            """
            Solve the power allocation of all user-channel pairs and the
            channel assignment of a single scenario. The assignment and
            rates are written as JSON to stdout or to the file given by
            '--out'.
            """
        ),
    )
    parser.add_argument(
        "--config",
        metavar="path",
        type=str,
        default=None,
        help=(
            "Path to a scenario file. If the file holds a large-scale state, "
            "it is used as is. Otherwise the shadowing, and the geometry if "
            "the file holds none, are drawn from the seed. Defaults to the "
            "reference scenario."
        ),
    )
    parser.add_argument(
        "--seed",
        metavar="seed",
        type=int,
        default=None,
        help=(
            "Seed of the random deployment. Overrides the seed of the file "
            "and discards its large-scale state."
        ),
    )
    parser.add_argument(
        "--out",
        metavar="path",
        type=str,
        default=None,
        help="File to write the result to. Defaults to stdout.",
    )
    parser.set_defaults(func=run)


def solution_to_dict(cfg, assignment, table, sum_rate, leakage):
    """
    JSON representation of the solution of a scenario.
    """
    users = []
    for user, channel in enumerate(assignment.perm):
        solution = table.solutions[user][channel]
        users.append(
            {
                "user": user,
                "channel": int(channel),
                "rate_bps_hz": solution.rate,
                "power_mw": solution.p_star.tolist(),
                "fw_gap": solution.fw_gap,
                "iterations": solution.iterations,
                "converged": solution.converged,
                "leakage_mw": float(leakage[channel]),
                "leakage_threshold_mw": float(cfg.leakage_threshold[channel]),
            }
        )
    return {
        "assignment": assignment.perm.tolist(),
        "sum_rate_bps_hz": sum_rate,
        "rate_table_bps_hz": table.r.tolist(),
        "users": users,
    }


def run(args):
    """
    Solve a single scenario.

    Args:
        args: The namespace object provided by the top-level parser.
    """
    from hstnalloc.config import ConfigError, load_scenario_file, parse_seed
    from hstnalloc.experiments import algorithm1, audit_leakage
    from hstnalloc.scenario import ScenarioConfig, sample_deployment

    try:
        if args.config is None:
            cfg, seed, geometry, large_scale = ScenarioConfig(), None, None, None
        else:
            cfg, seed, geometry, large_scale = load_scenario_file(args.config)
        if args.seed is not None:
            seed = parse_seed(args.seed, "--seed")
    except ConfigError as error:
        LOGGER.error("%s", error)
        return 1

    if large_scale is None or args.seed is not None:
        if seed is None:
            seed = 0
        if geometry is None:
            LOGGER.info("Drawing deployment with seed %s.", seed)
        else:
            LOGGER.info("Drawing shadowing of stored geometry with seed %s.", seed)
        _, large_scale = sample_deployment(cfg, seed, geometry)

    assignment, table, sum_rate = algorithm1(large_scale, cfg)
    leakage = audit_leakage(large_scale, cfg, table, assignment)
    LOGGER.info(
        "Assigned channels %s with sum rate %.4f bit/s/Hz.",
        assignment.perm.tolist(),
        sum_rate,
    )

    result = solution_to_dict(cfg, assignment, table, sum_rate, leakage)
    text = json.dumps(result, indent=2)
    if args.out is None:
        sys.stdout.write(text + "\n")
    else:
        try:
            with open(args.out, "w") as output:
                output.write(text + "\n")
        except OSError as error:
            LOGGER.error("Could not write output file '%s': %s", args.out, error)
            return 1
    return 0
