"""
=============================
hstnalloc.bin.validate_approx
=============================

This sub-module implements the CLI to validate the deterministic-equivalent
rates against Monte Carlo simulation.
"""
from dataclasses import replace
import json
import logging
from pathlib import Path

LOGGER = logging.getLogger(__name__)


def add_parser(subparsers):
    """
    Add parser for 'validate-approx' command to top-level parser. This
    function is called from the top-level parser defined in 'hstnalloc.bin'.

    Args:
        subparsers: The subparsers object provided by the top-level parser.
    """
    parser = subparsers.add_parser(
        "validate-approx",
        help="Compare deterministic-equivalent rates to Monte Carlo estimates.",
        description=(
            """
            Solve the power allocation of all user-channel pairs of an
            experiment and compare the deterministic-equivalent rates to
            Monte Carlo estimates of the ergodic rates. The per-pair report
            is written to '--out' and the gap statistics to a JSON file with
            suffix '_summary'.
            """
        ),
    )
    parser.add_argument(
        "--config",
        metavar="path",
        type=str,
        default=None,
        help="Path to an experiment file. Defaults to the reference experiment.",
    )
    parser.add_argument(
        "--seed",
        metavar="seed",
        type=int,
        default=None,
        help="Seed of the experiment. Overrides the seed of the file.",
    )
    parser.add_argument(
        "--out",
        metavar="path",
        type=str,
        required=True,
        help="The file to write the report to.",
    )
    parser.add_argument(
        "--threads",
        metavar="n",
        type=int,
        default=1,
        help="The number of processes over which to distribute the trials.",
    )
    parser.add_argument(
        "--n_samples",
        metavar="n",
        type=int,
        default=None,
        help="Number of Monte Carlo samples. Overrides the experiment file.",
    )
    parser.set_defaults(func=run)


def run(args):
    """
    Run the validation.

    Args:
        args: The namespace object provided by the top-level parser.
    """
    from hstnalloc.bin.sweep import load_spec
    from hstnalloc.config import ConfigError
    from hstnalloc.experiments import summary_path, validate_approx, write_results

    try:
        spec = load_spec(args)
        if args.n_samples is not None:
            if args.n_samples < 1:
                raise ConfigError("'--n_samples' must be at least 1.")
            spec = replace(spec, mc_samples=args.n_samples)
    except ConfigError as error:
        LOGGER.error("%s", error)
        return 1
    if not spec.mc_validation:
        LOGGER.info("Enabling Monte Carlo validation.")
        spec = replace(spec, mc_validation=True)

    output = Path(args.out)
    if not output.parent.exists():
        LOGGER.error("The output directory '%s' does not exist.", output.parent)
        return 1

    report = validate_approx(spec, n_workers=args.threads)
    write_results(
        report.rows,
        output,
        spec.output_format,
        index=["sweep_value_dbm", "trial", "user", "channel"],
    )
    with open(summary_path(output, "summary").with_suffix(".json"), "w") as summary:
        json.dump(report.summary(), summary, indent=2, allow_nan=False)
        summary.write("\n")
    return 0
