"""
===================
hstnalloc.bin.sweep
===================

This sub-module implements the CLI to run parameter sweeps comparing the
allocation schemes.
"""
from dataclasses import replace
import logging
from pathlib import Path

LOGGER = logging.getLogger(__name__)


def add_parser(subparsers):
    """
    Add parser for 'sweep' command to top-level parser. This function
    is called from the top-level parser defined in 'hstnalloc.bin'.

    Args:
        subparsers: The subparsers object provided by the top-level parser.
    """
    parser = subparsers.add_parser(
        "sweep",
        help="Run a sweep over power budgets or leakage thresholds.",
        description=(
            """
            Run the allocation pipeline for all schemes, sweep values and
            trials of an experiment file. Per-user results are written to
            '--out', the trial averages and the single-pair view to files
            with suffixes '_summary' and '_pair'.
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
        help="The file to write the results to.",
    )
    parser.add_argument(
        "--threads",
        metavar="n",
        type=int,
        default=1,
        help="The number of processes over which to distribute the trials.",
    )
    parser.add_argument(
        "--timing",
        action="store_true",
        help=(
            "Record solver wall times. Output will no longer be reproducible "
            "byte by byte."
        ),
    )
    parser.set_defaults(func=run)


def load_spec(args):
    """
    Load the experiment of the 'sweep' and 'validate-approx' commands and
    apply the command line overrides.

    Raises:
        ConfigError if the configuration is invalid.
    """
    from hstnalloc.config import ConfigError, load_experiment_file, parse_seed
    from hstnalloc.experiments import ExperimentSpec

    if args.config is None:
        spec = ExperimentSpec()
    else:
        spec = load_experiment_file(args.config)
    if args.seed is not None:
        spec = replace(spec, seed=parse_seed(args.seed, "--seed"))
    if args.threads < 1:
        raise ConfigError("'--threads' must be at least 1.")
    return spec


def run(args):
    """
    Run a sweep.

    Args:
        args: The namespace object provided by the top-level parser.
    """
    from hstnalloc.config import ConfigError
    from hstnalloc.experiments import run_sweep, summary_path, write_results

    try:
        spec = load_spec(args)
    except ConfigError as error:
        LOGGER.error("%s", error)
        return 1
    if args.timing:
        spec = replace(spec, record_timing=True)

    output = Path(args.out)
    if not output.parent.exists():
        LOGGER.error("The output directory '%s' does not exist.", output.parent)
        return 1

    result = run_sweep(spec, n_workers=args.threads)
    write_results(result.rows, output, spec.output_format)
    write_results(
        result.summary,
        summary_path(output, "summary", spec.output_format),
        spec.output_format,
        index=["sweep_value_dbm", "scheme"],
    )
    write_results(
        result.pair,
        summary_path(output, "pair", spec.output_format),
        spec.output_format,
        index=["sweep_value_dbm", "scheme"],
    )
    return 0
