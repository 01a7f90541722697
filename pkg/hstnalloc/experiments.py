"""
hstnalloc.experiments
=====================

End-to-end allocation pipeline and the numerical experiments built on it.

The pipeline first solves the power allocation of every (user, channel)
pair, collects the resulting rates in a K x K rate table and then assigns
users to channels by maximum-weight matching. Sweeps repeat the pipeline
over power budgets or leakage thresholds for several allocation schemes and
independent large-scale fading draws. The validation experiment compares
the deterministic-equivalent rates to Monte Carlo estimates.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
import logging
from pathlib import Path
from time import perf_counter
from typing import Optional

import numpy as np
import pandas as pd
from tqdm import tqdm
import xarray as xr

from hstnalloc.assignment import (
    RateTable,
    assignment_total,
    exhaustive_oracle,
    kuhn_munkres,
    random_assignment,
    EXHAUSTIVE_MAX_SIZE,
)
from hstnalloc.montecarlo import RATE_SAMPLES, ergodic_rate_mc
from hstnalloc.power import (
    FEASIBILITY_TOLERANCE,
    check_solution,
    equal_power_baseline,
    power_constraints,
    solve_pair,
    waterfilling_baseline,
)
from hstnalloc.rate_model import pair_context
from hstnalloc.scenario import ScenarioConfig, dbm_to_mw, sample_deployment

LOGGER = logging.getLogger(__name__)

#: Default sweep of the per-user power budget in dBm.
DEFAULT_SWEEP_DBM = tuple(float(value) for value in range(0, 45, 5))
#: Default number of independent large-scale draws.
DEFAULT_TRIALS = 50


class Scheme(Enum):
    """
    Allocation schemes. 'waterfilling' and 'equal_power' replace the power
    allocation, 'random_assignment' and 'exhaustive' the channel assignment.
    """

    PROPOSED = "proposed"
    WATERFILLING = "waterfilling"
    EQUAL_POWER = "equal_power"
    RANDOM_ASSIGNMENT = "random_assignment"
    EXHAUSTIVE = "exhaustive"

    @property
    def power_scheme(self):
        """The scheme whose power allocation is used."""
        if self in (Scheme.WATERFILLING, Scheme.EQUAL_POWER):
            return self
        return Scheme.PROPOSED


class SweepParameter(Enum):
    """The quantity varied in a sweep."""

    POWER_BUDGET = "power_budget"
    LEAK_THRESHOLD = "leak_threshold"


class OutputFormat(Enum):
    """
    Enum class to represent the available output formats.
    """

    CSV = 1
    NETCDF = 2


POWER_RULES = {
    Scheme.PROPOSED: solve_pair,
    Scheme.WATERFILLING: waterfilling_baseline,
    Scheme.EQUAL_POWER: equal_power_baseline,
}

SCHEME_ORDER = {scheme.value: rank for rank, scheme in enumerate(Scheme)}


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """
    A record class holding the settings of an experiment.

    Attributes:
        scenario: The ScenarioConfig. The swept quantity is overwritten for
            all users or channels at every sweep point.
        seed: The seed from which all random streams are spawned.
        sweep_parameter: The quantity to sweep.
        sweep_values_dbm: Sorted sweep values in dBm.
        schemes: The allocation schemes to evaluate.
        trials: The number of independent large-scale fading draws.
        mc_validation: Whether to add Monte Carlo estimates of the rates.
        mc_samples: The number of Monte Carlo samples per estimate.
        record_timing: Whether to record solver wall times. Disabled by
            default because timings make the output non-reproducible.
        output_format: Format of the written results.
    """

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    seed: int = 0
    sweep_parameter: SweepParameter = SweepParameter.POWER_BUDGET
    sweep_values_dbm: tuple = DEFAULT_SWEEP_DBM
    schemes: tuple = tuple(Scheme)
    trials: int = DEFAULT_TRIALS
    mc_validation: bool = False
    mc_samples: int = RATE_SAMPLES
    record_timing: bool = False
    output_format: OutputFormat = OutputFormat.CSV

    def __post_init__(self):
        values = tuple(float(value) for value in self.sweep_values_dbm)
        if len(values) == 0:
            raise ValueError("'sweep_values_dbm' must not be empty.")
        if not np.all(np.isfinite(values)):
            raise ValueError("'sweep_values_dbm' must be finite.")
        if any(later < earlier for earlier, later in zip(values, values[1:])):
            raise ValueError("'sweep_values_dbm' must be sorted in ascending order.")
        object.__setattr__(self, "sweep_values_dbm", values)

        schemes = tuple(Scheme(scheme) for scheme in self.schemes)
        if len(schemes) == 0:
            raise ValueError("'schemes' must not be empty.")
        object.__setattr__(self, "schemes", tuple(dict.fromkeys(schemes)))
        object.__setattr__(
            self, "sweep_parameter", SweepParameter(self.sweep_parameter)
        )

        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("'trials' must be a positive integer.")
        if int(self.mc_samples) != self.mc_samples or self.mc_samples < 1:
            raise ValueError("'mc_samples' must be a positive integer.")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("'seed' must be a non-negative integer.")
        if (
            Scheme.EXHAUSTIVE in schemes
            and self.scenario.n_pairs > EXHAUSTIVE_MAX_SIZE
        ):
            raise ValueError(
                f"The 'exhaustive' scheme requires K <= {EXHAUSTIVE_MAX_SIZE}."
            )

    def scenario_at(self, value_dbm):
        """
        The scenario at a given sweep point.

        Args:
            value_dbm: The sweep value in dBm.
        """
        value = float(dbm_to_mw(value_dbm))
        if self.sweep_parameter == SweepParameter.POWER_BUDGET:
            return self.scenario.with_power_budget(value)
        return self.scenario.with_leakage_threshold(value)


@dataclass(eq=False)
class SweepResult:
    """
    Results of a sweep.

    Attributes:
        rows: One row per sweep value, scheme, trial and user.
        summary: Trial averages per sweep value and scheme.
        pair: Trial-averaged rate of user 0 on channel 0 for each power
            allocation scheme.
    """

    rows: pd.DataFrame
    summary: pd.DataFrame
    pair: pd.DataFrame


@dataclass(eq=False)
class ValidationReport:
    """
    Comparison of deterministic-equivalent and Monte Carlo rates.

    Attributes:
        rows: One row per sweep value, trial and (user, channel) pair.
        median_gap: Median relative gap over pairs with non-zero rate.
        max_gap: Largest relative gap over pairs with non-zero rate.
        n_excluded: The number of pairs excluded because of zero power.
    """

    rows: pd.DataFrame
    median_gap: float
    max_gap: float
    n_excluded: int

    def summary(self):
        """
        JSON-compatible summary of the report. Gap statistics are None if
        all pairs were excluded.
        """
        def gap(value):
            return None if np.isnan(value) else float(value)

        return {
            "n_pairs": int(len(self.rows)),
            "n_excluded": int(self.n_excluded),
            "median_gap": gap(self.median_gap),
            "max_gap": gap(self.max_gap),
        }


def build_rate_table(large_scale, cfg, power_rule=solve_pair):
    """
    Solve the power allocation of all (user, channel) pairs.

    Args:
        large_scale: The LargeScaleState of the deployment.
        cfg: The ScenarioConfig.
        power_rule: Function mapping a PairContext and PowerConstraints to a
            PairSolution.

    Return:
        A RateTable holding the rates and solutions.

    Raises:
        ValueError if a power rule returns an infeasible allocation.
    """
    k = cfg.n_pairs
    if large_scale.n_pairs != k or large_scale.n_bs != cfg.n_bs:
        raise ValueError(
            "Dimensions of the large-scale state do not match the scenario."
        )
    solutions = []
    for user in range(k):
        row = []
        for channel in range(k):
            ctx = pair_context(large_scale, cfg, user, channel)
            c = power_constraints(large_scale, cfg, user, channel)
            solution = power_rule(ctx, c)
            check_solution(ctx, c, solution)
            row.append(solution)
        solutions.append(row)
    return RateTable.from_solutions(solutions)


def algorithm1(large_scale, cfg):
    """
    Hierarchical joint power and channel allocation.

    Solves the power allocation of all K^2 pairs and assigns users to
    channels with the Kuhn-Munkres algorithm.

    Args:
        large_scale: The LargeScaleState of the deployment.
        cfg: The ScenarioConfig.

    Return:
        A tuple ``(assignment, rate_table, sum_rate)``.
    """
    table = build_rate_table(large_scale, cfg)
    assignment, sum_rate = kuhn_munkres(table)
    return assignment, table, sum_rate


def audit_leakage(large_scale, cfg, table, assignment):
    """
    Leakage at every satellite MT computed from the large-scale state,
    independently of the solver's constraints.

    Args:
        large_scale: The LargeScaleState.
        cfg: The ScenarioConfig.
        table: The RateTable holding the power allocations.
        assignment: The Assignment.

    Return:
        Length-K array of leakage powers in mW indexed by channel.

    Raises:
        RuntimeError if the leakage on any channel exceeds its threshold.
    """
    k = cfg.n_pairs
    coeff = large_scale.sat_gain ** 2
    if cfg.include_suppression_in_leakage:
        coeff = coeff * (cfg.suppression ** 2)[:, None]
    leak = np.zeros(k)
    for user, channel in enumerate(assignment.perm):
        power = table.solutions[user][channel].p_star
        leak[channel] = float(np.sum(power * coeff[channel]))
    threshold = cfg.leakage_threshold * (1.0 + FEASIBILITY_TOLERANCE)
    if np.any(leak > threshold):
        channel = int(np.argmax(leak - threshold))
        raise RuntimeError(
            f"Leakage {leak[channel]:.4g} mW on channel {channel} exceeds the "
            f"threshold {cfg.leakage_threshold[channel]:.4g} mW."
        )
    return leak


def _trial_seeds(seed, trial):
    """Independent seeds of the deployment and the random assignments."""
    deployment, assignments, validation = np.random.SeedSequence(
        seed, spawn_key=(trial,)
    ).spawn(3)
    return deployment, assignments, validation


def _run_trial(spec, trial):
    """
    Run all sweep points and schemes for a single large-scale draw.

    Return:
        A tuple ``(rows, pair_rows)`` of lists of dicts.
    """
    deployment_seed, assignment_seed, mc_seed = _trial_seeds(spec.seed, trial)
    _, large_scale = sample_deployment(spec.scenario, deployment_seed)
    assignment_rng = np.random.default_rng(assignment_seed)
    mc_rng = np.random.default_rng(mc_seed)
    k = spec.scenario.n_pairs

    rows = []
    pair_rows = []
    for value in spec.sweep_values_dbm:
        cfg = spec.scenario_at(value)
        tables = {}
        for scheme in spec.schemes:
            power_scheme = scheme.power_scheme
            if power_scheme not in tables:
                start = perf_counter()
                table = build_rate_table(large_scale, cfg, POWER_RULES[power_scheme])
                tables[power_scheme] = (table, 1e3 * (perf_counter() - start))
                pair_rows.append(
                    {
                        "sweep_value_dbm": value,
                        "scheme": power_scheme.value,
                        "trial": trial,
                        "rate_bps_hz": table.r[0, 0],
                    }
                )
            table, wall_ms = tables[power_scheme]

            if scheme == Scheme.RANDOM_ASSIGNMENT:
                assignment = random_assignment(k, assignment_rng)
                sum_rate = assignment_total(table, assignment)
            elif scheme == Scheme.EXHAUSTIVE:
                assignment, sum_rate = exhaustive_oracle(table)
            else:
                assignment, sum_rate = kuhn_munkres(table)

            leak = audit_leakage(large_scale, cfg, table, assignment)
            for user, channel in enumerate(assignment.perm):
                solution = table.solutions[user][channel]
                row = {
                    "sweep_value_dbm": value,
                    "scheme": scheme.value,
                    "trial": trial,
                    "user": user,
                    "channel": int(channel),
                    "rate_bps_hz": solution.rate,
                    "sum_rate_bps_hz": sum_rate,
                }
                for ind in range(k):
                    row[f"leakage_mw_{ind + 1}"] = leak[ind]
                row["iterations"] = solution.iterations
                row["wall_ms"] = wall_ms if spec.record_timing else np.nan
                if spec.mc_validation:
                    estimate = ergodic_rate_mc(
                        pair_context(large_scale, cfg, user, channel),
                        solution.p_star,
                        spec.mc_samples,
                        mc_rng,
                    )
                    row["mc_rate_bps_hz"] = estimate.mean
                rows.append(row)
    return rows, pair_rows


def _map_trials(function, spec, n_workers, description):
    """Apply 'function(spec, trial)' to all trials, optionally in parallel."""
    trials = range(spec.trials)
    if n_workers is None or n_workers <= 1:
        return [
            function(spec, trial)
            for trial in tqdm(trials, desc=description, disable=None)
        ]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        results = pool.map(function, [spec] * spec.trials, trials)
        return list(tqdm(results, total=spec.trials, desc=description, disable=None))


def _sort_rows(frame, keys):
    rank = frame["scheme"].map(SCHEME_ORDER)
    order = np.lexsort(
        [frame[key].to_numpy() for key in reversed(keys[2:])]
        + [rank.to_numpy(), frame[keys[0]].to_numpy()]
    )
    return frame.iloc[order].reset_index(drop=True)


def _summarize(rows, k):
    per_trial = rows.groupby(
        ["sweep_value_dbm", "scheme", "trial"], sort=False
    ).first()
    leak_cols = [f"leakage_mw_{ind + 1}" for ind in range(k)]
    per_trial["max_leakage_mw"] = per_trial[leak_cols].max(axis=1)
    iterations = rows.groupby(
        ["sweep_value_dbm", "scheme", "trial"], sort=False
    )["iterations"].mean()
    per_trial["iterations"] = iterations
    grouped = per_trial.groupby(["sweep_value_dbm", "scheme"], sort=False)
    summary = pd.DataFrame(
        {
            "sum_rate_bps_hz": grouped["sum_rate_bps_hz"].mean(),
            "sum_rate_std_bps_hz": grouped["sum_rate_bps_hz"].std(ddof=0),
            "max_leakage_mw": grouped["max_leakage_mw"].max(),
            "mean_iterations": grouped["iterations"].mean(),
            "n_trials": grouped["sum_rate_bps_hz"].size(),
        }
    )
    return summary.reset_index()


def run_sweep(spec, n_workers=1):
    """
    Run the pipeline over all sweep values, schemes and trials.

    Every trial draws its own deployment, which is shared by all sweep
    values and schemes. Rows are sorted by sweep value, scheme, trial and
    user so that the output does not depend on the execution order.

    Args:
        spec: The ExperimentSpec.
        n_workers: The number of processes to distribute the trials over.

    Return:
        A SweepResult.
    """
    LOGGER.info(
        "Starting sweep of '%s' over %s values with %s trials and schemes %s.",
        spec.sweep_parameter.value,
        len(spec.sweep_values_dbm),
        spec.trials,
        [scheme.value for scheme in spec.schemes],
    )
    results = _map_trials(_run_trial, spec, n_workers, "Sweep")
    rows = pd.DataFrame([row for trial_rows, _ in results for row in trial_rows])
    pair = pd.DataFrame([row for _, pair_rows in results for row in pair_rows])

    rows = _sort_rows(rows, ["sweep_value_dbm", "scheme", "trial", "user"])
    pair = _sort_rows(pair, ["sweep_value_dbm", "scheme", "trial"])
    summary = _summarize(rows, spec.scenario.n_pairs)
    pair = (
        pair.groupby(["sweep_value_dbm", "scheme"], sort=False)["rate_bps_hz"]
        .mean()
        .reset_index()
    )
    LOGGER.info("Finished sweep with %s result rows.", len(rows))
    return SweepResult(rows=rows, summary=summary, pair=pair)


def _validate_trial(spec, trial):
    deployment_seed, _, mc_seed = _trial_seeds(spec.seed, trial)
    _, large_scale = sample_deployment(spec.scenario, deployment_seed)
    rng = np.random.default_rng(mc_seed)

    rows = []
    for value in spec.sweep_values_dbm:
        cfg = spec.scenario_at(value)
        table = build_rate_table(large_scale, cfg)
        for user in range(cfg.n_pairs):
            for channel in range(cfg.n_pairs):
                solution = table.solutions[user][channel]
                ctx = pair_context(large_scale, cfg, user, channel)
                estimate = ergodic_rate_mc(ctx, solution.p_star, spec.mc_samples, rng)
                if estimate.mean > 0:
                    gap = abs(solution.rate - estimate.mean) / estimate.mean
                else:
                    gap = np.nan
                rows.append(
                    {
                        "sweep_value_dbm": value,
                        "trial": trial,
                        "user": user,
                        "channel": channel,
                        "upsilon_bps_hz": solution.rate,
                        "mc_mean_bps_hz": estimate.mean,
                        "mc_std_error_bps_hz": estimate.std_error,
                        "relative_gap": gap,
                    }
                )
    return rows


def validate_approx(spec, n_workers=1):
    """
    Compare deterministic-equivalent rates of all solved pairs to Monte
    Carlo estimates of the ergodic rate.

    Pairs without transmit power are excluded from the gap statistics.

    Args:
        spec: The ExperimentSpec. 'mc_samples' sets the number of samples.
        n_workers: The number of processes to distribute the trials over.

    Return:
        A ValidationReport.
    """
    if not spec.mc_validation:
        raise ValueError("Validation requires 'mc_validation' to be enabled.")
    LOGGER.info(
        "Validating rate model on %s trials with %s samples per pair.",
        spec.trials,
        spec.mc_samples,
    )
    results = _map_trials(_validate_trial, spec, n_workers, "Validation")
    rows = pd.DataFrame([row for trial_rows in results for row in trial_rows])
    gaps = rows["relative_gap"].dropna().to_numpy()
    n_excluded = int(rows["relative_gap"].isna().sum())
    median_gap = float(np.median(gaps)) if gaps.size else np.nan
    max_gap = float(np.max(gaps)) if gaps.size else np.nan
    LOGGER.info(
        "Median relative gap %.4f, maximum %.4f, %s pairs excluded.",
        median_gap,
        max_gap,
        n_excluded,
    )
    return ValidationReport(
        rows=rows, median_gap=median_gap, max_gap=max_gap, n_excluded=n_excluded
    )


def write_results(frame, path, output_format=OutputFormat.CSV, index=None):
    """
    Write a result table to disk.

    Args:
        frame: The pandas.DataFrame to write.
        path: The output path.
        output_format: OutputFormat.CSV or OutputFormat.NETCDF.
        index: Columns used as dimensions of the netCDF output.
    """
    path = Path(path)
    LOGGER.info("Writing results to '%s'.", path)
    if output_format == OutputFormat.CSV:
        frame.to_csv(path, index=False, float_format="%.10g", na_rep="")
        return path
    if index is None:
        index = [col for col in ["sweep_value_dbm", "scheme", "trial", "user"] if col in frame]
    dataset = xr.Dataset.from_dataframe(frame.set_index(index))
    dataset.to_netcdf(path)
    return path


def summary_path(path: Path, suffix: str, output_format: Optional[OutputFormat] = None):
    """
    Path of an auxiliary output derived from the main output path, e.g.
    'sweep.csv' -> 'sweep_summary.csv'.
    """
    path = Path(path)
    extension = path.suffix
    if output_format is not None:
        extension = ".csv" if output_format == OutputFormat.CSV else ".nc"
    return path.with_name(f"{path.stem}_{suffix}{extension}")
