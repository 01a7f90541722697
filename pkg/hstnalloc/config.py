"""
hstnalloc.config
================

Reading and writing of scenario and experiment configuration files.

Configuration files are JSON documents whose keys mirror the fields of
:class:`hstnalloc.scenario.ScenarioConfig` and
:class:`hstnalloc.experiments.ExperimentSpec`. Powers are given in dBm,
ratios in dB and distances in meters. They are converted to linear units
when the files are read.

Scenario keys:

    n_bs, n_pairs, n_antennas, noise_power_dbm, power_budget_dbm,
    leakage_threshold_dbm, sat_interference_dbm, suppression_db,
    path_loss_exponent, shadow_std_db, reference_distance_m, min_distance_m,
    include_suppression_in_leakage, terrestrial_region_m, satellite_region_m

Experiment keys:

    scenario, seed, sweep (parameter, values_dbm), schemes, trials,
    mc_validation (enabled, n_samples), record_timing, output_format
"""
import json
import logging
from pathlib import Path

import numpy as np

from hstnalloc.scenario import (
    Geometry,
    LargeScaleState,
    Region,
    ScenarioConfig,
    db_to_linear,
    dbm_to_mw,
    linear_to_db,
    mw_to_dbm,
    sample_deployment,
)

LOGGER = logging.getLogger(__name__)

#: Largest accepted seed.
MAX_SEED = 2 ** 64 - 1

SCENARIO_KEYS = {
    "n_bs",
    "n_pairs",
    "n_antennas",
    "noise_power_dbm",
    "power_budget_dbm",
    "leakage_threshold_dbm",
    "sat_interference_dbm",
    "suppression_db",
    "path_loss_exponent",
    "shadow_std_db",
    "reference_distance_m",
    "min_distance_m",
    "include_suppression_in_leakage",
    "terrestrial_region_m",
    "satellite_region_m",
}
SCENARIO_FILE_KEYS = {"scenario", "seed", "geometry", "large_scale"}
EXPERIMENT_KEYS = {
    "scenario",
    "seed",
    "sweep",
    "schemes",
    "trials",
    "mc_validation",
    "record_timing",
    "output_format",
}
SWEEP_KEYS = {"parameter", "values_dbm"}
MC_VALIDATION_KEYS = {"enabled", "n_samples"}

# Names of ScenarioConfig fields in error messages are replaced by the
# corresponding file keys.
_FIELD_KEYS = {
    "noise_power": "noise_power_dbm",
    "power_budget": "power_budget_dbm",
    "leakage_threshold": "leakage_threshold_dbm",
    "sat_interference": "sat_interference_dbm",
    "suppression": "suppression_db",
    "reference_distance": "reference_distance_m",
    "min_distance": "min_distance_m",
}


class ConfigError(ValueError):
    """
    Raised for invalid configuration files. The message names the
    offending key.
    """


def _check_keys(data, allowed, context):
    if not isinstance(data, dict):
        raise ConfigError(f"'{context}' must be a JSON object.")
    unknown = sorted(set(data) - allowed)
    if unknown:
        names = ", ".join(f"'{key}'" for key in unknown)
        raise ConfigError(f"Unknown key(s) {names} in '{context}'.")


def _number(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}.")
    if not np.isfinite(value):
        raise ConfigError(f"'{key}' must be finite.")
    return float(value)


def _integer(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}.")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{key}' must be at least {minimum}, got {value}.")
    return value


def _boolean(value, key):
    if not isinstance(value, bool):
        raise ConfigError(f"'{key}' must be true or false, got {value!r}.")
    return value


def _numbers(value, key):
    """A number or (nested) list of numbers as float array."""
    if isinstance(value, list):
        elems = [_numbers(elem, key) for elem in value]
        if len({elem.shape for elem in elems}) > 1:
            raise ConfigError(f"'{key}' must be a regular array of numbers.")
        return np.array(elems, dtype=np.float64)
    return np.array(_number(value, key))


def _region(value, key):
    if not isinstance(value, list) or len(value) != 4:
        raise ConfigError(f"'{key}' must be a list [x_min, y_min, x_max, y_max].")
    try:
        return Region(*[_number(elem, key) for elem in value])
    except ConfigError:
        raise
    except ValueError as error:
        raise ConfigError(f"'{key}': {error}") from error


def parse_seed(value, key="seed"):
    """
    Validate a seed.

    Args:
        value: The seed read from a file or the command line.
        key: The key to name in error messages.

    Return:
        The seed as int.
    """
    seed = _integer(value, key, minimum=0)
    if seed > MAX_SEED:
        raise ConfigError(f"'{key}' must not exceed 2^64 - 1.")
    return seed


def load_json(path):
    """
    Load a JSON document.

    Raises:
        ConfigError if the file does not exist or is not valid JSON.
    """
    path = Path(path)
    try:
        with open(path) as config_file:
            return json.load(config_file)
    except FileNotFoundError as error:
        raise ConfigError(f"Configuration file '{path}' does not exist.") from error
    except json.JSONDecodeError as error:
        raise ConfigError(f"Configuration file '{path}' is not valid JSON: {error}") from error


def write_json(data, path):
    """Write a JSON document with sorted keys."""
    path = Path(path)
    with open(path, "w") as output:
        json.dump(data, output, indent=2, sort_keys=True)
        output.write("\n")
    return path


def scenario_from_dict(data):
    """
    Create a ScenarioConfig from a dictionary of file keys.

    Missing keys take the defaults of ScenarioConfig.

    Args:
        data: Dictionary with the scenario keys.

    Return:
        The ScenarioConfig.

    Raises:
        ConfigError if a key is unknown or its value invalid.
    """
    _check_keys(data, SCENARIO_KEYS, "scenario")
    kwargs = {}
    for key in ["n_bs", "n_pairs", "n_antennas"]:
        if key in data:
            kwargs[key] = _integer(data[key], key, minimum=1)
    for key, name in [
        ("noise_power_dbm", "noise_power"),
        ("power_budget_dbm", "power_budget"),
        ("leakage_threshold_dbm", "leakage_threshold"),
        ("sat_interference_dbm", "sat_interference"),
    ]:
        if key in data and data[key] is not None:
            kwargs[name] = dbm_to_mw(_numbers(data[key], key))
    if "noise_power" in kwargs:
        kwargs["noise_power"] = float(kwargs["noise_power"])
    if "suppression_db" in data:
        power = db_to_linear(_numbers(data["suppression_db"], "suppression_db"))
        kwargs["suppression"] = np.sqrt(power)
    for key, name in [
        ("path_loss_exponent", "path_loss_exponent"),
        ("shadow_std_db", "shadow_std_db"),
        ("reference_distance_m", "reference_distance"),
        ("min_distance_m", "min_distance"),
    ]:
        if key in data:
            kwargs[name] = _number(data[key], key)
    if "include_suppression_in_leakage" in data:
        kwargs["include_suppression_in_leakage"] = _boolean(
            data["include_suppression_in_leakage"], "include_suppression_in_leakage"
        )
    for key, name in [
        ("terrestrial_region_m", "terrestrial_region"),
        ("satellite_region_m", "satellite_region"),
    ]:
        if key in data:
            kwargs[name] = _region(data[key], key)

    try:
        return ScenarioConfig(**kwargs)
    except ValueError as error:
        message = str(error)
        for name, key in _FIELD_KEYS.items():
            message = message.replace(f"'{name}'", f"'{key}'")
        raise ConfigError(message) from error


def _compact(arr):
    """Collapse constant arrays to a scalar."""
    arr = np.asarray(arr)
    if arr.size > 0 and np.all(arr == arr.flat[0]):
        return float(arr.flat[0])
    return arr.tolist()


def scenario_to_dict(cfg):
    """
    Convert a ScenarioConfig to a dictionary of file keys.

    Powers are converted to dBm and the suppression to dB. Per-user or
    per-channel quantities that are constant are written as scalars.
    """
    with np.errstate(divide="ignore"):
        sat_interference = mw_to_dbm(cfg.sat_interference)
    if not np.all(np.isfinite(sat_interference)):
        raise ValueError(
            "Zero satellite interference cannot be represented in dBm."
        )
    return {
        "n_bs": cfg.n_bs,
        "n_pairs": cfg.n_pairs,
        "n_antennas": cfg.n_antennas,
        "noise_power_dbm": float(mw_to_dbm(cfg.noise_power)),
        "power_budget_dbm": _compact(mw_to_dbm(cfg.power_budget)),
        "leakage_threshold_dbm": _compact(mw_to_dbm(cfg.leakage_threshold)),
        "sat_interference_dbm": _compact(sat_interference),
        "suppression_db": _compact(linear_to_db(cfg.suppression ** 2)),
        "path_loss_exponent": cfg.path_loss_exponent,
        "shadow_std_db": cfg.shadow_std_db,
        "reference_distance_m": cfg.reference_distance,
        "min_distance_m": cfg.min_distance,
        "include_suppression_in_leakage": cfg.include_suppression_in_leakage,
        "terrestrial_region_m": cfg.terrestrial_region.to_list(),
        "satellite_region_m": cfg.satellite_region.to_list(),
    }


def geometry_to_dict(geometry):
    return {
        "bs_positions_m": geometry.bs_positions.tolist(),
        "terr_mt_positions_m": geometry.terr_mt_positions.tolist(),
        "sat_mt_positions_m": geometry.sat_mt_positions.tolist(),
    }


def geometry_from_dict(data):
    _check_keys(
        data,
        {"bs_positions_m", "terr_mt_positions_m", "sat_mt_positions_m"},
        "geometry",
    )
    positions = {}
    for key in ["bs_positions_m", "terr_mt_positions_m", "sat_mt_positions_m"]:
        if key not in data:
            raise ConfigError(f"Missing key '{key}' in 'geometry'.")
        arr = _numbers(data[key], key)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ConfigError(f"'{key}' must be a list of [x, y] points.")
        positions[key[:-2]] = arr
    try:
        return Geometry(**positions)
    except ValueError as error:
        raise ConfigError(f"'geometry': {error}") from error


def large_scale_to_dict(large_scale):
    """
    Convert a LargeScaleState to a dictionary. Gains are stored as linear
    amplitudes.
    """
    return {
        "terr_gain": large_scale.terr_gain.tolist(),
        "sat_gain": large_scale.sat_gain.tolist(),
    }


def large_scale_from_dict(data, cfg=None):
    """
    Create a LargeScaleState from a dictionary.

    Args:
        data: Dictionary with keys 'terr_gain' and 'sat_gain'.
        cfg: Optional ScenarioConfig whose dimensions the state must match.
    """
    _check_keys(data, {"terr_gain", "sat_gain"}, "large_scale")
    for key in ["terr_gain", "sat_gain"]:
        if key not in data:
            raise ConfigError(f"Missing key '{key}' in 'large_scale'.")
    try:
        large_scale = LargeScaleState(
            terr_gain=_numbers(data["terr_gain"], "terr_gain"),
            sat_gain=_numbers(data["sat_gain"], "sat_gain"),
        )
    except ConfigError:
        raise
    except ValueError as error:
        raise ConfigError(f"'large_scale': {error}") from error
    if cfg is not None and (
        large_scale.n_pairs != cfg.n_pairs or large_scale.n_bs != cfg.n_bs
    ):
        raise ConfigError(
            "'large_scale' dimensions do not match 'n_pairs' and 'n_bs'."
        )
    return large_scale


def scenario_file_dict(cfg, seed=None, geometry=None, large_scale=None):
    """
    Dictionary representation of a scenario file as written by
    'gen-scenario'.
    """
    data = {"scenario": scenario_to_dict(cfg)}
    if seed is not None:
        data["seed"] = seed
    if geometry is not None:
        data["geometry"] = geometry_to_dict(geometry)
    if large_scale is not None:
        data["large_scale"] = large_scale_to_dict(large_scale)
    return data


def parse_scenario_file(data):
    """
    Parse the content of a scenario file.

    The file either holds the scenario keys directly or a 'scenario'
    object together with optional 'seed', 'geometry' and 'large_scale'
    entries.

    A stored geometry must match 'n_bs' and 'n_pairs' of the scenario. If
    geometry, large-scale state and seed are all present, the large-scale
    state must be the one that the seed draws for the geometry.

    Return:
        A tuple ``(cfg, seed, geometry, large_scale)``. 'seed', 'geometry'
        and 'large_scale' are None if not present.
    """
    if not isinstance(data, dict):
        raise ConfigError("Scenario file must contain a JSON object.")
    if "scenario" not in data:
        return scenario_from_dict(data), None, None, None
    _check_keys(data, SCENARIO_FILE_KEYS, "scenario file")
    cfg = scenario_from_dict(data["scenario"])
    seed = parse_seed(data["seed"]) if "seed" in data else None

    geometry = None
    if "geometry" in data:
        geometry = geometry_from_dict(data["geometry"])
        if geometry.n_bs != cfg.n_bs or geometry.n_pairs != cfg.n_pairs:
            raise ConfigError(
                "'geometry' dimensions do not match 'n_pairs' and 'n_bs'."
            )

    large_scale = None
    if "large_scale" in data:
        large_scale = large_scale_from_dict(data["large_scale"], cfg)

    if geometry is not None and large_scale is not None and seed is not None:
        _, expected = sample_deployment(cfg, seed, geometry)
        consistent = np.allclose(
            large_scale.terr_gain, expected.terr_gain, rtol=1e-9, atol=0.0
        ) and np.allclose(
            large_scale.sat_gain, expected.sat_gain, rtol=1e-9, atol=0.0
        )
        if not consistent:
            raise ConfigError(
                "'large_scale' is not the state drawn from 'seed' for 'geometry'."
            )
    return cfg, seed, geometry, large_scale


def load_scenario_file(path):
    """
    Load a scenario file.

    Args:
        path: Path to the JSON file.

    Return:
        A tuple ``(cfg, seed, geometry, large_scale)``, see
        'parse_scenario_file'.
    """
    return parse_scenario_file(load_json(path))


def experiment_from_dict(data, base_path=None):
    """
    Create an ExperimentSpec from a dictionary.

    Args:
        data: Dictionary with the experiment keys.
        base_path: Directory against which a scenario given as file path
            is resolved.

    Return:
        The ExperimentSpec.

    Raises:
        ConfigError if a key is unknown or its value invalid.
    """
    from hstnalloc.experiments import (
        ExperimentSpec,
        OutputFormat,
        Scheme,
        SweepParameter,
    )

    _check_keys(data, EXPERIMENT_KEYS, "experiment")
    kwargs = {}

    scenario = data.get("scenario", {})
    if isinstance(scenario, str):
        scenario_path = Path(scenario)
        if base_path is not None and not scenario_path.is_absolute():
            scenario_path = Path(base_path) / scenario_path
        kwargs["scenario"] = load_scenario_file(scenario_path)[0]
    else:
        kwargs["scenario"] = scenario_from_dict(scenario)

    if "seed" in data:
        kwargs["seed"] = parse_seed(data["seed"])

    if "sweep" in data:
        sweep = data["sweep"]
        _check_keys(sweep, SWEEP_KEYS, "sweep")
        if "parameter" in sweep:
            try:
                kwargs["sweep_parameter"] = SweepParameter(sweep["parameter"])
            except ValueError as error:
                choices = [param.value for param in SweepParameter]
                raise ConfigError(
                    f"'parameter' must be one of {choices}, got {sweep['parameter']!r}."
                ) from error
        if "values_dbm" in sweep:
            values = _numbers(sweep["values_dbm"], "values_dbm")
            if values.ndim != 1:
                raise ConfigError("'values_dbm' must be a list of numbers.")
            if values.size == 0:
                raise ConfigError("'values_dbm' must not be empty.")
            if np.any(np.diff(values) < 0):
                raise ConfigError("'values_dbm' must be sorted in ascending order.")
            kwargs["sweep_values_dbm"] = tuple(values.tolist())

    if "schemes" in data:
        schemes = data["schemes"]
        if not isinstance(schemes, list) or len(schemes) == 0:
            raise ConfigError("'schemes' must be a non-empty list.")
        try:
            kwargs["schemes"] = tuple(Scheme(scheme) for scheme in schemes)
        except ValueError as error:
            choices = [scheme.value for scheme in Scheme]
            raise ConfigError(f"'schemes' must be a subset of {choices}.") from error

    if "trials" in data:
        kwargs["trials"] = _integer(data["trials"], "trials", minimum=1)

    if "mc_validation" in data:
        mc_validation = data["mc_validation"]
        _check_keys(mc_validation, MC_VALIDATION_KEYS, "mc_validation")
        if "enabled" in mc_validation:
            kwargs["mc_validation"] = _boolean(mc_validation["enabled"], "enabled")
        if "n_samples" in mc_validation:
            kwargs["mc_samples"] = _integer(
                mc_validation["n_samples"], "n_samples", minimum=1
            )

    if "record_timing" in data:
        kwargs["record_timing"] = _boolean(data["record_timing"], "record_timing")

    if "output_format" in data:
        output_format = data["output_format"]
        if not isinstance(output_format, str) or output_format.upper() not in (
            OutputFormat.__members__
        ):
            raise ConfigError(
                f"'output_format' must be 'csv' or 'netcdf', got {output_format!r}."
            )
        kwargs["output_format"] = OutputFormat[output_format.upper()]

    try:
        return ExperimentSpec(**kwargs)
    except ValueError as error:
        raise ConfigError(str(error)) from error


def load_experiment_file(path):
    """
    Load an experiment file.

    Args:
        path: Path to the JSON file.

    Return:
        The ExperimentSpec.
    """
    path = Path(path)
    LOGGER.info("Loading experiment configuration from '%s'.", path)
    return experiment_from_dict(load_json(path), base_path=path.parent)
