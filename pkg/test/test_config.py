"""
Tests for the configuration files handled by hstnalloc.config.
"""
import json

import numpy as np
import pytest

from hstnalloc.config import (
    ConfigError,
    experiment_from_dict,
    load_experiment_file,
    load_json,
    load_scenario_file,
    parse_scenario_file,
    parse_seed,
    scenario_file_dict,
    scenario_from_dict,
    scenario_to_dict,
    write_json,
)
from hstnalloc.experiments import OutputFormat, Scheme, SweepParameter
from hstnalloc.scenario import ScenarioConfig, sample_deployment


def test_scenario_defaults():
    """
    Ensure that an empty scenario yields the default configuration.
    """
    cfg = scenario_from_dict({})
    default = ScenarioConfig()
    assert cfg.n_bs == default.n_bs
    assert cfg.n_pairs == default.n_pairs
    assert np.allclose(cfg.leakage_threshold, default.leakage_threshold)
    assert np.allclose(cfg.suppression, default.suppression)


def test_scenario_units():
    """
    Ensure that powers are converted from dBm and the suppression from dB.
    """
    cfg = scenario_from_dict(
        {
            "n_pairs": 2,
            "power_budget_dbm": 20.0,
            "leakage_threshold_dbm": [-120.0, -110.0],
            "suppression_db": -20,
            "noise_power_dbm": 0,
        }
    )
    assert np.allclose(cfg.power_budget, [100.0, 100.0])
    assert np.allclose(cfg.leakage_threshold, [1e-12, 1e-11])
    assert np.allclose(cfg.suppression, 0.1)
    assert cfg.noise_power == pytest.approx(1.0)

    cfg = scenario_from_dict({"n_pairs": 2, "sat_interference_dbm": [[0, 10], [20, 30]]})
    assert np.allclose(cfg.sat_interference, [[1.0, 10.0], [100.0, 1000.0]])


def test_scenario_invalid():
    """
    Ensure that invalid scenarios are rejected naming the offending key.
    """
    with pytest.raises(ConfigError, match="'n_users'"):
        scenario_from_dict({"n_users": 3})
    with pytest.raises(ConfigError, match="'n_bs'"):
        scenario_from_dict({"n_bs": 0})
    with pytest.raises(ConfigError, match="'n_bs'"):
        scenario_from_dict({"n_bs": 2.5})
    with pytest.raises(ConfigError, match="'n_bs'"):
        scenario_from_dict({"n_bs": True})
    with pytest.raises(ConfigError, match="'shadow_std_db'"):
        scenario_from_dict({"shadow_std_db": "8"})
    with pytest.raises(ConfigError, match="'include_suppression_in_leakage'"):
        scenario_from_dict({"include_suppression_in_leakage": 1})
    with pytest.raises(ConfigError, match="'suppression_db'"):
        scenario_from_dict({"suppression_db": 10.0})
    with pytest.raises(ConfigError, match="'power_budget_dbm'"):
        scenario_from_dict({"n_pairs": 3, "power_budget_dbm": [10.0, 20.0]})
    with pytest.raises(ConfigError, match="'leakage_threshold_dbm'"):
        scenario_from_dict({"leakage_threshold_dbm": [[1.0], [1.0, 2.0]]})
    with pytest.raises(ConfigError, match="'satellite_region_m'"):
        scenario_from_dict({"satellite_region_m": [0, 0, 100]})
    with pytest.raises(ConfigError, match="'satellite_region_m'"):
        scenario_from_dict({"satellite_region_m": [0, 0, 0, 100]})
    with pytest.raises(ConfigError):
        scenario_from_dict([1, 2, 3])


def test_scenario_round_trip():
    """
    Ensure that scenarios are recovered from their file representation.
    """
    cfg = ScenarioConfig(
        n_bs=2,
        n_pairs=2,
        power_budget=[10.0, 100.0],
        leakage_threshold=1e-12,
        include_suppression_in_leakage=False,
    )
    data = scenario_to_dict(cfg)
    assert data["power_budget_dbm"] == pytest.approx([10.0, 20.0])
    assert data["leakage_threshold_dbm"] == pytest.approx(-120.0)
    assert data["suppression_db"] == pytest.approx(-20.0)

    recovered = scenario_from_dict(json.loads(json.dumps(data)))
    assert recovered.n_bs == 2
    assert np.allclose(recovered.power_budget, cfg.power_budget)
    assert np.allclose(recovered.leakage_threshold, cfg.leakage_threshold)
    assert np.allclose(recovered.sat_interference, cfg.sat_interference)
    assert np.allclose(recovered.suppression, cfg.suppression)
    assert not recovered.include_suppression_in_leakage
    assert recovered.terrestrial_region == cfg.terrestrial_region


def test_parse_seed():
    """
    Ensure that only non-negative 64-bit integers are accepted as seeds.
    """
    assert parse_seed(0) == 0
    assert parse_seed(2 ** 64 - 1) == 2 ** 64 - 1
    for value in [-1, 2 ** 64, 1.5, "1", True]:
        with pytest.raises(ConfigError, match="'seed'"):
            parse_seed(value)


def test_load_json(tmp_path):
    """
    Ensure that missing and malformed files raise a ConfigError.
    """
    with pytest.raises(ConfigError):
        load_json(tmp_path / "missing.json")
    path = tmp_path / "broken.json"
    path.write_text("{'n_bs': 3")
    with pytest.raises(ConfigError):
        load_json(path)

    path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "data.json")
    assert load_json(path) == {"a": [1, 2], "b": 1}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')


def test_scenario_file(tmp_path):
    """
    Ensure that scenario files with and without large-scale state are
    parsed.
    """
    cfg = ScenarioConfig(n_bs=2, n_pairs=2)
    geometry, large_scale = sample_deployment(cfg, 4)
    data = scenario_file_dict(cfg, 4, geometry, large_scale)
    path = write_json(data, tmp_path / "scenario.json")

    loaded, seed, loaded_geometry, loaded_ls = load_scenario_file(path)
    assert seed == 4
    assert loaded.n_pairs == 2
    assert np.array_equal(loaded_geometry.bs_positions, geometry.bs_positions)
    assert np.array_equal(loaded_geometry.sat_mt_positions, geometry.sat_mt_positions)
    assert np.allclose(loaded_ls.terr_gain, large_scale.terr_gain, rtol=1e-15)
    assert np.allclose(loaded_ls.sat_gain, large_scale.sat_gain, rtol=1e-15)

    loaded, seed, loaded_geometry, loaded_ls = parse_scenario_file({"n_bs": 3})
    assert loaded.n_bs == 3
    assert seed is None
    assert loaded_geometry is None
    assert loaded_ls is None

    data["scenario"]["n_bs"] = 3
    with pytest.raises(ConfigError, match="'geometry'"):
        parse_scenario_file(data)
    del data["geometry"]
    with pytest.raises(ConfigError, match="'large_scale'"):
        parse_scenario_file(data)
    with pytest.raises(ConfigError, match="'comment'"):
        parse_scenario_file({"scenario": {}, "comment": "x"})
    with pytest.raises(ConfigError):
        parse_scenario_file([])


def test_scenario_file_geometry_only():
    """
    Ensure that a scenario file holding only a geometry yields the geometry
    and that the deployment drawn for it from the stored seed equals the
    full deployment of that seed.
    """
    cfg = ScenarioConfig(n_bs=3, n_pairs=2)
    geometry, large_scale = sample_deployment(cfg, 9)
    data = json.loads(json.dumps(scenario_file_dict(cfg, 9, geometry)))
    assert "large_scale" not in data

    loaded, seed, loaded_geometry, loaded_ls = parse_scenario_file(data)
    assert loaded_ls is None
    assert loaded_geometry.n_bs == 3
    assert loaded_geometry.n_pairs == 2
    assert np.array_equal(loaded_geometry.terr_mt_positions, geometry.terr_mt_positions)

    _, derived = sample_deployment(loaded, seed, loaded_geometry)
    assert np.array_equal(derived.terr_gain, large_scale.terr_gain)
    assert np.array_equal(derived.sat_gain, large_scale.sat_gain)


def test_scenario_file_geometry_errors():
    """
    Ensure that malformed geometries and geometries that disagree with the
    scenario or the stored large-scale state are rejected.
    """
    cfg = ScenarioConfig(n_bs=2, n_pairs=2)
    geometry, large_scale = sample_deployment(cfg, 5)
    data = json.loads(json.dumps(scenario_file_dict(cfg, 5, geometry, large_scale)))
    parse_scenario_file(data)

    data["seed"] = 6
    with pytest.raises(ConfigError, match="'seed'"):
        parse_scenario_file(data)
    del data["seed"]
    parse_scenario_file(data)

    short = json.loads(json.dumps(data))
    short["geometry"]["bs_positions_m"] = short["geometry"]["bs_positions_m"][:1]
    with pytest.raises(ConfigError, match="'geometry'"):
        parse_scenario_file(short)

    uneven = json.loads(json.dumps(data))
    uneven["geometry"]["sat_mt_positions_m"].append([2_500.0, 100.0])
    with pytest.raises(ConfigError, match="'geometry'"):
        parse_scenario_file(uneven)

    infinite = json.loads(json.dumps(data))
    infinite["geometry"]["bs_positions_m"][0] = [float("inf"), 0.0]
    with pytest.raises(ConfigError, match="bs_positions_m"):
        parse_scenario_file(infinite)


def test_experiment_from_dict():
    """
    Ensure that experiment settings are parsed.
    """
    spec = experiment_from_dict({})
    assert spec.trials == 50
    assert spec.schemes == tuple(Scheme)
    assert spec.output_format == OutputFormat.CSV

    spec = experiment_from_dict(
        {
            "scenario": {"n_pairs": 2},
            "seed": 7,
            "sweep": {"parameter": "leak_threshold", "values_dbm": [-120, -110]},
            "schemes": ["proposed", "equal_power"],
            "trials": 3,
            "mc_validation": {"enabled": True, "n_samples": 1000},
            "record_timing": True,
            "output_format": "netcdf",
        }
    )
    assert spec.scenario.n_pairs == 2
    assert spec.seed == 7
    assert spec.sweep_parameter == SweepParameter.LEAK_THRESHOLD
    assert spec.sweep_values_dbm == (-120.0, -110.0)
    assert spec.schemes == (Scheme.PROPOSED, Scheme.EQUAL_POWER)
    assert spec.trials == 3
    assert spec.mc_validation
    assert spec.mc_samples == 1000
    assert spec.record_timing
    assert spec.output_format == OutputFormat.NETCDF


def test_experiment_invalid():
    """
    Ensure that invalid experiment settings are rejected naming the
    offending key.
    """
    with pytest.raises(ConfigError, match="'repeats'"):
        experiment_from_dict({"repeats": 3})
    with pytest.raises(ConfigError, match="'parameter'"):
        experiment_from_dict({"sweep": {"parameter": "noise"}})
    with pytest.raises(ConfigError, match="'values_dbm'"):
        experiment_from_dict({"sweep": {"values_dbm": [10, 0]}})
    with pytest.raises(ConfigError, match="'values_dbm'"):
        experiment_from_dict({"sweep": {"values_dbm": []}})
    with pytest.raises(ConfigError, match="'schemes'"):
        experiment_from_dict({"schemes": ["optimal"]})
    with pytest.raises(ConfigError, match="'trials'"):
        experiment_from_dict({"trials": 0})
    with pytest.raises(ConfigError, match="'n_samples'"):
        experiment_from_dict({"mc_validation": {"n_samples": 0}})
    with pytest.raises(ConfigError, match="'output_format'"):
        experiment_from_dict({"output_format": "hdf5"})
    with pytest.raises(ConfigError, match="exhaustive"):
        experiment_from_dict({"scenario": {"n_pairs": 9}})


def test_experiment_scenario_path(tmp_path):
    """
    Ensure that a scenario given as path is resolved relative to the
    experiment file.
    """
    write_json(
        scenario_file_dict(ScenarioConfig(n_bs=2, n_pairs=2)),
        tmp_path / "scenario.json",
    )
    path = write_json(
        {"scenario": "scenario.json", "trials": 1}, tmp_path / "experiment.json"
    )
    spec = load_experiment_file(path)
    assert spec.scenario.n_bs == 2
    assert spec.trials == 1

    path = write_json({"scenario": "missing.json"}, tmp_path / "experiment.json")
    with pytest.raises(ConfigError):
        load_experiment_file(path)
