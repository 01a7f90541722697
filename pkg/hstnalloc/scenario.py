"""
hstnalloc.scenario
==================

Static problem data of the spectrum-sharing scenario: unit conversions,
the scenario configuration, random deployments of BSs and mobile terminals
and the large-scale fading derived from them.

All quantities are kept in linear scale internally: powers in mW and channel
gains as amplitudes. Conversions from and to dB(m) only happen at the I/O
boundaries.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np

LOGGER = logging.getLogger(__name__)

#: Reference distance of the path-loss model in meters.
REFERENCE_DISTANCE = 100.0
#: Minimum distance between BSs and mobile terminals in meters.
MIN_DISTANCE = 10.0
#: Power of the satellite-MT array suppression factor in dB.
SUPPRESSION_DB = -20.0
#: Noise power in dBm.
NOISE_POWER_DBM = -107.0
#: Leakage-interference threshold in dBm.
LEAKAGE_THRESHOLD_DBM = -117.0

# Maximum number of redraws when enforcing the minimum BS-MT distance.
_MAX_REDRAWS = 1_000


def dbm_to_mw(x):
    """
    Convert power from dBm to mW.

    Args:
        x: Scalar or array of powers in dBm.

    Return:
        The corresponding powers in mW.
    """
    return 10.0 ** (np.asarray(x, dtype=np.float64) / 10.0)


def mw_to_dbm(x):
    """
    Convert power from mW to dBm.

    Args:
        x: Scalar or array of positive powers in mW.

    Return:
        The corresponding powers in dBm.
    """
    return 10.0 * np.log10(np.asarray(x, dtype=np.float64))


def db_to_linear(x):
    """Convert a power ratio from dB to linear scale."""
    return dbm_to_mw(x)


def linear_to_db(x):
    """Convert a linear power ratio to dB."""
    return mw_to_dbm(x)


@dataclass(frozen=True)
class Region:
    """
    An axis-aligned rectangle in which nodes are deployed.

    Attributes:
        x_min: Lower x-coordinate in meters.
        y_min: Lower y-coordinate in meters.
        x_max: Upper x-coordinate in meters.
        y_max: Upper y-coordinate in meters.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        bounds = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not np.all(np.isfinite(bounds)):
            raise ValueError("Region bounds must be finite.")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError(
                f"Region {bounds} is degenerate. 'x_max' and 'y_max' must "
                "exceed 'x_min' and 'y_min', respectively."
            )

    def sample(self, n, rng):
        """
        Draw 'n' points uniformly from the region.

        Args:
            n: The number of points.
            rng: A numpy Generator to draw the points from.

        Return:
            An array of shape ``(n, 2)``.
        """
        low = np.array([self.x_min, self.y_min])
        high = np.array([self.x_max, self.y_max])
        return rng.uniform(low, high, size=(n, 2))

    def to_list(self):
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def _default_terrestrial_region():
    return Region(0.0, 0.0, 2_000.0, 2_000.0)


def _default_satellite_region():
    return Region(2_000.0, 0.0, 4_000.0, 2_000.0)


def _as_vector(value, size, name):
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise ValueError(
            f"'{name}' must be a scalar or have length {size}, not shape "
            f"{arr.shape}."
        )
    return arr


def _as_matrix(value, size, name):
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full((size, size), float(arr))
    elif arr.ndim == 1 and arr.shape == (size,):
        # One value per terrestrial MT, identical on all channels.
        arr = np.repeat(arr[:, None], size, axis=1)
    if arr.shape != (size, size):
        raise ValueError(
            f"'{name}' must be a scalar, have length {size} or shape "
            f"({size}, {size}), not shape {arr.shape}."
        )
    return arr


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """
    All static parameters of the spectrum-sharing problem.

    Scalar values given for per-user or per-channel quantities are broadcast
    to the required shape.

    Attributes:
        n_bs: The number of terrestrial BSs N.
        n_pairs: The number K of channels, terrestrial MTs and satellite MTs.
        n_antennas: The number M of antennas of each terrestrial MT.
        noise_power: The noise power in mW.
        power_budget: Per-user transmit power budgets in mW, length K.
        leakage_threshold: Per-channel leakage thresholds in mW, length K.
        sat_interference: Satellite-to-terrestrial-MT interference in mW,
            shape (K, K) indexed by user and channel.
        suppression: Per-channel amplitude suppression factors ν in (0, 1].
        path_loss_exponent: The path-loss exponent α.
        shadow_std_db: Standard deviation of the log-normal shadowing in dB.
        reference_distance: Reference distance of the path-loss model in m.
        min_distance: Minimum BS-MT distance in m.
        include_suppression_in_leakage: Whether ν² is applied to the leakage
            coefficients of the power constraints.
        terrestrial_region: Deployment region of BSs and terrestrial MTs.
        satellite_region: Deployment region of the satellite MTs.
    """

    n_bs: int = 4
    n_pairs: int = 3
    n_antennas: int = 4
    noise_power: float = float(dbm_to_mw(NOISE_POWER_DBM))
    power_budget: np.ndarray = 1.0
    leakage_threshold: np.ndarray = float(dbm_to_mw(LEAKAGE_THRESHOLD_DBM))
    sat_interference: np.ndarray = None
    suppression: np.ndarray = float(np.sqrt(db_to_linear(SUPPRESSION_DB)))
    path_loss_exponent: float = 4.0
    shadow_std_db: float = 8.0
    reference_distance: float = REFERENCE_DISTANCE
    min_distance: float = MIN_DISTANCE
    include_suppression_in_leakage: bool = True
    terrestrial_region: Region = field(default_factory=_default_terrestrial_region)
    satellite_region: Region = field(default_factory=_default_satellite_region)

    def __post_init__(self):
        for name in ["n_bs", "n_pairs", "n_antennas"]:
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"'{name}' must be a positive integer.")
            object.__setattr__(self, name, int(value))

        k = self.n_pairs
        if self.noise_power < 0 or not np.isfinite(self.noise_power):
            raise ValueError("'noise_power' must be non-negative and finite.")
        object.__setattr__(self, "noise_power", float(self.noise_power))

        sat_interference = self.sat_interference
        if sat_interference is None:
            sat_interference = self.noise_power

        arrays = {
            "power_budget": _as_vector(self.power_budget, k, "power_budget"),
            "leakage_threshold": _as_vector(
                self.leakage_threshold, k, "leakage_threshold"
            ),
            "sat_interference": _as_matrix(sat_interference, k, "sat_interference"),
            "suppression": _as_vector(self.suppression, k, "suppression"),
        }
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"'{name}' must be finite.")
            if np.any(arr < 0):
                raise ValueError(f"'{name}' must be non-negative.")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        if np.any(self.suppression <= 0) or np.any(self.suppression > 1):
            raise ValueError("'suppression' must lie within (0, 1].")
        if np.any(self.sat_interference + self.noise_power <= 0):
            raise ValueError(
                "'sat_interference' and 'noise_power' must not both be zero."
            )
        if not self.path_loss_exponent > 0:
            raise ValueError("'path_loss_exponent' must be positive.")
        if self.shadow_std_db < 0:
            raise ValueError("'shadow_std_db' must be non-negative.")
        if not 0 < self.min_distance <= self.reference_distance:
            raise ValueError(
                "'min_distance' must be positive and must not exceed "
                "'reference_distance'."
            )

    def with_power_budget(self, power_budget):
        """Return a copy with the given power budget in mW."""
        return replace(self, power_budget=power_budget)

    def with_leakage_threshold(self, leakage_threshold):
        """Return a copy with the given leakage threshold in mW."""
        return replace(self, leakage_threshold=leakage_threshold)


@dataclass(frozen=True, eq=False)
class Geometry:
    """
    Node positions of a deployment in meters.

    Attributes:
        bs_positions: Array of shape (N, 2).
        terr_mt_positions: Array of shape (K, 2).
        sat_mt_positions: Array of shape (K, 2).
    """

    bs_positions: np.ndarray
    terr_mt_positions: np.ndarray
    sat_mt_positions: np.ndarray

    def __post_init__(self):
        for name in ["bs_positions", "terr_mt_positions", "sat_mt_positions"]:
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != 2:
                raise ValueError(f"'{name}' must have shape (n, 2), not {arr.shape}.")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"'{name}' must be finite.")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.terr_mt_positions.shape != self.sat_mt_positions.shape:
            raise ValueError(
                "'terr_mt_positions' and 'sat_mt_positions' must hold the same "
                "number of terminals."
            )

    @property
    def n_bs(self):
        return self.bs_positions.shape[0]

    @property
    def n_pairs(self):
        return self.terr_mt_positions.shape[0]


@dataclass(frozen=True, eq=False)
class LargeScaleState:
    """
    Large-scale fading amplitudes of a deployment.

    Attributes:
        terr_gain: Array of shape (K, K, N) holding the amplitude gain from BS n
            to terrestrial MT i on channel j at index [i, j, n].
        sat_gain: Array of shape (K, N) holding the amplitude gain from BS n
            to the satellite MT of channel j at index [j, n].
    """

    terr_gain: np.ndarray
    sat_gain: np.ndarray

    def __post_init__(self):
        terr_gain = np.array(self.terr_gain, dtype=np.float64)
        sat_gain = np.array(self.sat_gain, dtype=np.float64)
        if terr_gain.ndim != 3 or terr_gain.shape[0] != terr_gain.shape[1]:
            raise ValueError("'terr_gain' must have shape (K, K, N).")
        if sat_gain.shape != (terr_gain.shape[1], terr_gain.shape[2]):
            raise ValueError("'sat_gain' must have shape (K, N).")
        for name, arr in [("terr_gain", terr_gain), ("sat_gain", sat_gain)]:
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"All entries of '{name}' must be positive and finite.")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_pairs(self):
        return self.terr_gain.shape[0]

    @property
    def n_bs(self):
        return self.terr_gain.shape[2]


def _distances(a, b):
    """Euclidean distances between all rows of 'a' and 'b'."""
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def _sample_terminals(region, n, bs_positions, min_distance, rng):
    """
    Sample terminal positions uniformly from 'region', redrawing terminals
    that fall within 'min_distance' of any BS.
    """
    positions = region.sample(n, rng)
    for _ in range(_MAX_REDRAWS):
        too_close = np.any(_distances(positions, bs_positions) < min_distance, axis=1)
        if not too_close.any():
            break
        positions[too_close] = region.sample(int(too_close.sum()), rng)
    else:
        LOGGER.warning(
            "Could not place all terminals at least %s m from the BSs; the "
            "distances will be clamped.",
            min_distance,
        )
    return positions


def sample_geometry(cfg, rng, terrestrial_region=None, satellite_region=None):
    """
    Draw a random deployment.

    BSs and terrestrial MTs are distributed uniformly over the terrestrial
    region and satellite MTs uniformly over the satellite region. Terminals
    closer than ``cfg.min_distance`` to any BS are redrawn.

    Args:
        cfg: The ScenarioConfig describing the system.
        rng: A numpy Generator used for all random draws.
        terrestrial_region: Optional Region overriding
            ``cfg.terrestrial_region``.
        satellite_region: Optional Region overriding ``cfg.satellite_region``.

    Return:
        A Geometry object.
    """
    if terrestrial_region is None:
        terrestrial_region = cfg.terrestrial_region
    if satellite_region is None:
        satellite_region = cfg.satellite_region

    bs_positions = terrestrial_region.sample(cfg.n_bs, rng)
    terr_mt_positions = _sample_terminals(
        terrestrial_region, cfg.n_pairs, bs_positions, cfg.min_distance, rng
    )
    sat_mt_positions = _sample_terminals(
        satellite_region, cfg.n_pairs, bs_positions, cfg.min_distance, rng
    )
    return Geometry(
        bs_positions=bs_positions,
        terr_mt_positions=terr_mt_positions,
        sat_mt_positions=sat_mt_positions,
    )


def large_scale_gain(distance, path_loss_exponent, shadowing_db, reference_distance):
    """
    Amplitude gain of the path-loss and shadowing model.

    The squared amplitude is ``(d / d_ref) ** -alpha * 10 ** (X / 10)`` with
    X the shadowing in dB.

    Args:
        distance: Link distances in meters.
        path_loss_exponent: The path-loss exponent alpha.
        shadowing_db: Shadowing realizations in dB.
        reference_distance: The reference distance d_ref in meters.

    Return:
        The amplitude gains.
    """
    distance = np.asarray(distance, dtype=np.float64)
    log_gain = (
        -path_loss_exponent * np.log10(distance / reference_distance)
        + np.asarray(shadowing_db) / 10.0
    )
    return 10.0 ** (0.5 * log_gain)


def derive_large_scale(geom, cfg, rng):
    """
    Draw the large-scale fading state of a deployment.

    Shadowing is drawn independently for every link, that is for every
    (user, channel, BS) triple of the terrestrial links and every
    (channel, BS) pair of the links to the satellite MTs. Distances below
    ``cfg.min_distance`` are clamped.

    Args:
        geom: The Geometry of the deployment.
        cfg: The ScenarioConfig.
        rng: A numpy Generator used to draw the shadowing.

    Return:
        A LargeScaleState object.
    """
    k, n = cfg.n_pairs, cfg.n_bs
    if geom.n_pairs != k or geom.n_bs != n:
        raise ValueError(
            f"Geometry with {geom.n_bs} BSs and {geom.n_pairs} terminal pairs does "
            f"not match the scenario with {n} BSs and {k} pairs."
        )
    d_terr = np.maximum(
        _distances(geom.terr_mt_positions, geom.bs_positions), cfg.min_distance
    )
    d_sat = np.maximum(
        _distances(geom.sat_mt_positions, geom.bs_positions), cfg.min_distance
    )
    shadow_terr = rng.normal(0.0, cfg.shadow_std_db, size=(k, k, n))
    shadow_sat = rng.normal(0.0, cfg.shadow_std_db, size=(k, n))

    terr_gain = large_scale_gain(
        d_terr[:, None, :], cfg.path_loss_exponent, shadow_terr, cfg.reference_distance
    )
    sat_gain = large_scale_gain(
        d_sat, cfg.path_loss_exponent, shadow_sat, cfg.reference_distance
    )
    return LargeScaleState(terr_gain=terr_gain, sat_gain=sat_gain)


def sample_deployment(cfg, seed, geometry=None):
    """
    Draw geometry and large-scale fading from a single seed.

    The geometry and the shadowing use independent streams spawned from
    the seed, so that passing the geometry drawn from a seed together with
    the same seed reproduces the full deployment.

    Args:
        cfg: The ScenarioConfig.
        seed: An integer or numpy SeedSequence.
        geometry: Optional Geometry to use instead of drawing one. Only the
            shadowing is drawn in this case.

    Return:
        A tuple ``(geometry, large_scale)``.
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    # Same children as seed.spawn(2) of a fresh sequence, without advancing
    # the spawn counter of 'seed'.
    geometry_seed, shadowing_seed = [
        np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (ind,))
        for ind in range(2)
    ]
    if geometry is None:
        geometry = sample_geometry(cfg, np.random.default_rng(geometry_seed))
    large_scale = derive_large_scale(
        geometry, cfg, np.random.default_rng(shadowing_seed)
    )
    return geometry, large_scale


def default_scenario(power_budget_dbm=20.0):
    """
    The scenario of the reference simulation setup: N = 4 BSs, K = 3 pairs,
    M = 4 antennas, path-loss exponent 4, 8 dB shadowing, -20 dB
    suppression, -107 dBm noise and -117 dBm leakage threshold.

    Args:
        power_budget_dbm: The per-user power budget in dBm.
    """
    return ScenarioConfig(power_budget=float(dbm_to_mw(power_budget_dbm)))
