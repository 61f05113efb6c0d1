"""Shipped parameter presets for the urban data-harvesting scenario.

Only the urban environment has published logistic LoS parameters; it is the
single named channel preset. The mission preset reproduces the default
evaluation setup: a 300 m square area, straight west-to-east endpoints at the
minimum altitude, and 0.2 s slots induced by the discretization threshold.
The sensor layout is a fixed seeded random draw over the area (the reference
coordinates are unpublished), so figure shapes rather than exact curves are
the reproduction target.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelParams
from .city import CityParams


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


# Default number of sensors and seed of the shipped random layout (chosen so
# the four sensors spread over the area on both sides of the flight line,
# qualitatively matching the reference scenario).
DEFAULT_K = 4
SENSOR_LAYOUT_SEED = 987

AREA_SIDE = 300.0

# Flight-duration sweep (seconds) used by the evaluation harness.
DURATION_SWEEP = (10.6, 13.6, 16.6, 19.6, 22.6, 25.6)


def urban_channel(k: int = DEFAULT_K) -> ChannelParams:
    """Urban generalized-logistic LoS model plus link-budget constants."""
    return ChannelParams(
        logis_bias=-0.4568,
        logis_slope=0.0470,
        logis_offset=-0.63,
        logis_scale=1.63,
        ref_gain=db_to_linear(-60.0),
        nlos_atten=db_to_linear(-20.0),
        pathloss_los=2.5,
        pathloss_nlos=3.5,
        snr_gap=db_to_linear(8.2),
        noise_power=dbm_to_watts(-109.0),
        tx_power=(0.1,) * k,
    )


def urban_city() -> CityParams:
    """Manhattan-model defaults: 30 m cells, 30% built, Rayleigh(20) heights."""
    return CityParams(area_side=AREA_SIDE, grid_cell=30.0, built_fraction=0.3,
                      rayleigh_scale=20.0, height_cap=100.0)


MISSION_DEFAULTS = dict(
    q_start=(0.0, 150.0),
    q_end=(300.0, 150.0),
    z_start=50.0,
    z_end=50.0,
    v_xy_max=40.0,
    v_z_max=20.0,
    h_min=50.0,
    h_max=300.0,
    eps_max=0.16,      # yields 0.2 s slots for the duration sweep above
    eps_bcd=1e-3,
)


def preset_sensors(k: int = DEFAULT_K, seed: int = SENSOR_LAYOUT_SEED) -> np.ndarray:
    """Seeded uniform sensor layout over the preset square area, (k, 2)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, AREA_SIDE, size=(k, 2))
