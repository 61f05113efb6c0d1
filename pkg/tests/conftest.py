import numpy as np
import pytest

from uavharvest import presets
from uavharvest.city import sample_los_probability
from uavharvest.offline import MissionConfig, bcd_optimize


@pytest.fixture(scope="session")
def urban():
    return presets.urban_channel()


@pytest.fixture(scope="session")
def sensors():
    return presets.preset_sensors()


@pytest.fixture(scope="session")
def mission_106():
    return MissionConfig.build(10.6, **presets.MISSION_DEFAULTS)


@pytest.fixture(scope="session")
def solution_106(mission_106, sensors, urban):
    """The reference-scenario offline solution, shared across test modules."""
    return bcd_optimize(mission_106, sensors, urban)


@pytest.fixture(scope="session")
def los_sweep_200():
    """200-city LoS sweep with the default city parameters (used by the
    monotonicity property and the channel-fit acceptance criterion)."""
    return sample_los_probability(presets.urban_city(), 200, seed=7)
