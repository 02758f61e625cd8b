import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from rotorbound.flatness import DEFAULT_DRAG
from rotorbound.trajectory import LoiterSpec, LoiterTrajectory

# Thread pools oversubscribe the small matrices used everywhere here.
_limits = threadpool_limits(limits=1)


@pytest.fixture(scope="session")
def loiter():
    spec = LoiterSpec(
        radius=30.0,
        speed=15.0,
        center=np.array([0.0, 0.0, -50.0]),
        entry_duration=6.0,
        total_duration=60.0,
    )
    return LoiterTrajectory(spec)


@pytest.fixture(scope="session")
def drag():
    return DEFAULT_DRAG


@pytest.fixture(scope="session")
def wind_sv():
    from rotorbound.plant import WindModel

    v = 7.0 / np.sqrt(2.0)
    return WindModel(v_w=np.array([v, -v, 0.0]), w_max=0.5, seed=2024)
