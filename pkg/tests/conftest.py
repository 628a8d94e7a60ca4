import numpy as np
import pytest

from fleetbalance.generate import GeneratorConfig, generate_instance
from fleetbalance.network import StationNetwork


def build_two_station(f_01: float = 1.0) -> StationNetwork:
    """Hand-checkable 2-station network: station 0 sheds 0.3 vehicles per unit time.

    With f_01=1 the driver-return program is feasible (cap 0.4 >= 0.3);
    with f_01=0.5 it is not (cap 0.2 < 0.3).
    """
    f = np.array([[0.0, f_01], [1.0, 0.0]])
    return StationNetwork(
        n=2,
        arrival_rate=np.array([0.4, 0.1]),
        service_rate=np.array([0.8, 0.2]),
        dest_prob=np.array([[0.0, 1.0], [1.0, 0.0]]),
        travel_time=np.array([[0.0, 10.0], [10.0, 0.0]]),
        taxi_fraction=f,
    )


@pytest.fixture
def two_station() -> StationNetwork:
    return build_two_station()


@pytest.fixture
def two_station_tight() -> StationNetwork:
    return build_two_station(f_01=0.5)


@pytest.fixture
def make_instance():
    """Factory for random instances with the default generator settings."""

    def build(n: int, seed: int, **config_kwargs) -> StationNetwork:
        return generate_instance(n, seed, GeneratorConfig(**config_kwargs))

    return build
