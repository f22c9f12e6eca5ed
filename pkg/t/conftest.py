import numpy as np
import pytest

from dnnloc.channel import Mpc
from dnnloc.presets import scene_from_dict


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-preset tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def scene_dict():
    """Factory for scene documents; keyword arguments override the defaults."""
    def make(**overrides):
        data = {
            "name": "test",
            "base_stations": [[0.0, 0.0]],
            "obstacles": [],
            "ue_grid": {"origin": [3.0, 4.0], "rows": 1, "cols": 1, "spacing": 1.0},
            "carrier_frequency_hz": 28e9,
            "bandwidth_hz": 500e6,
            "tx_power_dbm": 0.0,
            "max_reflection_order": 2,
            "reflection_loss_db": 6.0,
        }
        data.update(overrides)
        return data
    return make


@pytest.fixture
def make_scene(scene_dict):
    def make(**overrides):
        return scene_from_dict(scene_dict(**overrides))
    return make


@pytest.fixture
def free_space(make_scene):
    return make_scene()


@pytest.fixture
def mirror_scene(make_scene):
    """A 0.5 m thick wall whose west face is the line x = 10."""
    wall = [[10.0, -50.0], [10.5, -50.0], [10.5, 50.0], [10.0, 50.0]]
    return make_scene(obstacles=[wall], max_reflection_order=1,
                      ue_grid={"origin": [0.0, 4.0], "rows": 1, "cols": 1, "spacing": 1.0})


@pytest.fixture
def canyon_scene(make_scene):
    """Small street canyon: every user is LOS and sees both walls."""
    south = [[-10.0, -12.0], [40.0, -12.0], [40.0, -6.0], [-10.0, -6.0]]
    north = [[-10.0, 6.0], [40.0, 6.0], [40.0, 12.0], [-10.0, 12.0]]
    return make_scene(name="canyon", obstacles=[south, north],
                      ue_grid={"origin": [10.0, -4.0], "rows": 5, "cols": 8, "spacing": 1.0})


@pytest.fixture
def random_mpcs():
    def make(rng, count):
        return [Mpc(rss_dbm=float(rng.uniform(-120, -60)), toa_s=float(rng.uniform(1e-8, 5e-7)),
                    phase_rad=float(rng.uniform(0, 2 * np.pi)),
                    aoa_az_rad=float(rng.uniform(-np.pi, np.pi)), aoa_el_rad=0.0)
                for _ in range(count)]
    return make
