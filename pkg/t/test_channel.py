import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dnnloc.channel import (ChannelConfig, Mpc, channel_response, fspl_db, mpcs_for_paths, path_to_mpc,
                            steering_vector)
from dnnloc.config import SPEED_OF_LIGHT
from dnnloc.errors import ConfigError, GeometryError
from dnnloc.scene import Point2D, RayPath, build_grid, trace_paths


def _mpc(rss=0.0, toa=1e-8, phase=0.0, az=0.0):
    return Mpc(rss_dbm=rss, toa_s=toa, phase_rad=phase, aoa_az_rad=az, aoa_el_rad=0.0)


class TestPathToMpc:
    def test_los_toa_and_angle(self, free_space):
        path = trace_paths(free_space, Point2D(0, 0), Point2D(3, 4))[0]
        mpc = path_to_mpc(path, free_space, Point2D(0, 0))
        assert mpc.toa_s == pytest.approx(5.0 / SPEED_OF_LIGHT)
        assert mpc.toa_s == pytest.approx(1.6678e-8, rel=1e-4)
        assert mpc.aoa_az_rad == pytest.approx(math.atan2(4, 3))
        assert mpc.aoa_el_rad == 0.0

    def test_fspl_at_100m(self, make_scene):
        scene = make_scene(ue_grid={"origin": [100.0, 0.0], "rows": 1, "cols": 1, "spacing": 1.0})
        path = trace_paths(scene, Point2D(0, 0), Point2D(100, 0))[0]
        mpc = path_to_mpc(path, scene, Point2D(0, 0))
        assert mpc.rss_dbm == pytest.approx(-101.39, abs=0.01)
        assert mpc.rss_dbm == pytest.approx(-fspl_db(100.0, 28e9))

    def test_reflection_loss_and_arrival_direction(self, mirror_scene):
        bs = Point2D(0, 0)
        direct, reflected = trace_paths(mirror_scene, bs, Point2D(0, 4))
        m_direct = path_to_mpc(direct, mirror_scene, bs)
        m_reflected = path_to_mpc(reflected, mirror_scene, bs)
        expected = -fspl_db(math.sqrt(416.0), 28e9) - 6.0
        assert m_reflected.rss_dbm == pytest.approx(expected)
        assert m_reflected.rss_dbm < m_direct.rss_dbm
        # arrives from the reflection point (10, 2), not from the user
        assert m_reflected.aoa_az_rad == pytest.approx(math.atan2(2, 10))
        assert m_direct.aoa_az_rad == pytest.approx(math.pi / 2)

    def test_parameter_ranges(self, canyon_scene):
        bs = canyon_scene.base_stations[0]
        for _, ue in build_grid(canyon_scene):
            straight = math.hypot(ue.x - bs.x, ue.y - bs.y) / SPEED_OF_LIGHT
            for mpc in mpcs_for_paths(trace_paths(canyon_scene, bs, ue), canyon_scene, bs):
                assert 0.0 <= mpc.phase_rad < 2 * math.pi
                assert -math.pi < mpc.aoa_az_rad <= math.pi
                assert mpc.toa_s >= straight * (1 - 1e-12)
                assert mpc.rss_dbm <= canyon_scene.tx_power_dbm

    def test_fspl_monotone(self):
        assert fspl_db(10.0, 28e9) < fspl_db(11.0, 28e9)
        assert fspl_db(10.0, 5e9) < fspl_db(10.0, 28e9)

    def test_zero_length_path(self, free_space):
        path = RayPath((Point2D(0, 0), Point2D(0, 0)), 0.0)
        with pytest.raises(GeometryError):
            path_to_mpc(path, free_space, Point2D(0, 0))


class TestSteeringVector:
    def test_broadside(self):
        a = steering_vector(ChannelConfig(num_antennas=10), 0.0, 0.3)
        assert_allclose(a, np.ones(10))

    def test_endfire(self):
        a = steering_vector(ChannelConfig(num_antennas=2), math.pi / 2, 0.0)
        assert_allclose(a, [1.0, -1.0], atol=1e-12)

    def test_unit_modulus(self):
        rng = np.random.default_rng(0)
        cfg = ChannelConfig(num_antennas=16)
        for az, el in rng.uniform(-math.pi, math.pi, size=(20, 2)):
            assert_allclose(np.abs(steering_vector(cfg, az, el)), 1.0)


class TestChannelResponse:
    def test_single_path_modulus(self):
        cfg = ChannelConfig(num_antennas=3, num_subcarriers=4)
        h = channel_response([_mpc()], cfg)
        assert h.shape == (4, 3)
        assert_allclose(np.abs(h), 0.5)

    def test_single_subcarrier(self):
        cfg = ChannelConfig(num_antennas=4, num_subcarriers=1)
        mpc = _mpc(rss=-20.0, toa=3.3e-7, phase=1.1, az=0.4)
        h = channel_response([mpc], cfg)
        expected = math.sqrt(10 ** (-20.0 / 10)) * np.exp(1j * 1.1) * steering_vector(cfg, 0.4, 0.0)
        assert_allclose(h[0], expected, rtol=1e-12)

    def test_opposite_phases_cancel(self):
        cfg = ChannelConfig(num_antennas=5, num_subcarriers=8)
        a = _mpc(rss=-50.0, phase=0.3, az=0.2)
        b = _mpc(rss=-50.0, phase=0.3 + math.pi, az=0.2)
        h = channel_response([a, b], cfg)
        assert_allclose(h[0], 0.0, atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            channel_response([], ChannelConfig())

    def test_randomized_invariants(self, random_mpcs):
        rng = np.random.default_rng(11)
        cfg = ChannelConfig(num_antennas=10, num_subcarriers=16)
        for _ in range(100):
            first = random_mpcs(rng, int(rng.integers(1, 5)))
            second = random_mpcs(rng, int(rng.integers(1, 5)))
            joint = channel_response(first + second, cfg)
            split = channel_response(first, cfg) + channel_response(second, cfg)
            assert_allclose(joint, split, rtol=0, atol=1e-12 * max(1.0, np.abs(joint).max()))

            shifted = [Mpc(m.rss_dbm, m.toa_s, m.phase_rad + 2 * math.pi, m.aoa_az_rad, 0.0) for m in first]
            base = channel_response(first, cfg)
            assert_allclose(channel_response(shifted, cfg), base, rtol=0,
                            atol=1e-12 * max(1.0, np.abs(base).max()))

            single = first[0]
            rho = 10 ** (single.rss_dbm / 10)
            assert_allclose(np.abs(channel_response([single], cfg)) ** 2, rho / cfg.num_subcarriers,
                            rtol=1e-12)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ChannelConfig(num_antennas=0)
        with pytest.raises(ConfigError):
            ChannelConfig(num_subcarriers=0)
        with pytest.raises(ConfigError):
            ChannelConfig(bandwidth_hz=0.0)
