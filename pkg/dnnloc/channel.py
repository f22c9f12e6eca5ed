"""
Multipath components and the frequency-domain channel response.

Each traced path becomes one MPC (power, delay, phase, angles at the BS). The
response at subcarrier k and BS antenna m sums every MPC's contribution with a
uniform-linear-array steering vector:

    h[k, m] = sum_l sqrt(rho_l / K) * exp(j(theta_l + 2 pi k tau_l B / K)) * a_l[m]

with rho_l the MPC power in milliwatts.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .config import ELEMENT_SPACING_WAVELENGTHS, GEOM_TOL, NUM_ANTENNAS, NUM_SUBCARRIERS, SPEED_OF_LIGHT
from .errors import ConfigError, GeometryError
from .scene import Point2D, RayPath, Scene

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Mpc:
    rss_dbm: float
    toa_s: float
    phase_rad: float
    aoa_az_rad: float
    aoa_el_rad: float = 0.0


@dataclass(frozen=True)
class ChannelConfig:
    num_antennas: int = NUM_ANTENNAS
    num_subcarriers: int = NUM_SUBCARRIERS
    bandwidth_hz: float = 500e6
    carrier_frequency_hz: float = 28e9
    element_spacing_wavelengths: float = ELEMENT_SPACING_WAVELENGTHS

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ConfigError("num_antennas must be >= 1")
        if self.num_subcarriers < 1:
            raise ConfigError("num_subcarriers must be >= 1")
        if not self.bandwidth_hz > 0 or not self.carrier_frequency_hz > 0:
            raise ConfigError("bandwidth and carrier frequency must be positive")
        if not self.element_spacing_wavelengths > 0:
            raise ConfigError("element spacing must be positive")

    @classmethod
    def for_scene(cls, scene: Scene, num_antennas: int = NUM_ANTENNAS,
                  num_subcarriers: int = NUM_SUBCARRIERS) -> "ChannelConfig":
        return cls(num_antennas=num_antennas, num_subcarriers=num_subcarriers,
                   bandwidth_hz=scene.bandwidth_hz,
                   carrier_frequency_hz=scene.carrier_frequency_hz)


# ==============================================================================
# PATH -> MPC
# ==============================================================================

def fspl_db(distance_m: float, frequency_hz: float) -> float:
    """Free-space path loss, 20 log10(4 pi d f / c)."""
    return 20.0 * math.log10(4.0 * math.pi * distance_m * frequency_hz / SPEED_OF_LIGHT)


def wrap_phase(phase: float) -> float:
    """Map any angle into [0, 2pi)."""
    wrapped = math.fmod(phase, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


def wrap_azimuth(angle: float) -> float:
    """Map atan2 output into (-pi, pi]."""
    return math.pi if angle <= -math.pi else angle


def path_to_mpc(path: RayPath, scene: Scene, bs: Point2D) -> Mpc:
    if path.length_m <= GEOM_TOL or len(path.vertices) < 2:
        raise GeometryError("zero-length path")
    bs = Point2D(*bs)
    first = path.vertices[1]
    dx, dy = first.x - bs.x, first.y - bs.y
    if math.hypot(dx, dy) <= GEOM_TOL:
        raise GeometryError("path leaves the base station with a zero-length segment")

    toa = path.length_m / SPEED_OF_LIGHT
    rss = (scene.tx_power_dbm
           - fspl_db(path.length_m, scene.carrier_frequency_hz)
           - path.bounce_count * scene.reflection_loss_db)
    # fractional cycles first, so large f*tau products keep their precision
    cycles = scene.carrier_frequency_hz * path.length_m / SPEED_OF_LIGHT
    phase = wrap_phase(-TWO_PI * (cycles - math.floor(cycles)))
    return Mpc(
        rss_dbm=rss,
        toa_s=toa,
        phase_rad=phase,
        aoa_az_rad=wrap_azimuth(math.atan2(dy, dx)),
        aoa_el_rad=0.0,
    )


# ==============================================================================
# ARRAY RESPONSE
# ==============================================================================

def steering_vector(config: ChannelConfig, aoa_az: float, aoa_el: float) -> np.ndarray:
    m = np.arange(config.num_antennas)
    return np.exp(1j * TWO_PI * config.element_spacing_wavelengths * m
                  * math.sin(aoa_az) * math.cos(aoa_el))


def channel_response(mpcs: Sequence[Mpc], config: ChannelConfig) -> np.ndarray:
    """Complex K x M matrix, subcarriers by antennas."""
    if len(mpcs) == 0:
        raise ConfigError("channel_response needs at least one MPC")
    K = config.num_subcarriers
    rss = np.array([p.rss_dbm for p in mpcs], dtype=float)
    theta = np.array([p.phase_rad for p in mpcs], dtype=float)
    tau = np.array([p.toa_s for p in mpcs], dtype=float)
    az = np.array([p.aoa_az_rad for p in mpcs], dtype=float)
    el = np.array([p.aoa_el_rad for p in mpcs], dtype=float)

    amplitude = np.sqrt(10.0 ** (rss / 10.0) / K)
    k = np.arange(K)
    # (L, K) per-subcarrier phase rotation
    rotation = np.exp(1j * (theta[:, None] + TWO_PI * k[None, :] * tau[:, None] * config.bandwidth_hz / K))
    m = np.arange(config.num_antennas)
    # (L, M) steering vectors
    steering = np.exp(1j * TWO_PI * config.element_spacing_wavelengths * m[None, :]
                      * (np.sin(az) * np.cos(el))[:, None])
    return np.einsum("lk,lm->km", amplitude[:, None] * rotation, steering)


def mpcs_for_paths(paths: List[RayPath], scene: Scene, bs: Point2D) -> List[Mpc]:
    return [path_to_mpc(p, scene, bs) for p in paths]
