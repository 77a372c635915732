"""Link gains and achievable rates for the four network tiers.

Gains are plain Python ``complex`` values.  Every random draw comes from a
caller-owned ``numpy.random.Generator``; the ``*_from_fading`` variants take
the draws explicitly so that an episode can hold its small-scale fading fixed
while nodes move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from .geometry import SPEED_OF_LIGHT

BOLTZMANN = 1.380649e-23


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class RfParams:
    rician_factor: float = 3.0
    pathloss_los: float = 2.0
    pathloss_nlos: float = 2.5
    tx_power_user_W: float = 0.1
    tx_power_uav_W: float = 1.0
    tx_power_sat_W: float = 1.0
    noise_power_W: float = 1e-13
    bandwidth_user_uav_Hz: float = 10e6
    bandwidth_uav_sat_Hz: float = 10e6
    bandwidth_isl_Hz: float = 1e9
    bandwidth_sat_cloud_Hz: float = 1e9
    beam_gain_linear: float = db_to_linear(25.0)
    carrier_freq_sat_Hz: float = 30e9
    wavelength_m: float = SPEED_OF_LIGHT / 1e9
    boltzmann: float = BOLTZMANN
    thermal_noise_K: float = 354.81
    isl_peak_gain_linear: float = 1e4
    max_doppler_Hz: float = 7455.9 * 30e9 / SPEED_OF_LIGHT
    sat_cloud_rician_factor: float = 10.0
    light_speed_mps: float = SPEED_OF_LIGHT

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.pathloss_nlos < self.pathloss_los:
            raise ValueError("pathloss_nlos must be >= pathloss_los")


def _complex_normal(rng: np.random.Generator, scale: float = 1.0) -> complex:
    """Zero-mean circularly symmetric Gaussian with variance ``scale**2``."""
    re, im = rng.standard_normal(2)
    return complex(re, im) * (scale / math.sqrt(2.0))


def _check_distance(dist_m: float) -> None:
    if not dist_m > 0:
        raise ValueError(f"distance must be positive, got {dist_m!r}")


def rician_from_fading(dist_m: float, los_phase: float, nlos: complex,
                       rician_factor: float, pathloss_los: float,
                       pathloss_nlos: float) -> complex:
    _check_distance(dist_m)
    k = rician_factor
    los = complex(math.cos(los_phase), math.sin(los_phase)) * dist_m ** (-pathloss_los / 2.0)
    scattered = nlos * dist_m ** (-pathloss_nlos / 2.0)
    return math.sqrt(k / (k + 1.0)) * los + math.sqrt(1.0 / (k + 1.0)) * scattered


def rician_gain(dist_m: float, rf: RfParams, rng: np.random.Generator,
                rician_factor: float | None = None) -> complex:
    """User-UAV (and satellite-cloud) Rician channel coefficient.

    ``rician_factor=math.inf`` gives the pure line-of-sight channel.
    """
    k = rf.rician_factor if rician_factor is None else rician_factor
    phase = rng.uniform(0.0, 2.0 * math.pi)
    nlos = _complex_normal(rng)
    if math.isinf(k):
        _check_distance(dist_m)
        return complex(math.cos(phase), math.sin(phase)) * dist_m ** (-rf.pathloss_los / 2.0)
    return rician_from_fading(dist_m, phase, nlos, k, rf.pathloss_los, rf.pathloss_nlos)


def _sinr_rate(bandwidth: float, power: float, own: int, gains, noise: float) -> float:
    g2 = np.abs(np.asarray(gains, dtype=complex)) ** 2
    signal = power * g2[own]
    interference = power * (g2.sum() - g2[own])
    return float(bandwidth * math.log2(1.0 + signal / (interference + noise)))


def uplink_rate_user_uav(m: int, gains, rf: RfParams) -> float:
    """Rate of user ``m`` towards one UAV.

    ``gains[a]`` is the channel of user ``a`` towards the same UAV; every
    other entry counts as interference.
    """
    return _sinr_rate(rf.bandwidth_user_uav_Hz, rf.tx_power_user_W, m, gains, rf.noise_power_W)


def outdated_correlation(delay_s: float, rf: RfParams) -> float:
    return float(j0(2.0 * math.pi * rf.max_doppler_Hz * delay_s))


def sat_los_gain(dist_m: float, rf: RfParams, phase: float = 0.0) -> complex:
    _check_distance(dist_m)
    magnitude = math.sqrt(rf.beam_gain_linear) * rf.wavelength_m / (4.0 * math.pi * dist_m)
    return magnitude * complex(math.cos(phase), math.sin(phase))


def sat_gain_from_fading(dist_m: float, delay_s: float, rf: RfParams,
                         phase: float, innovation: complex) -> complex:
    """Outdated-CSI UAV-satellite gain.

    ``innovation`` is a unit-variance complex Gaussian draw; it is rescaled to
    the variance of the line-of-sight term.
    """
    h_bar = sat_los_gain(dist_m, rf, phase)
    corr = outdated_correlation(delay_s, rf)
    g = innovation * abs(h_bar)
    return corr * h_bar + math.sqrt(max(0.0, 1.0 - corr * corr)) * g


def sat_gain_outdated(dist_m: float, delay_s: float, rf: RfParams,
                      rng: np.random.Generator) -> complex:
    phase = rng.uniform(0.0, 2.0 * math.pi)
    innovation = _complex_normal(rng)
    return sat_gain_from_fading(dist_m, delay_s, rf, phase, innovation)


def uplink_rate_uav_sat(n: int, gains, rf: RfParams) -> float:
    """Rate of UAV ``n`` towards one satellite; other UAVs interfere."""
    return _sinr_rate(rf.bandwidth_uav_sat_Hz, rf.tx_power_uav_W, n, gains, rf.noise_power_W)


def isl_rate(dist_m: float, rf: RfParams) -> float:
    _check_distance(dist_m)
    fspl = (4.0 * math.pi * dist_m * rf.carrier_freq_sat_Hz / rf.light_speed_mps) ** 2
    noise = rf.boltzmann * rf.thermal_noise_K * rf.bandwidth_isl_Hz
    snr = rf.tx_power_sat_W * rf.isl_peak_gain_linear ** 2 / (noise * fspl)
    return float(rf.bandwidth_isl_Hz * math.log2(1.0 + snr))


def sat_cloud_rate(gain: complex, rf: RfParams) -> float:
    snr = rf.tx_power_sat_W * abs(gain) ** 2 / rf.noise_power_W
    return float(rf.bandwidth_sat_cloud_Hz * math.log2(1.0 + snr))
