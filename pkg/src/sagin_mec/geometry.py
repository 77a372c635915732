"""Node placement, distances and LEO coverage-window timing.

Satellites are reduced to a one-dimensional along-track offset: a satellite
with offset ``s`` has already spent ``s / v_S`` seconds of its coverage window
when the episode starts.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
EARTH_MU = 3.986004418e14  # m^3 / s^2


def circular_orbital_speed(earth_radius_m: float, orbit_height_m: float) -> float:
    return math.sqrt(EARTH_MU / (earth_radius_m + orbit_height_m))


@dataclass(frozen=True)
class GeoParams:
    earth_radius_m: float = 6_371e3
    orbit_height_m: float = 800e3
    min_elevation_rad: float = math.radians(40.0)
    orbital_speed_mps: float = 7455.9
    light_speed_mps: float = SPEED_OF_LIGHT

    def __post_init__(self) -> None:
        for name in ("earth_radius_m", "orbit_height_m", "min_elevation_rad",
                     "orbital_speed_mps", "light_speed_mps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.min_elevation_rad < math.pi / 2:
            raise ValueError("min_elevation_rad must be below pi/2")

    @property
    def orbit_radius_m(self) -> float:
        return self.earth_radius_m + self.orbit_height_m


@dataclass
class NodePositions:
    """Static placement of every node for one episode.

    UAV positions are the *initial* positions; the environment owns their
    evolution.
    """

    user_xy_m: np.ndarray          # (M, 2)
    uav_xyz_m: np.ndarray          # (N, 3)
    leo_along_track_offset_m: np.ndarray  # (L,)
    cloud_offset_m: np.ndarray     # (K,)
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(self.leo_along_track_offset_m < 0) or np.any(self.cloud_offset_m < 0):
            raise ValueError("offsets must be nonnegative")


def coverage_half_angle(geo: GeoParams) -> float:
    """Earth-central half angle of the region served above the minimum elevation."""
    ratio = geo.earth_radius_m / geo.orbit_radius_m
    return math.acos(ratio * math.cos(geo.min_elevation_rad)) - geo.min_elevation_rad


def coverage_time(geo: GeoParams) -> float:
    """Duration of a full pass: arc length ``2 (d_E + d_O) w_C`` over orbital speed."""
    arc_length = 2.0 * geo.orbit_radius_m * coverage_half_angle(geo)
    return arc_length / geo.orbital_speed_mps


def remaining_service_time(sat_offset_m: float, geo: GeoParams, elapsed_s: float) -> float:
    if elapsed_s < 0:
        raise ValueError("elapsed_s must be nonnegative")
    remaining = coverage_time(geo) - sat_offset_m / geo.orbital_speed_mps - elapsed_s
    return max(0.0, remaining)


def distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def slant_range(geo: GeoParams, central_angle_rad: float) -> float:
    """Ground-to-satellite distance for a given Earth-central angle."""
    r = geo.orbit_radius_m
    d_e = geo.earth_radius_m
    return math.sqrt(r * r + d_e * d_e - 2.0 * d_e * r * math.cos(central_angle_rad))


def elevation_from_slant(geo: GeoParams, central_angle_rad: float, slant_m: float) -> float:
    """Elevation angle recovered from the slant range.

    Closes the loop with :func:`coverage_half_angle`: feeding the coverage
    half angle and its slant range back in returns the minimum elevation.
    """
    arg = geo.orbit_radius_m / slant_m * math.sin(central_angle_rad)
    return math.acos(min(1.0, max(-1.0, arg)))


def traversed_angle(sat_offset_m: float, geo: GeoParams, elapsed_s: float = 0.0) -> float:
    """Central angle the satellite has swept since entering the window."""
    swept = sat_offset_m + geo.orbital_speed_mps * elapsed_s
    return swept / geo.orbit_radius_m


def uav_sat_distance(sat_offset_m: float, geo: GeoParams, elapsed_s: float = 0.0) -> float:
    """UAV-satellite slant range; equals the minimum-elevation range at window entry."""
    gamma = coverage_half_angle(geo) - traversed_angle(sat_offset_m, geo, elapsed_s)
    return slant_range(geo, gamma)


def sat_cloud_distance(sat_offset_m: float, cloud_offset_m: float, geo: GeoParams,
                       elapsed_s: float = 0.0) -> float:
    gamma = abs(coverage_half_angle(geo) - traversed_angle(sat_offset_m, geo, elapsed_s))
    gamma += cloud_offset_m / geo.earth_radius_m
    return slant_range(geo, gamma)


def isl_distance(offset_a_m: float, offset_b_m: float, geo: GeoParams,
                 min_distance_m: float = 1e3) -> float:
    """Chord between two satellites on the same orbit."""
    arc = abs(offset_a_m - offset_b_m)
    chord = 2.0 * geo.orbit_radius_m * math.sin(arc / (2.0 * geo.orbit_radius_m))
    return max(chord, min_distance_m)
