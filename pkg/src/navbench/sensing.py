"""Simulated 2D lidar and odometry corruption."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import Agent, Pose2D, WorldMap, _agents_array

CONTACT_RANGE = 1e-3


@dataclass(frozen=True)
class LaserScanConfig:
    beam_count: int = 360
    angle_min: float = -math.pi
    # 360 beams over the full circle without duplicating the +-pi beam
    angle_max: float = math.pi - 2.0 * math.pi / 360
    range_max: float = 3.5
    mounting_offset: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be >= 1")
        if not self.angle_min < self.angle_max:
            raise ValueError("angle_min must be below angle_max")
        if self.range_max <= 0:
            raise ValueError("range_max must be positive")

    def beam_angles(self) -> np.ndarray:
        """Beam angles in the sensor frame."""
        if self.beam_count == 1:
            return np.array([self.angle_min])
        return np.linspace(self.angle_min, self.angle_max, self.beam_count)

    def to_dict(self) -> dict:
        return {"beam_count": self.beam_count, "angle_min": self.angle_min,
                "angle_max": self.angle_max, "range_max": self.range_max,
                "mounting_offset": self.mounting_offset.to_list()}

    @classmethod
    def from_dict(cls, d: dict) -> LaserScanConfig:
        return cls(int(d["beam_count"]), float(d["angle_min"]), float(d["angle_max"]),
                   float(d["range_max"]), Pose2D.from_list(d.get("mounting_offset", [0, 0, 0])))


@dataclass(frozen=True, eq=False)
class LaserScan:
    ranges: np.ndarray
    stamp: float = 0.0

    def __eq__(self, other):
        return (isinstance(other, LaserScan) and self.stamp == other.stamp
                and bool(np.array_equal(self.ranges, other.ranges)))

    __hash__ = None

    def points(self, cfg: LaserScanConfig, hits_only: bool = True) -> np.ndarray:
        """Beam endpoints in the robot frame, shape (n, 2)."""
        ang = cfg.beam_angles() + cfg.mounting_offset.theta
        r = self.ranges
        if hits_only:
            keep = r < cfg.range_max
            ang, r = ang[keep], r[keep]
        mo = cfg.mounting_offset
        return np.stack([mo.x + r * np.cos(ang), mo.y + r * np.sin(ang)], axis=1)


def raycast(world: WorldMap, agents: list[Agent], pose: Pose2D, cfg: LaserScanConfig,
            stamp: float = 0.0) -> LaserScan:
    """Cast every beam against the grid (exact DDA) and the agent discs."""
    sensor = pose.compose(cfg.mounting_offset)
    angles = cfg.beam_angles() + sensor.theta
    ranges = _kernels.cast_scan(sensor.x, sensor.y, angles, world.cells, world.origin.x,
                                world.origin.y, world.resolution, cfg.range_max,
                                _agents_array(agents), CONTACT_RANGE)
    return LaserScan(ranges, stamp)


@dataclass(frozen=True)
class OdometryNoise:
    enabled: bool = False
    sigma_xy: float = 0.0
    sigma_theta: float = 0.0
    drift_per_meter: float = 0.0

    def __post_init__(self):
        if min(self.sigma_xy, self.sigma_theta, self.drift_per_meter) < 0:
            raise ValueError("noise parameters must be non-negative")

    def to_dict(self) -> dict:
        return {"enabled": self.enabled, "sigma_xy": self.sigma_xy,
                "sigma_theta": self.sigma_theta, "drift_per_meter": self.drift_per_meter}

    @classmethod
    def from_dict(cls, d: dict) -> OdometryNoise:
        return cls(bool(d.get("enabled", False)), float(d.get("sigma_xy", 0.0)),
                   float(d.get("sigma_theta", 0.0)), float(d.get("drift_per_meter", 0.0)))


def corrupt_odometry(truth: Pose2D, noise: OdometryNoise, rng: np.random.Generator,
                     drift: tuple[float, float] = (0.0, 0.0)) -> Pose2D:
    """Gaussian perturbation of `truth` plus an accumulated drift offset.

    Draw order: x, y, theta (three standard normals), only when enabled.
    """
    if not noise.enabled:
        return truth
    ex, ey, et = rng.standard_normal(3)
    return Pose2D(truth.x + drift[0] + noise.sigma_xy * ex,
                  truth.y + drift[1] + noise.sigma_xy * ey,
                  truth.theta + noise.sigma_theta * et)


class DriftingOdometry:
    """Per-robot odometry whose offset random-walks with distance travelled."""

    def __init__(self, noise: OdometryNoise, start: Pose2D):
        self.noise = noise
        self.drift = (0.0, 0.0)
        self._last = start

    def observe(self, truth: Pose2D, rng: np.random.Generator) -> Pose2D:
        if not self.noise.enabled:
            return truth
        if self.noise.drift_per_meter > 0:
            step = math.hypot(truth.x - self._last.x, truth.y - self._last.y)
            if step > 0:
                s = self.noise.drift_per_meter * step
                dx, dy = rng.standard_normal(2)
                self.drift = (self.drift[0] + s * dx, self.drift[1] + s * dy)
        self._last = truth
        return corrupt_odometry(truth, self.noise, rng, self.drift)
