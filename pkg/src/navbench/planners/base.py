"""Planner contract and the observation/command types it exchanges."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..geometry import Pose2D, RobotModel, Twist, WorldMap, wrap_angle
from ..sensing import LaserScan, LaserScanConfig

GOAL_TOLERANCE = 0.3
CONTROL_DT = 0.1


class PlannerError(RuntimeError):
    """The planner misbehaved; the episode ends with outcome planner_error."""


class PlannerTimeout(RuntimeError):
    """The planner missed the per-tick deadline."""


@dataclass(frozen=True, eq=False)
class Observation:
    stamp: float
    scan: LaserScan
    odom_pose: Pose2D
    odom_twist: Twist
    goal: tuple[float, float]
    global_map: WorldMap | None = None
    reference_path: list[tuple[float, float]] | None = None

    def to_wire(self, tick: int | None = None) -> dict:
        """Wire form of the observation. The global map travels in the init message."""
        d: dict[str, Any] = {
            "type": "obs",
            "stamp": float(self.stamp),
            "scan": {"ranges": [float(r) for r in self.scan.ranges], "stamp": float(self.scan.stamp)},
            "odom_pose": {"x": self.odom_pose.x, "y": self.odom_pose.y, "theta": self.odom_pose.theta},
            "odom_twist": {"v": self.odom_twist.v, "omega": self.odom_twist.omega},
            "goal": [float(self.goal[0]), float(self.goal[1])],
            "reference_path": None if self.reference_path is None
            else [[float(x), float(y)] for x, y in self.reference_path],
        }
        if tick is not None:
            d["tick"] = tick
        return d

    @classmethod
    def from_wire(cls, d: dict, global_map: WorldMap | None = None) -> Observation:
        scan = d["scan"]
        p, tw = d["odom_pose"], d["odom_twist"]
        ref = d.get("reference_path")
        return cls(stamp=float(d["stamp"]),
                   scan=LaserScan(np.asarray(scan["ranges"], dtype=float), float(scan.get("stamp", d["stamp"]))),
                   odom_pose=Pose2D(float(p["x"]), float(p["y"]), float(p["theta"])),
                   odom_twist=Twist(float(tw["v"]), float(tw["omega"])),
                   goal=(float(d["goal"][0]), float(d["goal"][1])),
                   global_map=global_map,
                   reference_path=None if ref is None else [(float(x), float(y)) for x, y in ref])


@dataclass(frozen=True)
class PlannerCommand:
    twist: Twist
    events: tuple[str, ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.twist.v) and math.isfinite(self.twist.omega)):
            raise PlannerError(f"non-finite command {self.twist}")


@dataclass
class PlannerContext:
    """What every planner learns at init time."""

    model: RobotModel = field(default_factory=RobotModel)
    scan_config: LaserScanConfig = field(default_factory=LaserScanConfig)
    control_dt: float = CONTROL_DT
    goal_tolerance: float = GOAL_TOLERANCE
    global_map: WorldMap | None = None
    params: dict = field(default_factory=dict)

    def to_wire(self, planner_id: str) -> dict:
        return {"type": "init", "planner_id": planner_id, "robot_model": self.model.to_dict(),
                "scan_config": self.scan_config.to_dict(), "control_dt": self.control_dt,
                "goal_tolerance": self.goal_tolerance, "params": self.params,
                "global_map": None if self.global_map is None else self.global_map.to_json_dict()}


class Planner:
    """Base class: ``init`` once, ``compute`` per control tick, ``shutdown`` once."""

    name = "planner"

    def __init__(self, **params):
        self.params = params
        self.ctx: PlannerContext | None = None

    def init(self, ctx: PlannerContext) -> None:
        self.ctx = ctx

    def compute(self, obs: Observation) -> PlannerCommand:
        raise NotImplementedError

    def shutdown(self) -> None:
        pass


def goal_in_robot_frame(pose: Pose2D, point) -> tuple[float, float]:
    dx, dy = point[0] - pose.x, point[1] - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return (c * dx + s * dy, -s * dx + c * dy)


def goal_reached(obs: Observation, tolerance: float) -> bool:
    return math.hypot(obs.goal[0] - obs.odom_pose.x, obs.goal[1] - obs.odom_pose.y) <= tolerance


def carrot(obs: Observation, lookahead: float) -> tuple[float, float]:
    """Point to steer at: `lookahead` metres along the reference path, else the goal."""
    path = obs.reference_path
    if not path:
        return obs.goal
    px, py = obs.odom_pose.x, obs.odom_pose.y
    pts = np.asarray(path, dtype=float)
    d = np.hypot(pts[:, 0] - px, pts[:, 1] - py)
    i = int(np.argmin(d))
    ahead = np.nonzero(d[i:] >= lookahead)[0]
    if ahead.size == 0:
        return obs.goal
    x, y = pts[i + ahead[0]]
    return (float(x), float(y))


def heading_error(pose: Pose2D, point) -> float:
    return wrap_angle(math.atan2(point[1] - pose.y, point[0] - pose.x) - pose.theta)
