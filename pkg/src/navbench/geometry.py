"""World representation, unicycle kinematics and clearance geometry."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

TWO_PI = 2.0 * math.pi
STRAIGHT_OMEGA = 1e-9


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    a = math.remainder(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def compose(self, other: Pose2D) -> Pose2D:
        """Apply `other` expressed in this pose's frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(self.x + c * other.x - s * other.y,
                      self.y + s * other.x + c * other.y,
                      self.theta + other.theta)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.theta]

    @classmethod
    def from_list(cls, v: Sequence[float]) -> Pose2D:
        return cls(float(v[0]), float(v[1]), float(v[2]) if len(v) > 2 else 0.0)


@dataclass(frozen=True)
class Twist:
    v: float = 0.0
    omega: float = 0.0

    def to_list(self) -> list[float]:
        return [self.v, self.omega]


@dataclass(frozen=True)
class RobotModel:
    name: str = "disc_robot"
    radius: float = 0.3
    v_max: float = 1.0
    v_min: float = 0.0
    omega_max: float = 1.5
    a_lin_max: float = 1.0
    a_ang_max: float = 3.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("robot radius must be positive")
        if not self.v_min <= 0 <= self.v_max:
            raise ValueError("velocity bounds must satisfy v_min <= 0 <= v_max")
        if min(self.v_max, self.omega_max, self.a_lin_max, self.a_ang_max) <= 0:
            raise ValueError("limit magnitudes must be positive")

    def to_dict(self) -> dict:
        return {"name": self.name, "radius": self.radius, "v_max": self.v_max,
                "v_min": self.v_min, "omega_max": self.omega_max,
                "a_lin_max": self.a_lin_max, "a_ang_max": self.a_ang_max}

    @classmethod
    def from_dict(cls, d: dict) -> RobotModel:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def integrate_unicycle(pose: Pose2D, twist: Twist, dt: float) -> Pose2D:
    """Exact constant-twist arc over `dt`."""
    v, w = twist.v, twist.omega
    th = pose.theta
    if abs(w) < STRAIGHT_OMEGA:
        return Pose2D(pose.x + v * dt * math.cos(th), pose.y + v * dt * math.sin(th), th + w * dt)
    # v/w * (sin(th + w dt) - sin th) rewritten with half angles; the two
    # are identical but this one does not cancel catastrophically for small w
    half = 0.5 * w * dt
    chord = v * dt * math.sin(half) / half
    return Pose2D(pose.x + chord * math.cos(th + half),
                  pose.y + chord * math.sin(th + half),
                  th + w * dt)


def clamp_twist(model: RobotModel, current: Twist, desired: Twist, dt: float) -> Twist:
    """Acceleration-limited step toward `desired`, then velocity bounds."""
    dv = model.a_lin_max * dt
    dw = model.a_ang_max * dt
    v = min(max(desired.v, current.v - dv), current.v + dv)
    w = min(max(desired.omega, current.omega - dw), current.omega + dw)
    v = min(max(v, model.v_min), model.v_max)
    w = min(max(w, -model.omega_max), model.omega_max)
    return Twist(v, w)


class QueryOutsideMap(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WorldMap:
    """Occupancy grid. ``cells[row, col]``, row 0 at minimum y."""

    cells: np.ndarray
    resolution: float
    origin: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.bool_)
        if cells.ndim != 2:
            raise ValueError("cells must be a 2D array")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.origin.theta != 0.0:
            raise ValueError("map origin must have theta == 0")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "_edges", None)
        object.__setattr__(self, "_cache", {})

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def extent(self) -> tuple[float, float, float, float]:
        ox, oy = self.origin.x, self.origin.y
        return (ox, oy, ox + self.width * self.resolution, oy + self.height * self.resolution)

    @property
    def size_m(self) -> tuple[float, float]:
        return (self.width * self.resolution, self.height * self.resolution)

    def __eq__(self, other):
        if not isinstance(other, WorldMap):
            return NotImplemented
        return (self.resolution == other.resolution and self.origin == other.origin
                and self.cells.shape == other.cells.shape
                and bool(np.array_equal(self.cells, other.cells)))

    __hash__ = None

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.extent
        return x0 <= x <= x1 and y0 <= y <= y1

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing the point."""
        c = int(math.floor((x - self.origin.x) / self.resolution))
        r = int(math.floor((y - self.origin.y) / self.resolution))
        return min(max(r, 0), self.height - 1), min(max(c, 0), self.width - 1)

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return (self.origin.x + (c + 0.5) * self.resolution,
                self.origin.y + (r + 0.5) * self.resolution)

    def is_occupied(self, x: float, y: float) -> bool:
        if not self.contains(x, y):
            return True
        r, c = self.cell_of(x, y)
        return bool(self.cells[r, c])

    def cached(self, key, build):
        """Memoize a derived quantity on this (immutable) map."""
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def free_cell_count(self) -> int:
        return int(self.cells.size - np.count_nonzero(self.cells))

    def edge_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower-left corners of occupied cells touching free space and vice versa.

        Only these cells can hold the nearest boundary point, so clearance
        queries scan them instead of the whole grid.
        """
        if self._edges is None:
            occ = self.cells
            pad = np.pad(occ, 1, constant_values=True)
            free_nb = (~pad[:-2, 1:-1]) | (~pad[2:, 1:-1]) | (~pad[1:-1, :-2]) | (~pad[1:-1, 2:])
            pad_f = np.pad(occ, 1, constant_values=False)
            occ_nb = pad_f[:-2, 1:-1] | pad_f[2:, 1:-1] | pad_f[1:-1, :-2] | pad_f[1:-1, 2:]
            occ_edge = occ & free_nb
            free_edge = ~occ & occ_nb
            res = self.resolution

            def corners(mask):
                rr, cc = np.nonzero(mask)
                return np.ascontiguousarray(np.stack(
                    [self.origin.x + cc * res, self.origin.y + rr * res], axis=1).astype(float))

            object.__setattr__(self, "_edges", (corners(occ_edge), corners(free_edge)))
        return self._edges

    # serialization

    def to_json_dict(self) -> dict:
        rows = []
        for row in self.cells:
            runs = []
            prev = None
            count = 0
            for bit in row:
                b = "1" if bit else "0"
                if b == prev:
                    count += 1
                else:
                    if prev is not None:
                        runs.append(f"{prev}{count}")
                    prev, count = b, 1
            runs.append(f"{prev}{count}")
            rows.append(",".join(runs))
        d = {"resolution": self.resolution, "width": self.width, "height": self.height,
             "cells": "|".join(rows)}
        if self.origin.x != 0.0 or self.origin.y != 0.0:
            d["origin"] = [self.origin.x, self.origin.y]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> WorldMap:
        width, height = int(d["width"]), int(d["height"])
        rows = d["cells"].split("|")
        if len(rows) != height:
            raise ValueError(f"expected {height} rows, got {len(rows)}")
        cells = np.zeros((height, width), dtype=bool)
        for r, row in enumerate(rows):
            c = 0
            for run in row.split(","):
                bit, n = run[0], int(run[1:])
                if bit not in "01":
                    raise ValueError(f"bad run {run!r}")
                cells[r, c:c + n] = bit == "1"
                c += n
            if c != width:
                raise ValueError(f"row {r} has {c} cells, expected {width}")
        ox, oy = d.get("origin", [0.0, 0.0])
        return cls(cells, float(d["resolution"]), Pose2D(float(ox), float(oy), 0.0))

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def loads(cls, s: str) -> WorldMap:
        return cls.from_json_dict(json.loads(s))

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]


def bordered_map(width_m: float, height_m: float, resolution: float = 0.1) -> WorldMap:
    """Empty map whose outermost ring of cells is occupied."""
    w = int(round(width_m / resolution))
    h = int(round(height_m / resolution))
    cells = np.zeros((h, w), dtype=bool)
    cells[0, :] = cells[-1, :] = True
    cells[:, 0] = cells[:, -1] = True
    return WorldMap(cells, resolution)


Agent = tuple[tuple[float, float], float]


def _agents_array(agents: Iterable[Agent]) -> np.ndarray:
    arr = [(c[0], c[1], r) for c, r in agents]
    if not arr:
        return np.zeros((0, 3))
    return np.asarray(arr, dtype=float)


def cell_center_clearance(world: WorldMap) -> np.ndarray:
    """Static clearance at every cell center, shape (height, width)."""
    def build():
        rr, cc = np.meshgrid(np.arange(world.height), np.arange(world.width), indexing="ij")
        pts = np.stack([world.origin.x + (cc.ravel() + 0.5) * world.resolution,
                        world.origin.y + (rr.ravel() + 0.5) * world.resolution], axis=1)
        occ, free = world.edge_boxes()
        d = _kernels.batch_static_clearance(np.ascontiguousarray(pts), world.cells, world.origin.x,
                                            world.origin.y, world.resolution, occ, free)
        return d.reshape(world.height, world.width)
    return world.cached("center_clearance", build)


def static_clearance(world: WorldMap, point: Sequence[float]) -> tuple[float, tuple[float, float]]:
    """Signed distance from `point` to occupied space and the nearest boundary point."""
    x, y = float(point[0]), float(point[1])
    if not world.contains(x, y):
        raise QueryOutsideMap(f"point ({x}, {y}) lies outside the map")
    occ, free = world.edge_boxes()
    d, qx, qy = _kernels.static_clearance(x, y, world.cells, world.origin.x, world.origin.y,
                                          world.resolution, occ, free)
    return d, (qx, qy)


def clearance(world: WorldMap, agents: Iterable[Agent], point: Sequence[float]) -> float:
    """Distance from `point` to the nearest obstacle surface, static or agent.

    Negative inside an occupied cell or an agent disc.
    """
    d, _ = static_clearance(world, point)
    x, y = float(point[0]), float(point[1])
    for (cx, cy), r in agents:
        d = min(d, math.hypot(x - cx, y - cy) - r)
    return d


def check_collision(world: WorldMap, agents: Iterable[Agent], pose: Pose2D, radius: float) -> bool:
    return clearance(world, agents, pose.position) < radius
