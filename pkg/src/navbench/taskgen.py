"""Scenario files, random maps and tasks, grid feasibility, and the world adapter."""

from __future__ import annotations

import heapq
import json
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage

from .crowd import BehaviorMode, PedestrianState, SocialForceParams
from .geometry import (Pose2D, RobotModel, WorldMap, bordered_map, cell_center_clearance,
                       clearance)
from .sensing import OdometryNoise

SCHEMA_VERSION = 1
TIE_TOLERANCE = 1e-9
MAX_REJECTIONS = 1000
SQRT2 = math.sqrt(2.0)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class SchemaVersionError(ValueError):
    pass


class TaskMode(str, Enum):
    SCENARIO = "scenario"
    RANDOM = "random"
    RANDOM_POSITION_UNKNOWN = "random_position_unknown"
    RANDOM_MAP_UNKNOWN = "random_map_unknown"
    RANDOM_BOTH_UNKNOWN = "random_both_unknown"


@dataclass(frozen=True)
class TaskSpec:
    """A task mode plus the counts the random modes need."""

    mode: TaskMode = TaskMode.RANDOM
    n_pedestrians: int = 0
    n_static_obstacles: int = 0

    def __post_init__(self):
        if self.n_pedestrians < 0 or self.n_static_obstacles < 0:
            raise ValueError("counts must be non-negative")

    @property
    def map_known(self) -> bool:
        return self.mode not in (TaskMode.RANDOM_MAP_UNKNOWN, TaskMode.RANDOM_BOTH_UNKNOWN)

    @property
    def position_known(self) -> bool:
        return self.mode not in (TaskMode.RANDOM_POSITION_UNKNOWN, TaskMode.RANDOM_BOTH_UNKNOWN)


DEFAULT_ODOM_NOISE = OdometryNoise(enabled=True, sigma_xy=0.05, sigma_theta=0.02, drift_per_meter=0.01)


@dataclass(frozen=True)
class RobotTask:
    model: RobotModel
    start: Pose2D
    goal: tuple[float, float]

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "start": self.start.to_list(), "goal": list(self.goal)}

    @classmethod
    def from_dict(cls, d: dict) -> RobotTask:
        return cls(RobotModel.from_dict(d["model"]), Pose2D.from_list(d["start"]),
                   (float(d["goal"][0]), float(d["goal"][1])))


@dataclass
class Scenario:
    """Everything needed to replay one episode family."""

    id: str
    map: WorldMap
    robots: list[RobotTask]
    pedestrians: list[PedestrianState] = field(default_factory=list)
    seed: int = 0
    timeout: float = 180.0
    dt: float = 0.05
    episodes: int = 30
    mode: TaskMode = TaskMode.SCENARIO
    map_known: bool = True
    position_known: bool = True
    odometry_noise: OdometryNoise = field(default_factory=OdometryNoise)
    social_force: SocialForceParams = field(default_factory=SocialForceParams)
    map_ref: str | None = None

    def validate(self) -> None:
        if not self.robots:
            raise ValueError("scenario needs at least one robot")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for i, r in enumerate(self.robots):
            for name, pt in (("start", r.start.position), ("goal", r.goal)):
                if not self.map.contains(*pt) or self.map.is_occupied(*pt):
                    raise ValueError(f"robot {i} {name} {pt} is not in free space")

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "id": self.id,
             "robots": [r.to_dict() for r in self.robots],
             "pedestrians": [p.to_dict() for p in self.pedestrians],
             "seed": self.seed, "timeout": self.timeout, "dt": self.dt, "episodes": self.episodes,
             "mode": self.mode.value, "map_known": self.map_known,
             "position_known": self.position_known,
             "odometry_noise": self.odometry_noise.to_dict(),
             "social_force": self.social_force.to_dict()}
        if self.map_ref is not None:
            d["map_ref"] = self.map_ref
        else:
            d["map"] = self.map.to_json_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | os.PathLike | None = None) -> Scenario:
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"scenario schema_version {version!r}, expected {SCHEMA_VERSION}")
        map_ref = d.get("map_ref")
        if map_ref is not None:
            path = Path(map_ref)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            world = load_map(path)
        else:
            world = WorldMap.from_json_dict(d["map"])
        return cls(id=str(d["id"]), map=world,
                   robots=[RobotTask.from_dict(r) for r in d["robots"]],
                   pedestrians=[PedestrianState.from_dict(p) for p in d.get("pedestrians", [])],
                   seed=int(d.get("seed", 0)), timeout=float(d.get("timeout", 180.0)),
                   dt=float(d.get("dt", 0.05)), episodes=int(d.get("episodes", 30)),
                   mode=TaskMode(d.get("mode", "scenario")),
                   map_known=bool(d.get("map_known", True)),
                   position_known=bool(d.get("position_known", True)),
                   odometry_noise=OdometryNoise.from_dict(d.get("odometry_noise", {})),
                   social_force=SocialForceParams.from_dict(d.get("social_force", {})),
                   map_ref=map_ref)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def loads(cls, s: str, base_dir=None) -> Scenario:
        return cls.from_dict(json.loads(s), base_dir)


def load_map(path) -> WorldMap:
    with open(path) as f:
        return WorldMap.loads(f.read())


def save_map(world: WorldMap, path) -> None:
    Path(path).write_text(world.dumps() + "\n")


def load_scenario(path) -> Scenario:
    path = Path(path)
    return Scenario.loads(path.read_text(), base_dir=path.parent)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(scenario.dumps() + "\n")


# ---------------------------------------------------------------- random maps

def free_space_connected(cells: np.ndarray) -> bool:
    _, n = ndimage.label(~cells, structure=FOUR_CONNECTED)
    return n <= 1


def _obstacle_cells(rng: np.random.Generator, shape: tuple[int, int], res: float) -> np.ndarray:
    """Footprint of one rectangle or L-shape at a random interior location."""
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    kind = rng.integers(2)
    if kind == 0:
        sw = max(1, int(round(rng.uniform(0.4, 2.0) / res)))
        sh = max(1, int(round(rng.uniform(0.4, 2.0) / res)))
        c = int(rng.integers(1, max(2, w - sw)))
        r = int(rng.integers(1, max(2, h - sh)))
        mask[r:r + sh, c:c + sw] = True
    else:
        arm_a = max(2, int(round(rng.uniform(1.0, 2.5) / res)))
        arm_b = max(2, int(round(rng.uniform(1.0, 2.5) / res)))
        thick = max(1, int(round(rng.uniform(0.2, 0.5) / res)))
        c = int(rng.integers(1, max(2, w - arm_a)))
        r = int(rng.integers(1, max(2, h - arm_b)))
        mask[r:r + thick, c:c + arm_a] = True
        mask[r:r + arm_b, c:c + thick] = True
        quarter = int(rng.integers(4))
        if quarter & 1:
            mask[r:r + arm_b, c:c + arm_a] = mask[r:r + arm_b, c:c + arm_a][:, ::-1]
        if quarter & 2:
            mask[r:r + arm_b, c:c + arm_a] = mask[r:r + arm_b, c:c + arm_a][::-1, :]
    return mask


def generate_random_map(seed: int, width_m: float = 20.0, height_m: float = 20.0,
                        resolution: float = 0.1, n_static_obstacles: int = 0) -> WorldMap:
    """Bordered map with rejection-sampled obstacles keeping free space 4-connected."""
    if width_m < 4 or height_m < 4:
        raise ValueError("map dimensions must be at least 4 m")
    if not 0.01 <= resolution <= 0.5:
        raise ValueError("resolution must lie in [0.01, 0.5]")
    base = bordered_map(width_m, height_m, resolution)
    cells = np.array(base.cells)
    rng = np.random.default_rng(seed)
    for i in range(n_static_obstacles):
        for _ in range(MAX_REJECTIONS):
            cand = cells | _obstacle_cells(rng, cells.shape, resolution)
            if np.count_nonzero(cand) > np.count_nonzero(cells) and free_space_connected(cand):
                cells = cand
                break
        else:
            raise ValueError(f"could not place obstacle {i + 1} of {n_static_obstacles} after "
                             f"{MAX_REJECTIONS} rejections; try fewer obstacles")
    return WorldMap(cells, resolution)


# ---------------------------------------------------------------- grid search

@dataclass(frozen=True)
class GridPath:
    cells: list[tuple[int, int]]
    cost: float  # meters
    points: list[tuple[float, float]]


def inflated_blocked(world: WorldMap, inflation: float) -> np.ndarray:
    """Cells a disc of radius `inflation` cannot have its center in.

    Exact touching counts as blocked: on grids where the inflation is a
    multiple of half a cell, many centers sit at exactly that distance and
    binary rounding would otherwise decide them either way.
    """
    if inflation <= 0:
        return world.cells
    return world.cached(("inflated", inflation),
                        lambda: world.cells | (cell_center_clearance(world) < inflation + TIE_TOLERANCE))


_MOVES = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
          (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]


def grid_neighbors(blocked: np.ndarray, r: int, c: int):
    """8-connected moves; diagonals may not cut an occupied corner."""
    h, w = blocked.shape
    for dr, dc, cost in _MOVES:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < h and 0 <= nc < w) or blocked[nr, nc]:
            continue
        if dr and dc and (blocked[r + dr, c] or blocked[r, c + dc]):
            continue
        yield nr, nc, cost


def _octile(a, b) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (dr + dc) + (SQRT2 - 2.0) * min(dr, dc)


def astar(blocked: np.ndarray, start: tuple[int, int], goal: tuple[int, int]):
    """A* over grid cells; returns (cells, cost in cells) or None."""
    if blocked[start] or blocked[goal]:
        return None
    g = {start: 0.0}
    parent = {start: None}
    heap = [(_octile(start, goal), 0.0, start)]
    closed = set()
    while heap:
        _, gc, node = heapq.heappop(heap)
        if node in closed:
            continue
        if node == goal:
            path = []
            while node is not None:
                path.append(node)
                node = parent[node]
            return path[::-1], gc
        closed.add(node)
        for nr, nc, step in grid_neighbors(blocked, *node):
            nxt = (nr, nc)
            ng = gc + step
            if ng < g.get(nxt, math.inf):
                g[nxt] = ng
                parent[nxt] = node
                heapq.heappush(heap, (ng + _octile(nxt, goal), ng, nxt))
    return None


def path_exists(world: WorldMap, a, b, inflation: float = 0.0) -> GridPath | None:
    """Shortest 8-connected grid path between world points `a` and `b`."""
    for name, pt in (("a", a), ("b", b)):
        if world.is_occupied(pt[0], pt[1]):
            raise ValueError(f"endpoint {name}={tuple(pt)} lies in occupied space")
    blocked = inflated_blocked(world, inflation)
    ca, cb = world.cell_of(a[0], a[1]), world.cell_of(b[0], b[1])
    found = astar(blocked, ca, cb)
    if found is None:
        return None
    cells, cost = found
    return GridPath(cells, cost * world.resolution, [world.cell_center(r, c) for r, c in cells])


# ---------------------------------------------------------------- task sampling

@dataclass(frozen=True)
class PedestrianSampling:
    radius: float = 0.3
    v0_range: tuple[float, float] = (0.5, 1.2)
    keep_away: float = 1.0  # from robot start


def _free_point(world: WorldMap, rng) -> tuple[float, float]:
    x0, y0, x1, y1 = world.extent
    x, y = float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))
    return x, y


def sample_task(world: WorldMap, task: TaskSpec, seed: int, model: RobotModel | None = None,
                scenario_id: str | None = None, peds: PedestrianSampling = PedestrianSampling(),
                timeout: float = 180.0, episodes: int = 30) -> Scenario:
    """Draw a feasible start/goal pair and pedestrians for `world`.

    RNG consumption order is fixed: start/goal candidate pairs (x, y, x, y,
    theta per try), then per pedestrian position tries, speed and first
    waypoint.
    """
    model = model or RobotModel()
    rng = np.random.default_rng(seed)
    w_m, h_m = world.size_m
    min_sep = 0.4 * math.hypot(w_m, h_m)
    if np.count_nonzero(~world.cells) < 2:
        raise ValueError("map has fewer than 2 free cells")

    def admissible(pt):
        if not world.contains(*pt) or world.is_occupied(*pt):
            return False
        return clearance(world, (), pt) >= model.radius

    start = goal = None
    for _ in range(MAX_REJECTIONS):
        s = _free_point(world, rng)
        gl = _free_point(world, rng)
        theta = float(rng.uniform(-math.pi, math.pi))
        if not (admissible(s) and admissible(gl)):
            continue
        if math.hypot(gl[0] - s[0], gl[1] - s[1]) < min_sep:
            continue
        if path_exists(world, s, gl, inflation=model.radius) is None:
            continue
        start, goal = Pose2D(s[0], s[1], theta), gl
        break
    if start is None:
        raise ValueError(f"no feasible start/goal pair after {MAX_REJECTIONS} samples")

    bounds = world.extent
    pedestrians: list[PedestrianState] = []
    for i in range(task.n_pedestrians):
        for _ in range(MAX_REJECTIONS):
            p = _free_point(world, rng)
            if not world.contains(*p) or world.is_occupied(*p):
                continue
            if clearance(world, [(q.position, q.radius) for q in pedestrians], p) < peds.radius:
                continue
            if any(math.hypot(p[0] - q[0], p[1] - q[1]) < peds.keep_away + model.radius
                   for q in (start.position, goal)):
                continue
            break
        else:
            raise ValueError(f"could not place pedestrian {i}")
        v0 = float(rng.uniform(*peds.v0_range))
        behavior = BehaviorMode.random(bounds)
        wp = None
        for _ in range(100):
            cand = _free_point(world, rng)
            if world.contains(*cand) and not world.is_occupied(*cand) and \
                    clearance(world, (), cand) >= peds.radius:
                wp = cand
                break
        pedestrians.append(PedestrianState(id=i, position=p, radius=peds.radius, v0=v0,
                                           behavior=behavior, waypoints=[wp or p]))
    odom = OdometryNoise() if task.position_known else DEFAULT_ODOM_NOISE
    return Scenario(id=scenario_id or f"{task.mode.value}_{seed}", map=world,
                    robots=[RobotTask(model, start, goal)], pedestrians=pedestrians, seed=seed,
                    timeout=timeout, episodes=episodes, mode=task.mode,
                    map_known=task.map_known, position_known=task.position_known,
                    odometry_noise=odom)


def random_scenario(seed: int, task: TaskSpec, width_m: float = 20.0, height_m: float = 20.0,
                    resolution: float = 0.1, **kwargs) -> Scenario:
    """Generate a map with the task's static obstacles, then sample a task on it."""
    world = generate_random_map(seed, width_m, height_m, resolution, task.n_static_obstacles)
    return sample_task(world, task, seed, **kwargs)


# ---------------------------------------------------------------- world adapter

class EntityKind(str, Enum):
    ROBOT = "robot"
    PEDESTRIAN = "pedestrian"
    STATIC_OBSTACLE = "static_obstacle"


@dataclass(frozen=True)
class EntityHandle:
    id: int
    kind: EntityKind


@dataclass(frozen=True)
class EntitySpec:
    """Robots and pedestrians are discs; static obstacles are axis-aligned boxes."""

    kind: EntityKind
    pose: Pose2D
    radius: float = 0.3
    size: tuple[float, float] = (0.5, 0.5)


class WorldBackend(Protocol):
    """The four calls a simulator backend must provide."""

    def spawn_entity(self, spec: EntitySpec) -> EntityHandle: ...

    def delete_entity(self, handle: EntityHandle) -> None: ...

    def move_entity(self, handle: EntityHandle, pose: Pose2D) -> None: ...

    def reset_world(self) -> None: ...


class UnknownEntity(KeyError):
    pass


class OccupiedSpace(ValueError):
    pass


class World:
    """In-process backend: static map plus spawned dynamic entities."""

    def __init__(self, static_map: WorldMap):
        self.static_map = static_map
        self._entities: dict[int, tuple[EntityKind, EntitySpec]] = {}
        self._next_id = 0
        self._map = static_map

    @property
    def map(self) -> WorldMap:
        return self._map

    def census(self) -> list[tuple[int, str, tuple[float, float, float]]]:
        return [(i, k.value, (s.pose.x, s.pose.y, s.pose.theta))
                for i, (k, s) in sorted(self._entities.items())]

    def discs(self, exclude: int | None = None) -> list[tuple[tuple[float, float], float]]:
        return [(s.pose.position, s.radius) for i, (k, s) in sorted(self._entities.items())
                if k is not EntityKind.STATIC_OBSTACLE and i != exclude]

    def _box_mask(self, spec: EntitySpec, base: WorldMap) -> np.ndarray:
        res = base.resolution
        w, h = spec.size
        x0 = spec.pose.x - w / 2 - base.origin.x
        y0 = spec.pose.y - h / 2 - base.origin.y
        c0, c1 = int(math.floor(x0 / res)), int(math.ceil((x0 + w) / res))
        r0, r1 = int(math.floor(y0 / res)), int(math.ceil((y0 + h) / res))
        mask = np.zeros(base.cells.shape, dtype=bool)
        mask[max(r0, 0):max(r1, 0), max(c0, 0):max(c1, 0)] = True
        return mask

    def _rebuild_map(self) -> None:
        cells = np.array(self.static_map.cells)
        for k, s in self._entities.values():
            if k is EntityKind.STATIC_OBSTACLE:
                cells |= self._box_mask(s, self.static_map)
        self._map = WorldMap(cells, self.static_map.resolution, self.static_map.origin)

    def _check_free(self, spec: EntitySpec, exclude: int | None = None) -> None:
        x, y = spec.pose.position
        if not self._map.contains(x, y):
            raise OccupiedSpace(f"pose ({x}, {y}) outside the map")
        if spec.kind is EntityKind.STATIC_OBSTACLE:
            mask = self._box_mask(spec, self._map)
            if np.any(self._map.cells & mask):
                raise OccupiedSpace("static obstacle overlaps occupied cells")
            res = self._map.resolution
            rr, cc = np.nonzero(mask)
            for (cx, cy), r in self.discs(exclude):
                bx = np.clip(cx, self._map.origin.x + cc * res, self._map.origin.x + (cc + 1) * res)
                by = np.clip(cy, self._map.origin.y + rr * res, self._map.origin.y + (rr + 1) * res)
                if np.any(np.hypot(bx - cx, by - cy) < r):
                    raise OccupiedSpace("static obstacle overlaps an entity")
            return
        if self._map.is_occupied(x, y) or clearance(self._map, self.discs(exclude), (x, y)) < spec.radius:
            raise OccupiedSpace(f"disc at ({x}, {y}) overlaps occupied space")

    def spawn_entity(self, spec: EntitySpec) -> EntityHandle:
        self._check_free(spec)
        handle = EntityHandle(self._next_id, spec.kind)
        self._next_id += 1
        self._entities[handle.id] = (spec.kind, spec)
        if spec.kind is EntityKind.STATIC_OBSTACLE:
            self._rebuild_map()
        return handle

    def _get(self, handle: EntityHandle):
        if handle.id not in self._entities or self._entities[handle.id][0] is not handle.kind:
            raise UnknownEntity(f"unknown entity {handle}")
        return self._entities[handle.id]

    def delete_entity(self, handle: EntityHandle) -> None:
        kind, _ = self._get(handle)
        del self._entities[handle.id]
        if kind is EntityKind.STATIC_OBSTACLE:
            self._rebuild_map()

    def move_entity(self, handle: EntityHandle, pose: Pose2D) -> None:
        kind, spec = self._get(handle)
        moved = replace(spec, pose=pose)
        if kind is EntityKind.STATIC_OBSTACLE:
            saved = self._entities.pop(handle.id)
            self._rebuild_map()
            try:
                self._check_free(moved)
            except OccupiedSpace:
                self._entities[handle.id] = saved
                self._rebuild_map()
                raise
            self._entities[handle.id] = (kind, moved)
            self._rebuild_map()
            return
        self._check_free(moved, exclude=handle.id)
        self._entities[handle.id] = (kind, moved)

    def reset_world(self) -> None:
        self._entities.clear()
        self._map = self.static_map
