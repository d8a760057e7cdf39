"""Social-force pedestrians with random, handcrafted and graph behaviours.

Force on pedestrian i::

    f_i = (v0 * e_goal - v_i) / tau
          + sum_j A_ped * exp((r_i + r_j - d_ij) / B_ped) * n_ij
          + A_wall * exp((r_i - d_wall) / B_wall) * n_wall

with the n vectors pointing away from the repelling entity. Only the
nearest wall point contributes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels
from .geometry import WorldMap, static_clearance

WAYPOINT_RADIUS = 0.3
STUCK_WINDOW = 3.0
STUCK_DISTANCE = 0.1
COINCIDENT = 1e-9


@dataclass(frozen=True)
class SocialForceParams:
    tau: float = 0.5
    A_ped: float = 2.0
    B_ped: float = 0.3
    A_wall: float = 3.0
    B_wall: float = 0.2
    speed_cap_factor: float = 1.3
    avoid_robot: bool = False

    def __post_init__(self):
        for name in ("tau", "A_ped", "B_ped", "A_wall", "B_wall", "speed_cap_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> SocialForceParams:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


class BehaviorKind(str, Enum):
    RANDOM = "random"
    HANDCRAFTED = "handcrafted"
    GRAPH = "graph"


@dataclass(frozen=True)
class BehaviorMode:
    """How a pedestrian picks its next waypoint.

    ``bounds`` (xmin, ymin, xmax, ymax) is used by RANDOM; ``nodes``/``edges``
    by GRAPH. HANDCRAFTED cycles through the pedestrian's own waypoints.
    """

    kind: BehaviorKind
    bounds: tuple[float, float, float, float] | None = None
    nodes: tuple[tuple[float, float], ...] = ()
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.kind is BehaviorKind.RANDOM and self.bounds is None:
            raise ValueError("random behaviour needs bounds")
        if self.kind is BehaviorKind.GRAPH:
            if len(self.nodes) < 2:
                raise ValueError("graph behaviour needs at least 2 nodes")
            if not _connected(len(self.nodes), self.edges):
                raise ValueError("behaviour graph must be connected")

    @classmethod
    def random(cls, bounds) -> BehaviorMode:
        return cls(BehaviorKind.RANDOM, bounds=tuple(float(b) for b in bounds))

    @classmethod
    def handcrafted(cls) -> BehaviorMode:
        return cls(BehaviorKind.HANDCRAFTED)

    @classmethod
    def graph(cls, nodes, edges) -> BehaviorMode:
        return cls(BehaviorKind.GRAPH, nodes=tuple((float(x), float(y)) for x, y in nodes),
                   edges=tuple((int(a), int(b)) for a, b in edges))

    def neighbors(self, i: int) -> list[int]:
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return sorted(out)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.bounds is not None:
            d["bounds"] = list(self.bounds)
        if self.kind is BehaviorKind.GRAPH:
            d["nodes"] = [list(n) for n in self.nodes]
            d["edges"] = [list(e) for e in self.edges]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BehaviorMode:
        kind = BehaviorKind(d["kind"])
        bounds = tuple(float(b) for b in d["bounds"]) if d.get("bounds") is not None else None
        nodes = tuple((float(x), float(y)) for x, y in d.get("nodes", ()))
        edges = tuple((int(a), int(b)) for a, b in d.get("edges", ()))
        return cls(kind, bounds, nodes, edges)


def _connected(n: int, edges) -> bool:
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        if not (0 <= a < n and 0 <= b < n):
            return False
        adj[a].add(b)
        adj[b].add(a)
    seen = {0}
    todo = [0]
    while todo:
        for j in adj[todo.pop()]:
            if j not in seen:
                seen.add(j)
                todo.append(j)
    return len(seen) == n


@dataclass
class PedestrianState:
    id: int
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.3
    v0: float = 1.0
    behavior: BehaviorMode = field(default_factory=BehaviorMode.handcrafted)
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    current_waypoint_index: int = 0
    # stuck detection bookkeeping (random behaviour only)
    stuck_anchor: tuple[float, float] | None = None
    stuck_timer: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("pedestrian radius must be positive")
        if self.v0 < 0:
            raise ValueError("desired speed must be non-negative")
        if self.behavior.kind is BehaviorKind.HANDCRAFTED and not self.waypoints:
            raise ValueError("handcrafted pedestrians need at least one waypoint")
        if self.behavior.kind is BehaviorKind.GRAPH and not self.waypoints:
            self.waypoints = list(self.behavior.nodes)

    @property
    def target(self) -> tuple[float, float] | None:
        if not self.waypoints:
            return None
        return self.waypoints[self.current_waypoint_index % len(self.waypoints)]

    def to_dict(self) -> dict:
        return {"id": self.id, "position": list(self.position), "velocity": list(self.velocity),
                "radius": self.radius, "v0": self.v0, "behavior": self.behavior.to_dict(),
                "waypoints": [list(w) for w in self.waypoints],
                "current_waypoint_index": self.current_waypoint_index}

    @classmethod
    def from_dict(cls, d: dict) -> PedestrianState:
        return cls(id=int(d["id"]), position=tuple(d["position"]),
                   velocity=tuple(d.get("velocity", (0.0, 0.0))),
                   radius=float(d.get("radius", 0.3)), v0=float(d.get("v0", 1.0)),
                   behavior=BehaviorMode.from_dict(d["behavior"]),
                   waypoints=[tuple(w) for w in d.get("waypoints", [])],
                   current_waypoint_index=int(d.get("current_waypoint_index", 0)))


def tie_break_direction(id_i: int, id_j: int) -> tuple[float, float]:
    """Deterministic unit vector for coincident pedestrians i, j.

    Antisymmetric: the (j, i) vector is the negation of the (i, j) one.
    """
    lo, hi = sorted((id_i, id_j))
    h = hashlib.sha256(f"{lo}:{hi}".encode()).digest()
    ang = int.from_bytes(h[:8], "big") / 2 ** 64 * 2 * math.pi
    sign = 1.0 if id_i == lo else -1.0
    return (sign * math.cos(ang), sign * math.sin(ang))


def driving_force(p: PedestrianState, params: SocialForceParams) -> tuple[float, float]:
    tgt = p.target
    ex = ey = 0.0
    if tgt is not None:
        dx, dy = tgt[0] - p.position[0], tgt[1] - p.position[1]
        n = math.hypot(dx, dy)
        if n > COINCIDENT:
            ex, ey = dx / n, dy / n
    return ((p.v0 * ex - p.velocity[0]) / params.tau, (p.v0 * ey - p.velocity[1]) / params.tau)


def social_force(ped: PedestrianState, others: Sequence[PedestrianState], world: WorldMap | None,
                 params: SocialForceParams,
                 extra_discs: Sequence[tuple[tuple[float, float], float]] = ()) -> tuple[float, float]:
    """Total social force (m/s^2) on `ped`.

    `extra_discs` are additional repelling discs (the robot, when
    pedestrians are asked to avoid it); they use the pedestrian constants.
    """
    fx, fy = driving_force(ped, params)
    px, py = ped.position
    for o in others:
        if o is ped:
            raise ValueError("pedestrian must not appear in `others`")
        dx, dy = px - o.position[0], py - o.position[1]
        d = math.hypot(dx, dy)
        if d < COINCIDENT:
            nx, ny = tie_break_direction(ped.id, o.id)
        else:
            nx, ny = dx / d, dy / d
        mag = params.A_ped * math.exp((ped.radius + o.radius - d) / params.B_ped)
        fx += mag * nx
        fy += mag * ny
    for (cx, cy), r in extra_discs:
        dx, dy = px - cx, py - cy
        d = math.hypot(dx, dy)
        if d < COINCIDENT:
            continue
        mag = params.A_ped * math.exp((ped.radius + r - d) / params.B_ped)
        fx += mag * dx / d
        fy += mag * dy / d
    if world is not None:
        dw, (qx, qy) = static_clearance(world, ped.position)
        dx, dy = px - qx, py - qy
        n = math.hypot(dx, dy)
        if n > COINCIDENT and math.isfinite(dw):
            sign = 1.0 if dw >= 0 else -1.0
            mag = params.A_wall * math.exp((ped.radius - dw) / params.B_wall)
            fx += sign * mag * dx / n
            fy += sign * mag * dy / n
    return (fx, fy)


def _sample_free_point(world: WorldMap, bounds, radius: float, rng: np.random.Generator,
                       tries: int = 100) -> tuple[float, float] | None:
    xmin, ymin, xmax, ymax = bounds
    for _ in range(tries):
        x, y = rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)
        if world is None:
            return (float(x), float(y))
        if world.contains(x, y) and static_clearance(world, (x, y))[0] >= radius:
            return (float(x), float(y))
    return None


def resample_waypoint(p: PedestrianState, world: WorldMap, rng: np.random.Generator) -> PedestrianState:
    """Random behaviour: draw a fresh free-space waypoint inside the bounds."""
    pt = _sample_free_point(world, p.behavior.bounds, p.radius, rng)
    if pt is None:
        return p
    return replace(p, waypoints=[pt], current_waypoint_index=0)


def _advance(p: PedestrianState, world: WorldMap, rng: np.random.Generator) -> PedestrianState:
    kind = p.behavior.kind
    if kind is BehaviorKind.RANDOM:
        return resample_waypoint(p, world, rng)
    if kind is BehaviorKind.HANDCRAFTED:
        return replace(p, current_waypoint_index=(p.current_waypoint_index + 1) % len(p.waypoints))
    nbrs = p.behavior.neighbors(p.current_waypoint_index)
    if not nbrs:
        return p
    nxt = nbrs[int(rng.integers(len(nbrs)))]
    return replace(p, current_waypoint_index=nxt)


def _blocked(world: WorldMap | None, x0: float, y0: float, x: float, y: float) -> bool:
    """True when the segment from (x0, y0) to (x, y) touches an occupied cell."""
    if world is None:
        return False
    if world.is_occupied(x, y):
        return True
    n = math.hypot(x - x0, y - y0)
    if n == 0.0:
        return False
    hit = _kernels.dda_cast(x0, y0, (x - x0) / n, (y - y0) / n, world.cells, world.origin.x,
                            world.origin.y, world.resolution, n)
    return hit < n


def step_crowd(states: Sequence[PedestrianState], world: WorldMap | None, params: SocialForceParams,
               dt: float, rng: np.random.Generator,
               robots: Sequence[tuple[tuple[float, float], float]] = ()) -> list[PedestrianState]:
    """Advance every pedestrian by `dt` (semi-implicit Euler).

    All forces are evaluated on the pre-step states. RNG draws happen in
    pedestrian order, only when a waypoint changes (random resample or graph
    edge choice).
    """
    if not 0 < dt <= 0.1:
        raise ValueError("dt must lie in (0, 0.1]")
    states = list(states)
    discs = robots if params.avoid_robot else ()
    forces = [social_force(p, [o for o in states if o is not p], world, params, discs)
              for p in states]
    out = []
    for p, (fx, fy) in zip(states, forces):
        vx = p.velocity[0] + fx * dt
        vy = p.velocity[1] + fy * dt
        cap = params.speed_cap_factor * p.v0
        speed = math.hypot(vx, vy)
        if speed > cap:
            vx, vy = vx * cap / speed, vy * cap / speed
        x0, y0 = p.position
        x, y = x0 + vx * dt, y0 + vy * dt
        if _blocked(world, x0, y0, x, y):
            # slide along whichever axis stays free, otherwise stop
            if not _blocked(world, x0, y0, x, y0):
                y, vy = y0, 0.0
            elif not _blocked(world, x0, y0, x0, y):
                x, vx = x0, 0.0
            else:
                x, y, vx, vy = x0, y0, 0.0, 0.0
        q = replace(p, position=(x, y), velocity=(vx, vy))
        tgt = q.target
        if tgt is not None and math.hypot(tgt[0] - x, tgt[1] - y) < WAYPOINT_RADIUS:
            q = _advance(q, world, rng)
        if q.behavior.kind is BehaviorKind.RANDOM:
            q = _stuck_check(q, world, dt, rng)
        out.append(q)
    return out


def _stuck_check(p: PedestrianState, world: WorldMap, dt: float, rng) -> PedestrianState:
    anchor = p.stuck_anchor if p.stuck_anchor is not None else p.position
    timer = p.stuck_timer + dt
    if timer + 1e-9 >= STUCK_WINDOW:
        moved = math.hypot(p.position[0] - anchor[0], p.position[1] - anchor[1])
        if moved < STUCK_DISTANCE:
            p = resample_waypoint(p, world, rng)
        return replace(p, stuck_anchor=p.position, stuck_timer=0.0)
    return replace(p, stuck_anchor=anchor, stuck_timer=timer)
