"""Deterministic episode loop, batch runner and the JSONL record format.

Per control tick, for each active robot: raycast, odometry draw, planner
call. Then ``control_dt / dt`` physics substeps, each stepping the crowd
before integrating the robots. A frame is recorded at the end of every
control tick, the first one at ``t = control_dt``.

All randomness comes from one ``numpy.random.Generator`` per episode, drawn
in this order: Random-behaviour pedestrians' initial waypoints (pedestrian
order); then per tick: odometry noise per robot (robot order), crowd draws
per substep (pedestrian order).
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import multiprocessing
import numpy as np

from .crowd import BehaviorKind, PedestrianState, resample_waypoint, step_crowd
from .geometry import Pose2D, Twist, clamp_twist, clearance, integrate_unicycle
from .planners import (CONTROL_DT, GOAL_TOLERANCE, Observation, Planner, PlannerContext,
                       PlannerError, PlannerTimeout, make_planner)
from .sensing import DriftingOdometry, LaserScanConfig, raycast
from .taskgen import EntityKind, EntitySpec, Scenario, World, path_exists

log = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1
OUTCOMES = ("success", "collision_limit", "timeout", "planner_error")
REFERENCE_PATH_MARGIN = 0.15


@dataclass
class EpisodeOptions:
    control_dt: float = CONTROL_DT
    goal_tolerance: float = GOAL_TOLERANCE
    collision_abort_limit: int | None = None
    debounce: float = 0.5
    # wall-clock limit for in-process planners; None keeps records independent of
    # host load (plugin deadlines are enforced by the bridge regardless)
    deadline: float | None = None
    scan: LaserScanConfig = field(default_factory=LaserScanConfig)
    scan_stride: int | None = 8
    episode_index: int = 0


@dataclass
class RobotFrame:
    pose: Pose2D
    twist: Twist
    commanded: Twist
    collision: bool
    clearance: float
    scan_digest: list[float] | None = None
    events: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"pose": self.pose.to_list(), "twist": self.twist.to_list(),
             "commanded": self.commanded.to_list(), "collision": self.collision,
             "clearance": self.clearance}
        if self.scan_digest is not None:
            d["scan_digest"] = self.scan_digest
        if self.events:
            d["events"] = self.events
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RobotFrame:
        return cls(Pose2D.from_list(d["pose"]), Twist(*d["twist"]), Twist(*d["commanded"]),
                   bool(d["collision"]), float(d["clearance"]), d.get("scan_digest"),
                   list(d.get("events", [])))


@dataclass
class Frame:
    t: float
    robots: list[RobotFrame]
    pedestrians: list[tuple[int, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"type": "frame", "t": self.t, "robots": [r.to_dict() for r in self.robots],
                "pedestrians": [list(p) for p in self.pedestrians]}

    @classmethod
    def from_dict(cls, d: dict) -> Frame:
        return cls(float(d["t"]), [RobotFrame.from_dict(r) for r in d["robots"]],
                   [(int(i), float(x), float(y)) for i, x, y in d["pedestrians"]])


@dataclass
class CollisionEvent:
    t: float
    robot: int
    position: tuple[float, float]

    def to_list(self) -> list:
        return [self.t, self.robot, [self.position[0], self.position[1]]]


@dataclass
class EpisodeRecord:
    meta: dict
    frames: list[Frame]
    outcome: str
    collision_events: list[CollisionEvent] = field(default_factory=list)
    detail: str | None = None

    @property
    def scenario_id(self) -> str:
        return self.meta["scenario_id"]

    @property
    def planner_id(self) -> str:
        return self.meta["planner_id"]

    @property
    def episode_index(self) -> int:
        return self.meta["episode_index"]

    def sort_key(self):
        return (self.scenario_id, self.planner_id, self.episode_index)

    def file_name(self) -> str:
        return f"{self.scenario_id}__{self.planner_id}__{self.episode_index}.jsonl"

    def to_jsonl(self) -> str:
        lines = [dumps({"type": "meta", **self.meta})]
        lines += [dumps(f.to_dict()) for f in self.frames]
        end = {"type": "outcome", "outcome": self.outcome,
               "collision_events": [e.to_list() for e in self.collision_events]}
        if self.detail is not None:
            end["detail"] = self.detail
        lines.append(dumps(end))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> EpisodeRecord:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("type") != "meta" or rows[-1].get("type") != "outcome":
            raise ValueError("record must start with a meta line and end with an outcome line")
        meta = {k: v for k, v in rows[0].items() if k != "type"}
        if meta.get("schema_version") != RECORD_SCHEMA_VERSION:
            from .taskgen import SchemaVersionError
            raise SchemaVersionError(f"record schema_version {meta.get('schema_version')!r}")
        frames = [Frame.from_dict(r) for r in rows[1:-1]]
        end = rows[-1]
        events = [CollisionEvent(float(t), int(r), (float(p[0]), float(p[1])))
                  for t, r, p in end.get("collision_events", [])]
        return cls(meta, frames, end["outcome"], events, end.get("detail"))

    def save(self, directory) -> Path:
        path = Path(directory) / self.file_name()
        path.write_text(self.to_jsonl())
        return path

    @classmethod
    def load(cls, path) -> EpisodeRecord:
        return cls.from_jsonl(Path(path).read_text())


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, no whitespace, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_records(directory) -> list[EpisodeRecord]:
    paths = sorted(Path(directory).glob("*.jsonl"))
    return sorted((EpisodeRecord.load(p) for p in paths), key=EpisodeRecord.sort_key)


class CollisionDebouncer:
    """Turns per-frame collision flags into events.

    A rising edge is an event unless the robot was in contact less than
    `debounce` seconds (of consecutive collision-free frames) ago.
    """

    def __init__(self, debounce: float, frame_dt: float):
        self.need = max(0, int(math.ceil(debounce / frame_dt - 1e-9)))
        self.prev = False
        self.free_run = 0
        self.seen_contact = False

    def update(self, collision: bool) -> bool:
        event = False
        if collision:
            if not self.prev and (not self.seen_contact or self.free_run >= self.need):
                event = True
            self.seen_contact = True
            self.free_run = 0
        else:
            self.free_run += 1
        self.prev = collision
        return event


def reference_path(scenario: Scenario, robot: int) -> list[tuple[float, float]] | None:
    task = scenario.robots[robot]
    for inflation in (task.model.radius + REFERENCE_PATH_MARGIN, task.model.radius, 0.0):
        found = path_exists(scenario.map, task.start.position, task.goal, inflation)
        if found is not None:
            return found.points[1:] + [task.goal]
    return None


def _clamp_into(world, pose: Pose2D) -> Pose2D:
    x0, y0, x1, y1 = world.extent
    x = min(max(pose.x, x0), x1)
    y = min(max(pose.y, y0), y1)
    if x == pose.x and y == pose.y:
        return pose
    return Pose2D(x, y, pose.theta)


def _meta(scenario: Scenario, planner_id: str, seed: int, opts: EpisodeOptions) -> dict:
    return {"schema_version": RECORD_SCHEMA_VERSION, "scenario_id": scenario.id,
            "planner_id": planner_id, "seed": seed, "episode_index": opts.episode_index,
            "robot_models": [r.model.to_dict() for r in scenario.robots],
            "robot_model": scenario.robots[0].model.name,
            "starts": [r.start.to_list() for r in scenario.robots],
            "goals": [list(r.goal) for r in scenario.robots],
            "map_ref": scenario.map_ref, "map_digest": scenario.map.digest(),
            "dt": scenario.dt, "control_dt": opts.control_dt, "timeout": scenario.timeout,
            "goal_tolerance": opts.goal_tolerance, "debounce": opts.debounce,
            "pedestrian_radii": [[p.id, p.radius] for p in scenario.pedestrians],
            "scan_stride": opts.scan_stride}


def run_episode(scenario: Scenario, planners: Planner | Sequence[Planner], seed: int,
                planner_id: str | None = None, options: EpisodeOptions | None = None) -> EpisodeRecord:
    """Run one episode; one planner instance per robot."""
    opts = options or EpisodeOptions()
    scenario.validate()
    n_rob = len(scenario.robots)
    if isinstance(planners, Planner):
        planners = [planners]
    planners = list(planners)
    if len(planners) != n_rob:
        raise ValueError(f"{n_rob} robots but {len(planners)} planners")
    substeps = int(round(opts.control_dt / scenario.dt))
    if substeps < 1 or abs(substeps * scenario.dt - opts.control_dt) > 1e-9:
        raise ValueError("control_dt must be an integer multiple of the physics dt")
    planner_id = planner_id or planners[0].name
    meta = _meta(scenario, planner_id, seed, opts)

    world = World(scenario.map)
    for r in scenario.robots:
        world.spawn_entity(EntitySpec(EntityKind.ROBOT, r.start, r.model.radius))
    for p in scenario.pedestrians:
        world.spawn_entity(EntitySpec(EntityKind.PEDESTRIAN, Pose2D(*p.position), p.radius))
    static = world.map

    rng = np.random.default_rng(seed)
    peds: list[PedestrianState] = []
    for p in scenario.pedestrians:
        p = replace(p, waypoints=list(p.waypoints))
        if p.behavior.kind is BehaviorKind.RANDOM:
            p = resample_waypoint(p, static, rng)
        peds.append(p)

    models = [r.model for r in scenario.robots]
    poses = [r.start for r in scenario.robots]
    twists = [Twist(0.0, 0.0) for _ in range(n_rob)]
    goals = [r.goal for r in scenario.robots]
    odoms = [DriftingOdometry(scenario.odometry_noise, r.start) for r in scenario.robots]
    refs = [reference_path(scenario, i) if scenario.map_known else None for i in range(n_rob)]
    done = [False] * n_rob
    debouncers = [CollisionDebouncer(opts.debounce, opts.control_dt) for _ in range(n_rob)]

    frames: list[Frame] = []
    events: list[CollisionEvent] = []
    outcome = None
    detail = None
    started: list[Planner] = []
    try:
        for i, pl in enumerate(planners):
            pl.init(PlannerContext(model=models[i], scan_config=opts.scan,
                                   control_dt=opts.control_dt, goal_tolerance=opts.goal_tolerance,
                                   global_map=static if scenario.map_known else None))
            started.append(pl)
        k = 0
        while outcome is None:
            k += 1
            t_prev = (k - 1) * opts.control_dt
            ped_discs = [(p.position, p.radius) for p in peds]
            commands = []
            tick_events: list[list[str]] = [[] for _ in range(n_rob)]
            scans = [None] * n_rob
            for i in range(n_rob):
                if done[i]:
                    commands.append(Twist(0.0, 0.0))
                    continue
                others = ped_discs + [(poses[j].position, models[j].radius)
                                      for j in range(n_rob) if j != i]
                scan = raycast(static, others, poses[i], opts.scan, stamp=t_prev)
                scans[i] = scan
                obs = Observation(stamp=t_prev, scan=scan,
                                  odom_pose=odoms[i].observe(poses[i], rng), odom_twist=twists[i],
                                  goal=goals[i], global_map=static if scenario.map_known else None,
                                  reference_path=refs[i])
                t0 = time.perf_counter()
                try:
                    cmd = planners[i].compute(obs)
                    late = opts.deadline is not None and time.perf_counter() - t0 > opts.deadline
                except PlannerTimeout:
                    cmd, late = None, True
                if late:
                    log.warning("planner %s missed the %.3f s deadline at t=%.2f",
                                planner_id, opts.deadline, t_prev)
                    tick_events[i].append("planner_timeout")
                    commands.append(Twist(0.0, 0.0))
                    continue
                tick_events[i].extend(cmd.events)
                commands.append(cmd.twist)

            for _ in range(substeps):
                robot_discs = [(poses[j].position, models[j].radius) for j in range(n_rob)]
                peds = step_crowd(peds, static, scenario.social_force, scenario.dt, rng, robot_discs)
                for i in range(n_rob):
                    twists[i] = clamp_twist(models[i], twists[i], commands[i], scenario.dt)
                    poses[i] = _clamp_into(static, integrate_unicycle(poses[i], twists[i], scenario.dt))

            t = k * opts.control_dt
            ped_discs = [(p.position, p.radius) for p in peds]
            robot_frames = []
            for i in range(n_rob):
                others = ped_discs + [(poses[j].position, models[j].radius)
                                      for j in range(n_rob) if j != i]
                c = clearance(static, others, poses[i].position)
                hit = c < models[i].radius
                if debouncers[i].update(hit):
                    events.append(CollisionEvent(t, i, poses[i].position))
                digest = None
                if opts.scan_stride and scans[i] is not None:
                    digest = [float(r) for r in scans[i].ranges[::opts.scan_stride]]
                robot_frames.append(RobotFrame(poses[i], twists[i], commands[i], hit, c, digest,
                                               tick_events[i]))
                if not done[i] and math.dist(poses[i].position, goals[i]) <= opts.goal_tolerance:
                    done[i] = True
            frames.append(Frame(t, robot_frames, [(p.id, p.position[0], p.position[1]) for p in peds]))

            if all(done):
                outcome = "success"
            elif opts.collision_abort_limit is not None and len(events) >= opts.collision_abort_limit:
                outcome = "collision_limit"
            elif t >= scenario.timeout - 1e-9:
                outcome = "timeout"
    except PlannerError as e:
        outcome = "planner_error"
        detail = str(e)
    finally:
        for pl in started:
            try:
                pl.shutdown()
            except Exception:  # noqa: BLE001 - shutdown failures must not mask the outcome
                log.exception("planner shutdown failed")
    return EpisodeRecord(meta, frames, outcome, events, detail)


# ---------------------------------------------------------------- batches

def _job(scenario: Scenario, spec: dict, index: int, seed: int, options: EpisodeOptions | None,
         output_dir: str | None) -> EpisodeRecord:
    opts = replace(options or EpisodeOptions(), episode_index=index)
    try:
        planners = [make_planner(spec) for _ in scenario.robots]
        record = run_episode(scenario, planners, seed, planner_id=spec["id"], options=opts)
    except Exception as e:  # noqa: BLE001 - one failed episode must not sink the batch
        log.error("episode %s/%s/%d failed: %s", scenario.id, spec["id"], index, e)
        record = EpisodeRecord(_meta(scenario, spec["id"], seed, opts), [], "planner_error", [],
                               f"{type(e).__name__}: {e}")
    if output_dir is not None:
        record.save(output_dir)
    return record


def run_batch(scenarios: Sequence[Scenario], planner_specs: Sequence[dict], episodes_per_cell: int,
              parallelism: int = 1, seed_base: int = 0, output_dir=None,
              options: EpisodeOptions | None = None) -> list[EpisodeRecord]:
    """Every (scenario, planner, episode) cell; seeds are ``seed_base + episode_index``.

    Records are written to `output_dir` as they finish and returned sorted by
    (scenario, planner, episode).
    """
    if episodes_per_cell < 1:
        raise ValueError("episodes_per_cell must be >= 1")
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        output_dir = str(output_dir)
    jobs = [(s, spec, e, seed_base + e) for s in scenarios for spec in planner_specs
            for e in range(episodes_per_cell)]
    if parallelism <= 1:
        records = [_job(s, spec, e, seed, options, output_dir) for s, spec, e, seed in jobs]
    else:
        ctx = multiprocessing.get_context("fork") if hasattr(os, "fork") else None
        records = []
        with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
            futures = [pool.submit(_job, s, spec, e, seed, options, output_dir)
                       for s, spec, e, seed in jobs]
            for fut in as_completed(futures):
                records.append(fut.result())
    return sorted(records, key=EpisodeRecord.sort_key)


def cells(records: Iterable[EpisodeRecord]) -> dict[tuple[str, str], list[EpisodeRecord]]:
    out: dict[tuple[str, str], list[EpisodeRecord]] = {}
    for r in records:
        out.setdefault((r.scenario_id, r.planner_id), []).append(r)
    return out
