"""Per-episode navigation metrics and cross-episode aggregates.

Formulas (identified by FORMULAS in every output):

* success: outcome == "success" and fewer than 2 collision events
* path_length: sum of |p[k+1] - p[k]|
* acceleration / jerk: first and second differences of |v|, divided by dt
  and dt^2, mean absolute value
* curvature: Menger curvature of consecutive position triplets; triplets with
  a step below 1e-6 m or zero area give 0
* curvature_normalized: sum of curvature * local arc length (half the two
  adjacent steps), i.e. total turning
* angle_over_length: sum |wrap(theta[k+1] - theta[k])| / path_length
* roughness: mean of (second difference of heading)^2 / dt^4
* clearing_dist_normalized: mean clearance / robot radius
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .episode import EpisodeRecord

FORMULA_VERSION = "navbench-metrics/1"
FORMULAS = {
    "success": "outcome==success and collisions<2",
    "curvature": "menger; degenerate triplet (step<1e-6 m or collinear) -> 0",
    "curvature_normalized": "sum(kappa_k * (s_{k-1}+s_k)/2), total turning",
    "angle_over_length": "sum|dtheta| / path_length",
    "roughness": "mean((d2 theta)^2) / dt^4",
    "clearing_dist_normalized": "mean(clearance) / robot_radius",
    "acceleration_jerk": "from speed magnitude differences",
    "std": "population (ddof=0)",
    "time_to_goal": "aggregated over successful episodes only",
}
MIN_STEP = 1e-6

SCALAR_METRICS = ("collisions", "time_to_goal", "path_length", "velocity_avg", "acceleration_avg",
                  "jerk_avg", "curvature_avg", "curvature_max", "curvature_min",
                  "curvature_normalized", "angle_over_length", "roughness", "clearing_dist_avg",
                  "clearing_dist_max", "clearing_dist_min", "clearing_dist_normalized")

UNITS = {"collisions": "-", "time_to_goal": "s", "path_length": "m", "velocity_avg": "m/s",
         "acceleration_avg": "m/s²", "jerk_avg": "m/s³", "curvature_avg": "1/m",
         "curvature_max": "1/m", "curvature_min": "1/m", "curvature_normalized": "-",
         "angle_over_length": "rad/m", "roughness": "rad²/s⁴", "clearing_dist_avg": "m",
         "clearing_dist_max": "m", "clearing_dist_min": "m", "clearing_dist_normalized": "-",
         "success_rate": "%"}


@dataclass
class MetricsReport:
    scenario_id: str
    planner_id: str
    episode_index: int
    robot: int
    outcome: str
    success: bool
    collisions: int
    time_to_goal: float | None
    path_length: float
    velocity_avg: float | None
    acceleration_avg: float | None
    jerk_avg: float | None
    curvature_avg: float | None
    curvature_max: float | None
    curvature_min: float | None
    curvature_normalized: float | None
    angle_over_length: float | None
    roughness: float | None
    clearing_dist_avg: float | None
    clearing_dist_max: float | None
    clearing_dist_min: float | None
    clearing_dist_normalized: float | None
    formula_version: str = FORMULA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


def wrapped_diff(theta: np.ndarray) -> np.ndarray:
    d = np.diff(theta)
    return np.arctan2(np.sin(d), np.cos(d))


def menger_curvature(p: np.ndarray) -> np.ndarray:
    """Curvature at each interior point of a polyline, shape (n - 2,)."""
    a = p[1:-1] - p[:-2]
    b = p[2:] - p[1:-1]
    c = p[2:] - p[:-2]
    la, lb, lc = (np.hypot(v[:, 0], v[:, 1]) for v in (a, b, c))
    cross = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    ok = (la >= MIN_STEP) & (lb >= MIN_STEP) & (lc > 0) & (cross > 0)
    out = np.zeros(len(a))
    out[ok] = 2.0 * cross[ok] / (la[ok] * lb[ok] * lc[ok])
    return out


def _opt(x) -> float | None:
    return None if x is None else float(x)


def compute_metrics(record: EpisodeRecord, robot: int = 0) -> MetricsReport:
    if not record.frames:
        raise ValueError("record has no frames")
    frames = record.frames
    rf = [f.robots[robot] for f in frames]
    t = np.array([f.t for f in frames])
    pos = np.array([[r.pose.x, r.pose.y] for r in rf])
    theta = np.array([r.pose.theta for r in rf])
    speed = np.abs(np.array([r.twist.v for r in rf]))
    clear = np.array([r.clearance for r in rf])
    radius = record.meta["robot_models"][robot]["radius"]

    collisions = sum(1 for e in record.collision_events if e.robot == robot)
    success = record.outcome == "success" and collisions < 2
    steps = np.hypot(*np.diff(pos, axis=0).T) if len(pos) > 1 else np.zeros(0)
    path_length = float(steps.sum())

    acc = jerk = None
    if len(t) >= 3:
        dt = np.diff(t)
        dv = np.diff(speed) / dt
        acc = float(np.mean(np.abs(dv)))
        jerk = float(np.mean(np.abs(np.diff(dv) / dt[1:])))

    curv_avg = curv_max = curv_min = curv_norm = rough = None
    aol = None
    if len(t) >= 3:
        kappa = menger_curvature(pos)
        curv_avg, curv_max, curv_min = float(kappa.mean()), float(kappa.max()), float(kappa.min())
        local = 0.5 * (steps[:-1] + steps[1:])
        curv_norm = float(np.sum(kappa * local))
        dth = wrapped_diff(theta)
        aol = float(np.sum(np.abs(dth)) / path_length) if path_length > 0 else 0.0
        d2 = np.diff(dth)
        dt = np.diff(t)
        h = float(np.mean(dt))
        rough = float(np.mean(d2 ** 2) / h ** 4)

    return MetricsReport(
        scenario_id=record.scenario_id, planner_id=record.planner_id,
        episode_index=record.episode_index, robot=robot, outcome=record.outcome,
        success=success, collisions=collisions,
        time_to_goal=float(t[-1]) if success else None,
        path_length=path_length, velocity_avg=float(speed.mean()),
        acceleration_avg=_opt(acc), jerk_avg=_opt(jerk),
        curvature_avg=curv_avg, curvature_max=curv_max, curvature_min=curv_min,
        curvature_normalized=curv_norm, angle_over_length=aol, roughness=rough,
        clearing_dist_avg=float(clear.mean()), clearing_dist_max=float(clear.max()),
        clearing_dist_min=float(clear.min()), clearing_dist_normalized=float(clear.mean() / radius))


@dataclass
class MetricStats:
    mean: float
    std: float
    median: float
    min: float
    max: float
    n: int


@dataclass
class AggregateReport:
    scenario_id: str
    planner_id: str
    episodes: int
    success_rate: float
    stats: dict[str, MetricStats]
    values: dict[str, list[float]] = field(default_factory=dict)
    formula_version: str = FORMULA_VERSION

    def row(self) -> dict:
        out = {"scenario_id": self.scenario_id, "planner_id": self.planner_id,
               "episodes": self.episodes, "success_rate": self.success_rate}
        for name in SCALAR_METRICS:
            s = self.stats.get(name)
            for stat in ("mean", "std", "median", "min", "max"):
                out[f"{name}_{stat}"] = "" if s is None else getattr(s, stat)
        out["formula_version"] = self.formula_version
        return out


def aggregate(reports: Sequence[MetricsReport]) -> AggregateReport:
    """Statistics over one (scenario, planner) group."""
    if not reports:
        raise ValueError("cannot aggregate an empty group")
    keys = {(r.scenario_id, r.planner_id) for r in reports}
    if len(keys) != 1:
        raise ValueError(f"reports span several groups: {sorted(keys)}")
    n = len(reports)
    rate = 100.0 * sum(r.success for r in reports) / n
    stats, values = {}, {}
    for name in SCALAR_METRICS:
        pool = reports if name != "time_to_goal" else [r for r in reports if r.success]
        vals = [float(getattr(r, name)) for r in pool if getattr(r, name) is not None]
        if not vals:
            continue
        a = np.asarray(vals)
        stats[name] = MetricStats(float(a.mean()), float(a.std()), float(np.median(a)),
                                  float(a.min()), float(a.max()), len(vals))
        values[name] = vals
    sid, pid = keys.pop()
    return AggregateReport(sid, pid, n, rate, stats, values)


def group_reports(reports: Iterable[MetricsReport]) -> list[AggregateReport]:
    groups: dict[tuple[str, str], list[MetricsReport]] = {}
    for r in reports:
        groups.setdefault((r.scenario_id, r.planner_id), []).append(r)
    return [aggregate(groups[k]) for k in sorted(groups)]


def failed_report(record: EpisodeRecord, robot: int = 0) -> MetricsReport:
    """Stand-in for a record that ended before its first frame."""
    empty = {name: None for name in SCALAR_METRICS}
    empty.update(collisions=len(record.collision_events), path_length=0.0)
    return MetricsReport(scenario_id=record.scenario_id, planner_id=record.planner_id,
                         episode_index=record.episode_index, robot=robot, outcome=record.outcome,
                         success=False, **empty)


def evaluate_records(records: Iterable[EpisodeRecord]) -> list[MetricsReport]:
    """Reports for every robot of every record; frameless records count as failures."""
    out = []
    for rec in records:
        if not rec.frames:
            out.extend(failed_report(rec, i) for i in range(len(rec.meta["robot_models"])))
            continue
        for i in range(len(rec.frames[0].robots)):
            out.append(compute_metrics(rec, i))
    return out


def episodes_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    cols = list(MetricsReport.__dataclass_fields__)
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: ("" if v is None else v) for k, v in r.to_dict().items()})
    return buf.getvalue()


def summary_csv(aggregates: Sequence[AggregateReport]) -> str:
    buf = io.StringIO()
    rows = [a.row() for a in aggregates]
    cols = list(rows[0]) if rows else ["scenario_id", "planner_id"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def metrics_json(report: MetricsReport) -> str:
    return json.dumps({**report.to_dict(), "formulas": FORMULAS}, sort_keys=True, indent=1)
