"""Dynamic window approach over scan-derived obstacle points."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import RobotModel, Twist
from .base import Observation, Planner, PlannerCommand, carrot, goal_in_robot_frame, goal_reached


@dataclass(frozen=True)
class DwaConfig:
    v_samples: int = 7
    omega_samples: int = 15
    horizon: float = 1.5
    sim_dt: float = 0.1
    w_heading: float = 1.0
    w_clearance: float = 1.0
    w_velocity: float = 0.5
    clearance_cap: float = 2.0
    clearance_step: float = 0.05
    safety_margin: float = 0.1
    admissible_margin: float = 0.0
    lookahead: float = 1.5

    def __post_init__(self):
        if self.v_samples < 3 or self.omega_samples < 3:
            raise ValueError("need at least 3 samples per axis")
        if self.horizon < self.sim_dt:
            raise ValueError("horizon must be at least sim_dt")
        if min(self.w_heading, self.w_clearance, self.w_velocity) < 0:
            raise ValueError("weights must be non-negative")
        if self.clearance_step <= 0 or self.clearance_cap <= 0 or self.safety_margin < 0:
            raise ValueError("clearance_cap, clearance_step must be positive, safety_margin >= 0")

    @classmethod
    def from_params(cls, params: dict) -> DwaConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in params.items() if k in names})


def dynamic_window(model: RobotModel, current: Twist, dt: float) -> tuple[float, float, float, float]:
    """(v_lo, v_hi, w_lo, w_hi): velocities reachable within `dt`, inside model bounds."""
    v_lo = max(model.v_min, current.v - model.a_lin_max * dt)
    v_hi = min(model.v_max, current.v + model.a_lin_max * dt)
    w_lo = max(-model.omega_max, current.omega - model.a_ang_max * dt)
    w_hi = min(model.omega_max, current.omega + model.a_ang_max * dt)
    if v_lo > v_hi:  # current speed outside the bounds: nearest bound only
        v_lo = v_hi = min(max(current.v, model.v_min), model.v_max)
    if w_lo > w_hi:
        w_lo = w_hi = min(max(current.omega, -model.omega_max), model.omega_max)
    return v_lo, v_hi, w_lo, w_hi


def window_samples(cfg: DwaConfig, window) -> np.ndarray:
    v_lo, v_hi, w_lo, w_hi = window
    vs = np.linspace(v_lo, v_hi, cfg.v_samples)
    ws = np.linspace(w_lo, w_hi, cfg.omega_samples)
    vv, ww = np.meshgrid(vs, ws, indexing="ij")
    return np.stack([vv.ravel(), ww.ravel()], axis=1)


def rollout_times(cfg: DwaConfig, model: RobotModel, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rollout time grid and, per sample, how far along it collisions must be checked.

    The check extends past the horizon when stopping from |v| takes longer.
    """
    n_h = int(math.ceil(cfg.horizon / cfg.sim_dt - 1e-9))
    t_stop = np.abs(v) / (2.0 * model.a_lin_max)  # time to cover v^2/2a at speed |v|
    t_check = np.maximum(n_h * cfg.sim_dt, t_stop)
    n_max = max(n_h, int(math.ceil(float(t_check.max()) / cfg.sim_dt - 1e-9)))
    return cfg.sim_dt * np.arange(n_max + 1), t_check


def arc_positions(v: np.ndarray, w: np.ndarray, t: np.ndarray):
    """Closed-form unicycle poses from the origin.

    `t` broadcasts against (samples, 1); results have shape (samples, times).
    """
    v = v[:, None]
    w = w[:, None]
    straight = np.abs(w) < 1e-9
    ws = np.where(straight, 1.0, w)
    th = w * t
    x = np.where(straight, v * t, v / ws * np.sin(th))
    y = np.where(straight, 0.0, v / ws * (1.0 - np.cos(th)))
    return x, y, th


def _nearest_gap(x: np.ndarray, y: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Distance from each (x, y) to the closest obstacle point."""
    if not points.shape[0]:
        return np.full(x.shape, np.inf)
    d, _ = cKDTree(points).query(np.stack([x.ravel(), y.ravel()], axis=1))
    return d.reshape(x.shape)


def free_arc_length(cfg: DwaConfig, model: RobotModel, samples: np.ndarray,
                    points: np.ndarray) -> np.ndarray:
    """Distance travelled along each sample's arc before the inflated disc meets a point.

    The arc is followed by distance, past the rollout horizon, up to
    `clearance_cap`. A sample with v = 0 stays put and gets the gap between
    its inflated disc and the nearest point. The result lies in
    [0, clearance_cap].
    """
    v, w = samples[:, 0], samples[:, 1]
    s = np.arange(0.0, cfg.clearance_cap + 1e-9, cfg.clearance_step)
    moving = np.abs(v) > 1e-9
    speed = np.where(moving, np.abs(v), 1.0)
    t = s[None, :] / speed[:, None]
    x, y, _ = arc_positions(np.where(moving, v, 0.0), w, t)
    reach = cfg.clearance_cap + model.radius + cfg.safety_margin
    near = points[np.hypot(points[:, 0], points[:, 1]) <= reach] if points.shape[0] else points
    hit = _nearest_gap(x, y, near) < model.radius + cfg.safety_margin
    first = np.where(hit.any(axis=1), hit.argmax(axis=1), len(s))
    free = np.where(first == len(s), cfg.clearance_cap, s[np.maximum(first - 1, 0)])
    free = np.where(first == 0, 0.0, free)
    # standing still: how far the nearest point is, so an approaching
    # obstacle makes waiting progressively worse than moving away
    still = np.clip(_nearest_gap(np.zeros(1), np.zeros(1), near)[0] - model.radius - cfg.safety_margin,
                    0.0, cfg.clearance_cap)
    return np.where(moving, free, still)


def evaluate_samples(cfg: DwaConfig, model: RobotModel, samples: np.ndarray, points: np.ndarray,
                     target: tuple[float, float]):
    """Score and admissibility for each (v, omega) sample.

    `points` are obstacle points and `target` the steering point, both in the
    robot frame. Admissible samples keep the exact disc free of points for
    the whole braking-inclusive check time. The clearance term is the free
    arc length (see `free_arc_length`). Returns (scores, admissible,
    min_gap) arrays, min_gap being over the horizon.
    """
    v, w = samples[:, 0], samples[:, 1]
    t, t_check = rollout_times(cfg, model, v)
    x, y, th = arc_positions(v, w, t[None, :])
    n_h = int(math.ceil(cfg.horizon / cfg.sim_dt - 1e-9))
    if points.shape[0]:
        reach = float(np.abs(v).max()) * t[-1] + model.radius + cfg.admissible_margin
        near = points[np.hypot(points[:, 0], points[:, 1]) <= reach]
    else:
        near = points
    gap = _nearest_gap(x, y, near) - model.radius - cfg.admissible_margin
    checked = t[None, :] <= t_check[:, None] + 1e-9
    admissible = ~np.any((gap < 0.0) & checked, axis=1)
    min_gap = gap[:, :n_h + 1].min(axis=1)

    xf, yf, thf = x[:, n_h], y[:, n_h], th[:, n_h]
    ang = np.arctan2(target[1] - yf, target[0] - xf) - thf
    ang = np.abs(np.arctan2(np.sin(ang), np.cos(ang)))
    heading = 1.0 - ang / math.pi
    clear = free_arc_length(cfg, model, samples, points) / cfg.clearance_cap
    vel = v / model.v_max
    scores = cfg.w_heading * heading + cfg.w_clearance * clear + cfg.w_velocity * vel
    return scores, admissible, min_gap


def select_sample(samples: np.ndarray, scores: np.ndarray, admissible: np.ndarray) -> int | None:
    """Index of the best admissible sample.

    Ties on score go to lower |omega|, then lower v, then lower omega, so
    the choice does not depend on enumeration order.
    """
    idx = np.nonzero(admissible)[0]
    if idx.size == 0:
        return None
    s = samples[idx]
    order = np.lexsort((s[:, 1], s[:, 0], np.abs(s[:, 1]), -scores[idx]))
    return int(idx[order[0]])


def dwa_compute(cfg: DwaConfig, model: RobotModel, obs: Observation, control_dt: float,
                scan_cfg, goal_tolerance: float) -> PlannerCommand:
    window = dynamic_window(model, obs.odom_twist, control_dt)
    if goal_reached(obs, goal_tolerance):
        # brake as hard as the window allows
        v_lo, v_hi, w_lo, w_hi = window
        return PlannerCommand(Twist(min(max(0.0, v_lo), v_hi), min(max(0.0, w_lo), w_hi)))
    samples = window_samples(cfg, window)
    points = obs.scan.points(scan_cfg)
    target = goal_in_robot_frame(obs.odom_pose, carrot(obs, cfg.lookahead))
    scores, admissible, _ = evaluate_samples(cfg, model, samples, points, target)
    best = select_sample(samples, scores, admissible)
    if best is None:
        return PlannerCommand(Twist(0.0, model.omega_max / 2.0), events=("recovery",))
    return PlannerCommand(Twist(float(samples[best, 0]), float(samples[best, 1])))


class DwaPlanner(Planner):
    name = "dwa"

    def init(self, ctx):
        super().init(ctx)
        self.cfg = DwaConfig.from_params({**self.params, **ctx.params})

    def compute(self, obs: Observation) -> PlannerCommand:
        c = self.ctx
        return dwa_compute(self.cfg, c.model, obs, c.control_dt, c.scan_config, c.goal_tolerance)
