"""Artificial potential field baseline with a vortex term and local-minimum recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from ..geometry import Twist
from .base import Observation, Planner, PlannerCommand, carrot, goal_in_robot_frame, goal_reached


@dataclass(frozen=True)
class ApfConfig:
    k_att: float = 1.0
    k_rep: float = 0.02
    influence: float = 1.0
    vortex_gain: float = 0.6
    k_omega: float = 1.5
    lookahead: float = 1.5
    stuck_force: float = 0.05
    stuck_time: float = 2.0
    slow_margin: float = 0.5

    @classmethod
    def from_params(cls, params: dict) -> ApfConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in params.items() if k in names})


def attractive_force(cfg: ApfConfig, target) -> np.ndarray:
    """Unit-magnitude pull toward `target` (robot frame)."""
    t = np.asarray(target, dtype=float)
    n = float(np.hypot(*t))
    if n < 1e-9:
        return np.zeros(2)
    return cfg.k_att * t / n


def repulsive_force(cfg: ApfConfig, points: np.ndarray) -> np.ndarray:
    """Negative gradient at the origin of sum 0.5*k_rep*(1/d - 1/influence)^2 over near points."""
    if points.shape[0] == 0:
        return np.zeros(2)
    d = np.hypot(points[:, 0], points[:, 1])
    keep = (d < cfg.influence) & (d > 1e-9)
    if not np.any(keep):
        return np.zeros(2)
    p, d = points[keep], d[keep]
    mag = cfg.k_rep * (1.0 / d - 1.0 / cfg.influence) / d ** 2
    return (mag[:, None] * (-p / d[:, None])).sum(axis=0)


def vortex(cfg: ApfConfig, f_att: np.ndarray, f_rep: np.ndarray) -> np.ndarray:
    """Tangential push so head-on repulsion turns the robot instead of stalling it.

    The side is chosen from the sign of att x rep; an exact tie turns left.
    """
    n = float(np.hypot(*f_rep))
    if n < 1e-12:
        return np.zeros(2)
    cross = f_att[0] * f_rep[1] - f_att[1] * f_rep[0]
    side = -1.0 if cross > 0 else 1.0
    perp = np.array([-f_rep[1], f_rep[0]]) * side
    return cfg.vortex_gain * perp


def net_force(cfg: ApfConfig, target, points: np.ndarray) -> np.ndarray:
    fa = attractive_force(cfg, target)
    fr = repulsive_force(cfg, points)
    return fa + fr + vortex(cfg, fa, fr)


class ApfPlanner(Planner):
    name = "apf"

    def init(self, ctx):
        super().init(ctx)
        self.cfg = ApfConfig.from_params({**self.params, **ctx.params})
        self.stuck_for = 0.0

    def compute(self, obs: Observation) -> PlannerCommand:
        cfg, m = self.cfg, self.ctx.model
        if goal_reached(obs, self.ctx.goal_tolerance):
            self.stuck_for = 0.0
            return PlannerCommand(Twist(0.0, 0.0))
        points = obs.scan.points(self.ctx.scan_config)
        target = goal_in_robot_frame(obs.odom_pose, carrot(obs, cfg.lookahead))
        f = net_force(cfg, target, points)
        if float(np.hypot(*f)) < cfg.stuck_force:
            self.stuck_for += self.ctx.control_dt
        else:
            self.stuck_for = 0.0
        if self.stuck_for > cfg.stuck_time:
            return PlannerCommand(Twist(0.0, m.omega_max / 2.0), events=("recovery",))
        phi = math.atan2(f[1], f[0])
        omega = max(-m.omega_max, min(m.omega_max, cfg.k_omega * phi))
        slow = 1.0
        if points.shape[0]:
            d_min = float(np.hypot(points[:, 0], points[:, 1]).min())
            slow = min(1.0, max(0.0, (d_min - m.radius) / cfg.slow_margin))
        v = m.v_max * max(0.0, math.cos(phi)) ** 2 * slow
        return PlannerCommand(Twist(v, omega))
