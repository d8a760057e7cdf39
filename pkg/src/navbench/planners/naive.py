"""Turn toward the goal, then drive at it. Ignores every obstacle."""

from __future__ import annotations

import math

from ..geometry import Twist
from .base import Observation, Planner, PlannerCommand

TWO_PI = 2.0 * math.pi
DEFAULTS = {"k_omega": 1.5, "k_v": 1.0, "turn_threshold": math.pi / 4}


def naive_twist(px, py, theta, gx, gy, v_max, omega_max, tolerance, k_omega, k_v, turn_threshold):
    """Pure float arithmetic so out-of-process copies can match it bit for bit."""
    dx = gx - px
    dy = gy - py
    dist = math.hypot(dx, dy)
    if dist <= tolerance:
        return 0.0, 0.0
    err = math.remainder(math.atan2(dy, dx) - theta, TWO_PI)
    if err <= -math.pi:
        err += TWO_PI
    omega = max(-omega_max, min(omega_max, k_omega * err))
    if abs(err) > turn_threshold:
        return 0.0, omega
    v = min(v_max, k_v * dist) * math.cos(err)
    return v, omega


class NaivePlanner(Planner):
    name = "naive"

    def compute(self, obs: Observation) -> PlannerCommand:
        p = {**DEFAULTS, **self.params}
        m = self.ctx.model
        v, w = naive_twist(obs.odom_pose.x, obs.odom_pose.y, obs.odom_pose.theta,
                           obs.goal[0], obs.goal[1], m.v_max, m.omega_max,
                           self.ctx.goal_tolerance, p["k_omega"], p["k_v"], p["turn_threshold"])
        return PlannerCommand(Twist(v, w))
