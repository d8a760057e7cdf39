import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from navbench.crowd import BehaviorMode, PedestrianState
from navbench.geometry import Pose2D, RobotModel, Twist, WorldMap, bordered_map, integrate_unicycle
from navbench.planners import Observation
from navbench.sensing import LaserScan, LaserScanConfig
from navbench.taskgen import RobotTask, Scenario

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def square_distance(px, py, cx, cy, half):
    """Distance from a point to an axis-aligned solid square (0 inside)."""
    dx = max(abs(px - cx) - half, 0.0)
    dy = max(abs(py - cy) - half, 0.0)
    return math.hypot(dx, dy)


def occupied_centers(world: WorldMap) -> np.ndarray:
    rr, cc = np.nonzero(world.cells)
    res = world.resolution
    return np.stack([world.origin.x + (cc + 0.5) * res, world.origin.y + (rr + 0.5) * res], axis=1)


def brute_static_distance(world: WorldMap, p) -> float:
    """Unsigned distance to the union of occupied squares, by enumeration."""
    centers = occupied_centers(world)
    h = world.resolution / 2
    dx = np.maximum(np.abs(p[0] - centers[:, 0]) - h, 0.0)
    dy = np.maximum(np.abs(p[1] - centers[:, 1]) - h, 0.0)
    return float(np.hypot(dx, dy).min())


def random_block_map(rng, w=40, h=40, res=0.25, n_blocks=6) -> WorldMap:
    cells = np.zeros((h, w), dtype=bool)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    for _ in range(n_blocks):
        r, c = rng.integers(2, h - 6), rng.integers(2, w - 6)
        cells[r:r + rng.integers(1, 5), c:c + rng.integers(1, 5)] = True
    return WorldMap(cells, res)


def corridor_scenario(sid="corridor", length=10.0, peds=(), timeout=30.0, seed=0):
    world = bordered_map(length, 4.0)
    return Scenario(id=sid, map=world,
                    robots=[RobotTask(RobotModel(), Pose2D(1.0, 2.0, 0.0), (length - 1.5, 2.0))],
                    pedestrians=list(peds), seed=seed, timeout=timeout)


def handcrafted_ped(pid, start, waypoints, v0=1.0, radius=0.3):
    return PedestrianState(id=pid, position=tuple(start), velocity=(0.0, 0.0), radius=radius, v0=v0,
                           behavior=BehaviorMode.handcrafted(), waypoints=[tuple(w) for w in waypoints])


def window_oracle(model: RobotModel, current: Twist, dt: float):
    """Reachable (v, omega) box for one control period, current twist inside the limits."""
    return (max(model.v_min, current.v - model.a_lin_max * dt),
            min(model.v_max, current.v + model.a_lin_max * dt),
            max(-model.omega_max, current.omega - model.a_ang_max * dt),
            min(model.omega_max, current.omega + model.a_ang_max * dt))


def rollout_clear(model: RobotModel, twist: Twist, points, horizon=1.5, sim_dt=0.1) -> bool:
    """Step a constant command with the unicycle integrator and test the disc against points.

    The check runs for the horizon or, if longer, for as long as the robot
    needs at the commanded speed to cover its braking distance v^2 / 2a.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = int(math.ceil(max(horizon, abs(twist.v) / (2 * model.a_lin_max)) / sim_dt - 1e-9))
    pose = Pose2D(0.0, 0.0, 0.0)
    for _ in range(n + 1):
        if pts.shape[0] and np.hypot(pts[:, 0] - pose.x, pts[:, 1] - pose.y).min() < model.radius:
            return False
        pose = integrate_unicycle(pose, twist, sim_dt)
    return True


def random_dwa_observation(rng, model: RobotModel, cfg: LaserScanConfig):
    """Robot at the origin, scan of a few random discs and wall segments, random goal and twist."""
    ang = cfg.beam_angles()
    ranges = np.full(len(ang), cfg.range_max)
    for _ in range(rng.integers(0, 6)):  # discs
        r = rng.uniform(0.1, 0.5)
        c = rng.uniform(model.radius + r + 0.05, 3.0)
        phi = rng.uniform(-math.pi, math.pi)
        cx, cy = c * math.cos(phi), c * math.sin(phi)
        b = ang
        proj = cx * np.cos(b) + cy * np.sin(b)
        disc = proj ** 2 - (cx * cx + cy * cy - r * r)
        hit = (disc >= 0) & (proj > 0)
        d = np.where(hit, proj - np.sqrt(np.maximum(disc, 0)), np.inf)
        ranges = np.minimum(ranges, np.where(d > 0, d, np.inf))
    if rng.random() < 0.5:  # a straight wall
        dist = rng.uniform(model.radius + 0.05, 2.5)
        normal = rng.uniform(-math.pi, math.pi)
        cosd = np.cos(ang - normal)
        ranges = np.minimum(ranges, np.where(cosd > 1e-6, dist / np.maximum(cosd, 1e-6), np.inf))
    ranges = np.minimum(ranges, cfg.range_max)
    v = rng.uniform(model.v_min, model.v_max)
    w = rng.uniform(-model.omega_max, model.omega_max)
    goal = tuple(rng.uniform(-6, 6, 2))
    return Observation(0.0, LaserScan(ranges), Pose2D(0.0, 0.0, 0.0), Twist(float(v), float(w)), goal)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    key, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    ACCEPTANCE[key] = f"{key:<5} {status}  {title}" + (f"  [{detail}]" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        terminalreporter.write_line(ACCEPTANCE[key])
