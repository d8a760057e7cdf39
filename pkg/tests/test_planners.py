import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_dwa_observation, rollout_clear, window_oracle
from navbench.geometry import Pose2D, RobotModel, Twist, WorldMap, bordered_map
from navbench.planners import (ApfConfig, ApfPlanner, DwaConfig, DwaPlanner, NaivePlanner, Observation,
                               PlannerCommand, PlannerContext, PlannerError, dwa_compute, dynamic_window,
                               make_planner)
from navbench.planners.apf import attractive_force, net_force, repulsive_force
from navbench.planners.base import carrot
from navbench.planners.dwa import (evaluate_samples, free_arc_length, select_sample,
                                   window_samples)
from navbench.sensing import LaserScan, LaserScanConfig, raycast

MODEL = RobotModel()
SCAN = LaserScanConfig()
SMALL_SCAN = LaserScanConfig(beam_count=90, angle_max=math.pi - 2 * math.pi / 90)


def ctx(model=MODEL, scan=SCAN, **kw):
    return PlannerContext(model=model, scan_config=scan, **kw)


def observe(world, pose, goal, twist=Twist(0.0, 0.0), agents=(), scan=SCAN, path=None):
    return Observation(0.0, raycast(world, list(agents), pose, scan), pose, twist, goal,
                       reference_path=path)


def started(planner, **kw):
    planner.init(ctx(**kw))
    return planner


# ---------------------------------------------------------------- naive

def test_naive_drives_at_goal_ahead():
    obs = observe(bordered_map(10, 10), Pose2D(2, 5, 0), (8, 5))
    twist = started(NaivePlanner()).compute(obs).twist
    assert twist.v > 0 and abs(twist.omega) < 0.1


def test_naive_turns_in_place_for_goal_behind():
    obs = observe(bordered_map(10, 10), Pose2D(5, 5, 0), (2, 5.1))
    twist = started(NaivePlanner()).compute(obs).twist
    assert twist.v == pytest.approx(0.0, abs=1e-12) and abs(twist.omega) > 0


def test_naive_stops_inside_tolerance():
    obs = observe(bordered_map(10, 10), Pose2D(5, 5, 0), (5.2, 5.1))
    assert started(NaivePlanner()).compute(obs).twist == Twist(0.0, 0.0)


# ---------------------------------------------------------------- DWA

def test_window_arithmetic_example():
    model = RobotModel(v_max=1.5, a_lin_max=1.0)
    lo, hi, _, _ = dynamic_window(model, Twist(0.5, 0.0), 0.2)
    assert (lo, hi) == pytest.approx((0.3, 0.7), abs=1e-12)


def test_empty_map_goal_ahead_takes_top_speed():
    cfg = DwaConfig()
    obs = Observation(0.0, LaserScan(np.full(SCAN.beam_count, SCAN.range_max)), Pose2D(0, 0, 0),
                      Twist(0.5, 0.0), (6.0, 0.0))
    cmd = dwa_compute(cfg, MODEL, obs, 0.1, SCAN, 0.3)
    top = window_samples(cfg, dynamic_window(MODEL, Twist(0.5, 0.0), 0.1))[:, 0].max()
    assert cmd.twist.v == pytest.approx(top) and cmd.twist.omega == 0.0


def test_wall_half_metre_ahead_every_sample_checked():
    model = RobotModel(v_max=3.0, a_lin_max=1.0)
    world = bordered_map(10, 10)
    cells = world.cells.copy()
    cells[:, 60:62] = True  # wall face at x = 6.0
    world = WorldMap(cells, 0.1)
    pose, twist = Pose2D(5.5, 5.0, 0.0), Twist(1.0, 0.0)
    obs = observe(world, pose, (9, 5), twist)
    cfg = DwaConfig()
    points = obs.scan.points(SCAN)
    samples = window_samples(cfg, dynamic_window(model, twist, 0.1))
    _, admissible, _ = evaluate_samples(cfg, model, samples, points, (3.5, 0.0))
    for (v, w), ok in zip(samples, admissible):
        assert ok == rollout_clear(model, Twist(float(v), float(w)), points)
    cmd = dwa_compute(cfg, model, obs, 0.1, SCAN, 0.3)
    if "recovery" not in cmd.events:
        assert rollout_clear(model, cmd.twist, points)
        assert cmd.twist.v < 1.0  # has to slow down


def test_all_inadmissible_gives_recovery():
    ranges = np.full(SCAN.beam_count, 0.25)  # enclosed inside the robot radius
    obs = Observation(0.0, LaserScan(ranges), Pose2D(0, 0, 0), Twist(0, 0), (5, 0))
    cmd = dwa_compute(DwaConfig(), MODEL, obs, 0.1, SCAN, 0.3)
    assert cmd.twist == Twist(0.0, MODEL.omega_max / 2) and cmd.events == ("recovery",)


@given(st.integers(0, 2 ** 32 - 1))
def test_dwa_output_in_window_and_admissible(seed):
    rng = np.random.default_rng(seed)
    obs = random_dwa_observation(rng, MODEL, SMALL_SCAN)
    cmd = dwa_compute(DwaConfig(), MODEL, obs, 0.1, SMALL_SCAN, 0.3)
    if "recovery" in cmd.events:
        return
    v_lo, v_hi, w_lo, w_hi = window_oracle(MODEL, obs.odom_twist, 0.1)
    assert v_lo - 1e-12 <= cmd.twist.v <= v_hi + 1e-12
    assert w_lo - 1e-12 <= cmd.twist.omega <= w_hi + 1e-12
    if math.hypot(*obs.goal) <= 0.3:  # arrived: hardest braking the window allows
        assert cmd.twist.v == max(v_lo, 0.0) and abs(cmd.twist.omega) == min(abs(w) for w in (w_lo, w_hi, 0.0)
                                                                             if w_lo <= w <= w_hi)
        return
    assert rollout_clear(MODEL, cmd.twist, obs.scan.points(SMALL_SCAN))


@given(st.integers(0, 2 ** 32 - 1))
def test_tie_break_ignores_enumeration_order(seed):
    rng = np.random.default_rng(seed)
    obs = random_dwa_observation(rng, MODEL, SMALL_SCAN)
    cfg = DwaConfig()
    samples = window_samples(cfg, dynamic_window(MODEL, obs.odom_twist, 0.1))
    points = obs.scan.points(SMALL_SCAN)
    target = (float(obs.goal[0]), float(obs.goal[1]))
    scores, adm, _ = evaluate_samples(cfg, MODEL, samples, points, target)
    # quantize so that many exact ties appear
    scores = np.round(scores, 1)
    best = select_sample(samples, scores, adm)
    perm = rng.permutation(len(samples))
    best_p = select_sample(samples[perm], scores[perm], adm[perm])
    if best is None:
        assert best_p is None
    else:
        assert tuple(samples[best]) == tuple(samples[perm][best_p])


def test_tie_prefers_smaller_turn():
    samples = np.array([[0.5, 0.4], [0.5, -0.2], [0.5, 0.2], [0.4, 0.0]])
    scores = np.array([1.0, 1.0, 1.0, 0.5])
    assert select_sample(samples, scores, np.ones(4, bool)) == 1
    assert select_sample(samples, scores, np.array([True, False, True, True])) == 2
    assert select_sample(samples, scores, np.zeros(4, bool)) is None


def test_free_arc_length_straight_and_still():
    cfg = DwaConfig()
    points = np.array([[1.5, 0.0]])
    samples = np.array([[0.5, 0.0], [0.0, 0.0], [0.5, 1.0]])
    free = free_arc_length(cfg, MODEL, samples, points)
    # straight: contact once 1.5 - s < radius + margin, i.e. s > 1.1; the
    # result is the last free step on the grid
    assert 1.1 - cfg.clearance_step - 1e-9 <= free[0] <= 1.1 + 1e-9
    assert free[1] == pytest.approx(1.5 - MODEL.radius - cfg.safety_margin)
    assert free[2] > free[0]
    assert np.all(free_arc_length(cfg, MODEL, samples, np.zeros((0, 2))) == cfg.clearance_cap)


def test_dwa_config_validation():
    with pytest.raises(ValueError):
        DwaConfig(v_samples=2)
    with pytest.raises(ValueError):
        DwaConfig(horizon=0.05, sim_dt=0.1)
    with pytest.raises(ValueError):
        DwaConfig(w_heading=-1.0)


# ---------------------------------------------------------------- APF

def _potential(cfg, points, at):
    d = np.hypot(points[:, 0] - at[0], points[:, 1] - at[1])
    d = d[d < cfg.influence]
    return float(np.sum(0.5 * cfg.k_rep * (1 / d - 1 / cfg.influence) ** 2))


def test_repulsion_is_negative_gradient():
    rng = np.random.default_rng(4)
    cfg = ApfConfig()
    for _ in range(50):
        pts = rng.uniform(-1.2, 1.2, (20, 2))
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 0.2]
        h = 1e-6
        fd = -np.array([(_potential(cfg, pts, (h, 0)) - _potential(cfg, pts, (-h, 0))) / (2 * h),
                        (_potential(cfg, pts, (0, h)) - _potential(cfg, pts, (0, -h))) / (2 * h)])
        assert np.allclose(repulsive_force(cfg, pts), fd, rtol=1e-5, atol=1e-7)


def test_attraction_is_unit_direction():
    f = attractive_force(ApfConfig(), (3.0, 4.0))
    assert f == pytest.approx([0.6, 0.8])
    assert np.all(attractive_force(ApfConfig(), (0.0, 0.0)) == 0)


def test_obstacle_on_goal_line_deflects_heading():
    world = bordered_map(10, 10)
    ped = ((6.0, 5.0), 0.3)
    obs = observe(world, Pose2D(5, 5, 0), (9, 5), agents=[ped])
    cfg = ApfConfig()
    f = net_force(cfg, (4.0, 0.0), obs.scan.points(SCAN))
    assert abs(math.atan2(f[1], f[0])) >= 0.1
    cmd = started(ApfPlanner()).compute(obs)
    assert abs(cmd.twist.omega) >= cfg.k_omega * 0.1 - 1e-12


def test_apf_aligns_with_goal_in_open_space():
    from navbench.geometry import integrate_unicycle
    world = bordered_map(20, 20)
    planner = started(ApfPlanner())
    pose, goal = Pose2D(10, 10, 2.0), (17.0, 10.0)
    for _ in range(30):
        obs = observe(world, pose, goal)
        tw = planner.compute(obs).twist
        pose = integrate_unicycle(pose, tw, 0.1)
    err = math.atan2(goal[1] - pose.y, goal[0] - pose.x) - pose.theta
    assert abs(math.remainder(err, 2 * math.pi)) < 0.05


def test_apf_goal_reached_and_recovery():
    world = bordered_map(10, 10)
    planner = started(ApfPlanner())
    assert planner.compute(observe(world, Pose2D(5, 5, 0), (5.1, 5.1))).twist == Twist(0.0, 0.0)
    # goal exactly behind a dense wall of points cancels attraction: stuck then recovery
    planner = started(ApfPlanner(), params={"stuck_force": 10.0})
    events = [planner.compute(observe(world, Pose2D(5, 5, 0), (8, 5))).events for _ in range(25)]
    assert ("recovery",) in events and events[0] == ()


# ---------------------------------------------------------------- contract

def test_carrot_walks_reference_path():
    path = [(float(x), 0.0) for x in range(10)]
    obs = Observation(0.0, LaserScan(np.zeros(1)), Pose2D(2.1, 0.0, 0.0), Twist(0, 0), (9.0, 0.0),
                      reference_path=path)
    assert carrot(obs, 1.5) == (4.0, 0.0)
    far = Observation(0.0, LaserScan(np.zeros(1)), Pose2D(8.5, 0, 0), Twist(0, 0), (9.0, 0.0),
                      reference_path=path)
    assert carrot(far, 1.5) == (9.0, 0.0)


def test_nonfinite_command_is_planner_error():
    with pytest.raises(PlannerError):
        PlannerCommand(Twist(float("nan"), 0.0))


@pytest.mark.parametrize("name", ["naive", "apf", "dwa"])
def test_builtins_are_deterministic(name):
    rng = np.random.default_rng(1)
    obs = [random_dwa_observation(rng, MODEL, SCAN) for _ in range(20)]
    a = started(make_planner({"id": name}))
    b = started(make_planner({"id": name}))
    assert [a.compute(o) for o in obs] == [b.compute(o) for o in obs]


def test_make_planner_errors():
    with pytest.raises(ValueError):
        make_planner({"id": "x", "kind": "builtin", "name": "teb"})
    with pytest.raises(ValueError):
        make_planner({"id": "x", "kind": "plugin"})
    with pytest.raises(ValueError):
        make_planner({"id": "x", "kind": "ros"})
    assert isinstance(make_planner({"id": "fast", "name": "dwa", "config": {"horizon": 2.0}}), DwaPlanner)


def test_observation_wire_round_trip():
    rng = np.random.default_rng(2)
    obs = random_dwa_observation(rng, MODEL, SCAN)
    obs = Observation(obs.stamp, obs.scan, obs.odom_pose, obs.odom_twist, obs.goal,
                      reference_path=[(1.0, 2.0), (3.0, 4.0)])
    back = Observation.from_wire(obs.to_wire(tick=3))
    assert back.to_wire(3) == obs.to_wire(3)
    assert obs.to_wire(3)["tick"] == 3 and "global_map" not in obs.to_wire()
