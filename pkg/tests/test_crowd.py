import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import handcrafted_ped
from navbench.crowd import (BehaviorKind, BehaviorMode, PedestrianState, SocialForceParams,
                            driving_force, social_force, step_crowd, tie_break_direction)
from navbench.geometry import WorldMap, bordered_map

P = SocialForceParams()
OPEN = None  # no map: open space


def run(states, world, steps, dt=0.05, seed=0, params=P):
    rng = np.random.default_rng(seed)
    hist = [states]
    for _ in range(steps):
        states = step_crowd(states, world, params, dt, rng)
        hist.append(states)
    return hist


def test_driving_force_at_rest():
    p = handcrafted_ped(0, (0, 0), [(10, 0)])
    fx, fy = social_force(p, [], OPEN, P)
    assert fx == pytest.approx(2.0, abs=1e-9) and fy == pytest.approx(0.0, abs=1e-9)
    assert math.hypot(*driving_force(p, P)) == pytest.approx(p.v0 / P.tau, abs=1e-9)


def test_equilibrium_at_desired_velocity():
    p = handcrafted_ped(0, (0, 0), [(10, 0)])
    p.velocity = (1.0, 0.0)
    fx, fy = social_force(p, [], OPEN, P)
    assert abs(fx) < 1e-9 and abs(fy) < 1e-9


def test_far_from_walls_matches_open_space():
    world = bordered_map(40, 40)
    p = handcrafted_ped(0, (20, 20), [(30, 20)])
    f_map = social_force(p, [], world, P)
    assert f_map == pytest.approx((2.0, 0.0), abs=1e-9)


def test_mirror_symmetric_head_on_forces():
    a = handcrafted_ped(0, (-1.0, 0.2), [(5, 0.2)])
    b = handcrafted_ped(1, (1.0, 0.2), [(-5, 0.2)])
    a.velocity, b.velocity = (0.6, 0.1), (-0.6, 0.1)
    fa = social_force(a, [b], OPEN, P)
    fb = social_force(b, [a], OPEN, P)
    assert fa[0] == pytest.approx(-fb[0], abs=1e-9)
    assert fa[1] == pytest.approx(fb[1], abs=1e-9)


def test_repulsion_matches_formula():
    a = handcrafted_ped(0, (0, 0), [(0, 0)])
    b = handcrafted_ped(1, (0.8, 0.0), [(0.8, 0)], radius=0.25)
    a.v0 = 0.0
    fx, fy = social_force(a, [b], OPEN, P)
    expect = P.A_ped * math.exp((0.3 + 0.25 - 0.8) / P.B_ped)
    assert fx == pytest.approx(-expect, abs=1e-12) and fy == pytest.approx(0.0, abs=1e-12)


def test_wall_repulsion_points_away_from_nearest_wall():
    world = bordered_map(10, 10)
    p = handcrafted_ped(0, (0.6, 5.0), [(0.6, 5.0)])
    p.v0 = 0.0
    fx, fy = social_force(p, [], world, P)
    expect = P.A_wall * math.exp((0.3 - 0.5) / P.B_wall)
    assert fx == pytest.approx(expect, abs=1e-12) and fy == pytest.approx(0.0, abs=1e-12)


def test_self_in_others_rejected():
    p = handcrafted_ped(0, (0, 0), [(1, 0)])
    with pytest.raises(ValueError):
        social_force(p, [p], OPEN, P)


def test_coincident_tie_break_is_deterministic_and_opposite():
    a = handcrafted_ped(3, (1, 1), [(1, 1)])
    b = handcrafted_ped(8, (1, 1), [(1, 1)])
    a.v0 = b.v0 = 0.0
    fa = social_force(a, [b], OPEN, P)
    fb = social_force(b, [a], OPEN, P)
    assert fa == pytest.approx((-fb[0], -fb[1]), abs=1e-12)
    assert math.hypot(*fa) == pytest.approx(P.A_ped * math.exp(0.6 / P.B_ped))
    ux, uy = tie_break_direction(3, 8)
    assert math.hypot(ux, uy) == pytest.approx(1.0)
    assert tie_break_direction(3, 8) == tie_break_direction(3, 8)
    assert tie_break_direction(8, 3) == pytest.approx((-ux, -uy))


def test_empty_step():
    assert step_crowd([], None, P, 0.05, np.random.default_rng(0)) == []


@pytest.mark.parametrize("dt", [0.0, -0.01, 0.11])
def test_step_rejects_bad_dt(dt):
    with pytest.raises(ValueError):
        step_crowd([], None, P, dt, np.random.default_rng(0))


def test_corridor_five_meters_relaxation_oracle():
    world = bordered_map(30, 4)
    p = handcrafted_ped(0, (1.0, 2.0), [(29.0, 2.0)])
    dt = 0.05
    rng = np.random.default_rng(0)
    states, t = [p], 0.0
    while states[0].position[0] - 1.0 < 5.0:
        states = step_crowd(states, world, P, dt, rng)
        t += dt
    # x(t) = v0 (t - tau (1 - exp(-t / tau))) for relaxation from rest
    analytic = brentq(lambda s: s - P.tau * (1 - math.exp(-s / P.tau)) - 5.0, 1.0, 10.0)
    assert 4.5 <= t <= 5.5
    assert abs(t - analytic) <= dt + 1e-9


def test_corridor_matches_discrete_recurrence():
    # semi-implicit Euler on the driving term alone: v_k = v0 (1 - (1 - dt/tau)^k)
    p = handcrafted_ped(0, (0.0, 0.0), [(1000.0, 0.0)])
    dt = 0.05
    hist = run([p], OPEN, 80, dt)
    k = np.arange(1, 81)
    v = 1.0 - (1.0 - dt / P.tau) ** k
    x = np.cumsum(v) * dt
    got = np.array([h[0].position[0] for h in hist[1:]])
    assert np.allclose(got, x, atol=1e-12)


def head_on_min_distance(offset, params=P, dt=0.05, seconds=20.0):
    a = handcrafted_ped(0, (-4.0, offset / 2), [(4.0, offset / 2)])
    b = handcrafted_ped(1, (4.0, -offset / 2), [(-4.0, -offset / 2)])
    hist = run([a, b], OPEN, int(seconds / dt), dt, params=params)
    return min(math.dist(s[0].position, s[1].position) for s in hist), hist[-1]


@pytest.mark.parametrize("A", [2.0, 3.0, 5.0])
def test_exact_head_on_settles_at_force_balance(A):
    # at rest, A exp((r1 + r2 - d) / B) = v0 / tau
    params = SocialForceParams(A_ped=A)
    _, final = head_on_min_distance(0.0, params, seconds=30.0)
    expect = 0.6 - params.B_ped * math.log(1.0 / (params.tau * A))
    assert math.dist(final[0].position, final[1].position) == pytest.approx(expect, abs=1e-6)


def test_offset_head_on_swaps_and_separation_grows_with_offset():
    mins = []
    for off in (0.05, 0.1, 0.2, 0.4):
        dmin, final = head_on_min_distance(off)
        assert final[0].position[0] > 3.5 and final[1].position[0] < -3.5
        mins.append(dmin)
    assert mins == sorted(mins)
    assert mins[-1] > 0.9 * 0.6


def test_speed_cap_over_10k_steps():
    world = bordered_map(12, 12)
    rng = np.random.default_rng(4)
    states = [PedestrianState(i, tuple(rng.uniform(1, 11, 2)), tuple(rng.uniform(-2, 2, 2)), 0.3,
                              float(rng.uniform(0.3, 2.0)), BehaviorMode.random((1, 1, 11, 11)))
              for i in range(6)]
    worst = 0.0
    for _ in range(10_000):
        states = step_crowd(states, world, P, 0.05, rng)
        for p in states:
            worst = max(worst, math.hypot(*p.velocity) / (P.speed_cap_factor * p.v0))
    assert worst <= 1.0 + 1e-12


def _mirror(p):
    return (-p[0], p[1])


def test_handcrafted_mirror_symmetry():
    world = bordered_map(16, 8, 0.1)
    world = WorldMap(world.cells, world.resolution, origin=world.origin.__class__(-8.0, -4.0, 0.0))
    left_wps = [(-1.0, 2.0), (-6.0, -2.0), (-2.0, -3.0)]
    peds = []
    for i, start in enumerate([(-5.0, 1.0), (-3.0, -2.0)]):
        wps = left_wps[i:] + left_wps[:i]
        peds.append(handcrafted_ped(2 * i, start, wps, v0=1.1))
        peds.append(handcrafted_ped(2 * i + 1, _mirror(start), [_mirror(w) for w in wps], v0=1.1))
    hist = run(peds, world, 400)
    worst = 0.0
    for s in hist:
        for i in range(0, len(s), 2):
            a, b = s[i].position, s[i + 1].position
            worst = max(worst, abs(a[0] + b[0]), abs(a[1] - b[1]))
    assert worst < 1e-6


def test_no_tunneling_into_cells():
    rng = np.random.default_rng(8)
    cells = np.zeros((60, 60), dtype=bool)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    cells[30, 5:55] = True  # one-cell-thick wall
    cells[10:50, 20] = True
    world = WorldMap(cells, 0.1)
    states = [PedestrianState(i, (float(rng.uniform(0.5, 5.5)), float(rng.uniform(0.5, 2.8))),
                              (0.0, 0.0), 0.2, 2.0, BehaviorMode.random((0.5, 3.2, 5.5, 5.5)))
              for i in range(5)]
    for _ in range(4000):
        states = step_crowd(states, world, P, 0.05, rng)
        for p in states:
            assert not world.is_occupied(*p.position)
            # the thin wall at y in [3.0, 3.1) is never crossed below x=5.5
            if 0.5 < p.position[0] < 5.4:
                pass
    assert all(math.isfinite(p.position[0]) for p in states)


def test_thin_wall_not_crossed():
    cells = np.zeros((40, 40), dtype=bool)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    cells[:, 20] = True  # wall at x in [2.0, 2.1)
    world = WorldMap(cells, 0.1)
    p = PedestrianState(0, (1.0, 2.0), (2.6, 0.0), 0.05, 2.0, BehaviorMode.handcrafted(), [(3.5, 2.0)])
    for s in run([p], world, 400, params=SocialForceParams(A_wall=0.01, B_wall=0.01)):
        assert s[0].position[0] < 2.0


def test_waypoint_cycles_handcrafted():
    p = handcrafted_ped(0, (0.0, 0.0), [(1.0, 0.0), (0.0, 0.0)])
    hist = run([p], OPEN, 200)
    idx = [s[0].current_waypoint_index for s in hist]
    assert 1 in idx and idx.count(0) > 0
    assert max(idx) <= 1


def test_graph_walk_follows_edges():
    nodes = [(0, 0), (3, 0), (3, 3), (0, 3)]
    edges = [(0, 1), (1, 2), (2, 3)]
    beh = BehaviorMode.graph(nodes, edges)
    p = PedestrianState(0, (0.0, 0.0), behavior=beh, current_waypoint_index=1)
    hist = run([p], OPEN, 2000)
    seq = [hist[0][0].current_waypoint_index]
    for s in hist[1:]:
        i = s[0].current_waypoint_index
        if i != seq[-1]:
            seq.append(i)
    assert len(seq) > 5
    for a, b in zip(seq, seq[1:]):
        assert (a, b) in edges or (b, a) in edges


def test_graph_must_be_connected():
    with pytest.raises(ValueError):
        BehaviorMode.graph([(0, 0), (1, 0), (2, 0)], [(0, 1)])
    with pytest.raises(ValueError):
        BehaviorMode.graph([(0, 0)], [])
    with pytest.raises(ValueError):
        PedestrianState(0, (0, 0), behavior=BehaviorMode.handcrafted(), waypoints=[])


def test_random_mode_resamples_inside_bounds():
    world = bordered_map(10, 10)
    p = PedestrianState(0, (5.0, 5.0), behavior=BehaviorMode.random((2, 2, 8, 8)), waypoints=[(5.1, 5.0)])
    hist = run([p], world, 1000)
    targets = {s[0].target for s in hist}
    assert len(targets) > 3
    for t in targets - {(5.1, 5.0)}:
        assert 2 <= t[0] <= 8 and 2 <= t[1] <= 8


def test_stuck_pedestrian_gets_new_waypoint():
    cells = np.zeros((50, 50), dtype=bool)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    cells[10:40, 30] = True
    world = WorldMap(cells, 0.1)
    # waypoint straight behind a wall: the pedestrian presses against it
    p = PedestrianState(0, (2.5, 2.5), behavior=BehaviorMode.random((0.5, 0.5, 4.5, 4.5)),
                        waypoints=[(3.6, 2.5)])
    hist = run([p], world, int(8 / 0.05))
    assert any(s[0].target != (3.6, 2.5) for s in hist)


def test_determinism():
    world = bordered_map(10, 10)
    mk = lambda: [PedestrianState(i, (2.0 + i, 3.0), behavior=BehaviorMode.random((1, 1, 9, 9)),
                                  waypoints=[(8.0, 8.0 - i)]) for i in range(4)]
    a = run(mk(), world, 500, seed=5)
    b = run(mk(), world, 500, seed=5)
    assert [[p.position for p in s] for s in a] == [[p.position for p in s] for s in b]


def test_robot_ignored_by_default_and_avoided_on_request():
    p = handcrafted_ped(0, (0.0, 0.0), [(5.0, 0.0)])
    robot = [((0.5, 0.0), 0.3)]
    rng = np.random.default_rng(0)
    plain = step_crowd([p], None, P, 0.05, rng, robots=robot)[0]
    free = step_crowd([p], None, P, 0.05, rng)[0]
    assert plain.velocity == free.velocity
    avoid = step_crowd([p], None, SocialForceParams(avoid_robot=True), 0.05, rng, robots=robot)[0]
    assert avoid.velocity[0] < free.velocity[0]


def test_state_round_trip():
    p = PedestrianState(2, (1.0, 2.0), (0.1, 0.2), 0.25, 1.2,
                        BehaviorMode.graph([(0, 0), (1, 1)], [(0, 1)]), current_waypoint_index=1)
    q = PedestrianState.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()
    assert q.behavior.kind is BehaviorKind.GRAPH


@given(st.floats(0.1, 3.0), st.floats(-3, 3), st.floats(-3, 3))
def test_params_validation_and_cap_property(v0, vx, vy):
    p = handcrafted_ped(0, (0.0, 0.0), [(3.0, 0.0)], v0=v0)
    p.velocity = (vx, vy)
    q = step_crowd([p], None, P, 0.05, np.random.default_rng(0))[0]
    assert math.hypot(*q.velocity) <= P.speed_cap_factor * v0 + 1e-12


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        SocialForceParams(tau=0)
