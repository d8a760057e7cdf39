"""External planner process: the naive go-to-goal controller over the wire protocol.

Standard library only, so it doubles as a template for wrapping planners
written elsewhere. Run as ``python -m navbench.plugins.echo_naive`` or by
path.
"""

import json
import math
import sys

TWO_PI = 2.0 * math.pi


def command(obs, cfg):
    pose = obs["odom_pose"]
    gx, gy = obs["goal"]
    dx = gx - pose["x"]
    dy = gy - pose["y"]
    dist = math.hypot(dx, dy)
    if dist <= cfg["goal_tolerance"]:
        return 0.0, 0.0
    err = math.remainder(math.atan2(dy, dx) - pose["theta"], TWO_PI)
    if err <= -math.pi:
        err += TWO_PI
    omega = max(-cfg["omega_max"], min(cfg["omega_max"], cfg["k_omega"] * err))
    if abs(err) > cfg["turn_threshold"]:
        return 0.0, omega
    return min(cfg["v_max"], cfg["k_v"] * dist) * math.cos(err), omega


def main(stdin=sys.stdin, stdout=sys.stdout):
    cfg = None
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "init":
            params = msg.get("params") or {}
            model = msg["robot_model"]
            cfg = {"goal_tolerance": msg["goal_tolerance"], "v_max": model["v_max"],
                   "omega_max": model["omega_max"], "k_omega": params.get("k_omega", 1.5),
                   "k_v": params.get("k_v", 1.0),
                   "turn_threshold": params.get("turn_threshold", math.pi / 4)}
            reply = {"type": "ready"}
        elif kind == "obs":
            v, w = command(msg, cfg)
            reply = {"type": "cmd", "v": v, "omega": w}
            if "tick" in msg:
                reply["tick"] = msg["tick"]
        elif kind == "shutdown":
            break
        else:
            continue
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


if __name__ == "__main__":
    main()
