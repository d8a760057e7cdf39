"""Planner contract, built-in reference planners and the external-process bridge."""

from __future__ import annotations

from .apf import ApfConfig, ApfPlanner
from .base import (CONTROL_DT, GOAL_TOLERANCE, Observation, Planner, PlannerCommand,
                   PlannerContext, PlannerError, PlannerTimeout)
from .bridge import PluginPlanner
from .dwa import DwaConfig, DwaPlanner, dwa_compute, dynamic_window
from .naive import NaivePlanner

BUILTIN = {"naive": NaivePlanner, "apf": ApfPlanner, "dwa": DwaPlanner}


def make_planner(spec: dict) -> Planner:
    """Build a planner from a binding dict.

    ``{"id": .., "kind": "builtin", "name": "dwa", "config": {...}}`` or
    ``{"id": .., "kind": "plugin", "command": [...], "config": {...}}``.
    """
    kind = spec.get("kind", "builtin")
    config = dict(spec.get("config", {}))
    if kind == "builtin":
        name = spec.get("name", spec.get("id"))
        if name not in BUILTIN:
            raise ValueError(f"unknown builtin planner {name!r}; choose from {sorted(BUILTIN)}")
        return BUILTIN[name](**config)
    if kind == "plugin":
        command = spec.get("command")
        if not command:
            raise ValueError("plugin planner needs a command")
        extra = {k: spec[k] for k in ("deadline", "handshake_timeout") if k in spec}
        return PluginPlanner(command, planner_id=spec.get("id", "plugin"), **extra, **config)
    raise ValueError(f"unknown planner kind {kind!r}")


__all__ = ["ApfConfig", "ApfPlanner", "BUILTIN", "CONTROL_DT", "DwaConfig", "DwaPlanner",
           "GOAL_TOLERANCE", "NaivePlanner", "Observation", "Planner", "PlannerCommand",
           "PlannerContext", "PlannerError", "PlannerTimeout", "PluginPlanner", "dwa_compute",
           "dynamic_window", "make_planner"]
