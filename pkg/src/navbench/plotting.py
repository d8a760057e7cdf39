"""Dependency-free SVG figures: metric box plots and trajectory maps."""

from __future__ import annotations

import logging
import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .episode import EpisodeRecord
from .geometry import WorldMap
from .metrics import UNITS, AggregateReport

log = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22")
COLLISION_COLOR = "red"
MAX_QUALITATIVE_PLANNERS = 4


class CrowdedPlotWarning(UserWarning):
    pass


@dataclass
class PlotSpec:
    kind: str = "quantitative"
    metrics: Sequence[str] | None = None
    planners: Sequence[str] | None = None
    colors: dict[str, str] = field(default_factory=dict)
    width: int | None = None
    height: int = 360
    px_per_m: float | None = None
    margin: float = 40.0


def planner_colors(planner_ids, overrides=None) -> dict[str, str]:
    """Palette colour per planner, assigned in sorted-id order."""
    out = {pid: PALETTE[i % len(PALETTE)] for i, pid in enumerate(sorted(set(planner_ids)))}
    out.update(overrides or {})
    return out


def fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _svg(width: float, height: float) -> ET.Element:
    return ET.Element("svg", {"xmlns": "http://www.w3.org/2000/svg", "version": "1.1",
                              "width": fmt(width), "height": fmt(height),
                              "viewBox": f"0 0 {fmt(width)} {fmt(height)}"})


def _text(parent, x, y, s, **attrs):
    el = ET.SubElement(parent, "text", {"x": fmt(x), "y": fmt(y), "font-family": "sans-serif",
                                        "font-size": "12", **attrs})
    el.text = s
    return el


def to_string(root: ET.Element) -> str:
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


# ---------------------------------------------------------------- quantitative

@dataclass(frozen=True)
class ValueAxis:
    """Linear map from metric value to pixel row (larger values higher up)."""

    lo: float
    hi: float
    top: float
    bottom: float

    @classmethod
    def fit(cls, values, top: float, bottom: float) -> ValueAxis:
        lo, hi = float(min(values)), float(max(values))
        if hi - lo < 1e-12:
            pad = max(abs(lo) * 0.1, 0.5)
        else:
            pad = 0.05 * (hi - lo)
        return cls(lo - pad, hi + pad, top, bottom)

    def to_px(self, v: float) -> float:
        return self.bottom - (v - self.lo) / (self.hi - self.lo) * (self.bottom - self.top)

    def ticks(self, n: int = 5) -> list[float]:
        return list(np.linspace(self.lo, self.hi, n))


def box_stats(values: Sequence[float]) -> dict[str, float]:
    a = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(a, [25, 50, 75])
    iqr = q3 - q1
    lo_w = float(a[a >= q1 - 1.5 * iqr].min())
    hi_w = float(a[a <= q3 + 1.5 * iqr].max())
    return {"q1": float(q1), "median": float(med), "q3": float(q3), "lo": lo_w, "hi": hi_w}


def metric_panel(metric: str, groups: list[tuple[str, list[float]]], colors: dict[str, str],
                 spec: PlotSpec) -> str:
    """One box-with-points chart; `groups` is [(planner_id, values), ...]."""
    left, right, top, bottom_pad = 70.0, 20.0, 40.0, 60.0
    slot = 90.0
    width = spec.width or left + right + slot * len(groups)
    height = spec.height
    axis = ValueAxis.fit([v for _, vals in groups for v in vals], top, height - bottom_pad)
    root = _svg(width, height)
    ET.SubElement(root, "rect", {"x": "0", "y": "0", "width": fmt(width), "height": fmt(height),
                                 "fill": "white"})
    unit = UNITS.get(metric, "-")
    _text(root, width / 2, 20, metric, **{"text-anchor": "middle", "font-size": "14"})
    label = _text(root, 16, (top + axis.bottom) / 2, f"{metric} [{unit}]",
                  **{"text-anchor": "middle",
                     "transform": f"rotate(-90 16 {fmt((top + axis.bottom) / 2)})"})
    label.set("class", "axis-label")
    axes = ET.SubElement(root, "g", {"class": "axis", "stroke": "black"})
    ET.SubElement(axes, "line", {"x1": fmt(left), "y1": fmt(top), "x2": fmt(left),
                                 "y2": fmt(axis.bottom)})
    for tv in axis.ticks():
        y = axis.to_px(tv)
        ET.SubElement(axes, "line", {"x1": fmt(left - 4), "y1": fmt(y), "x2": fmt(left), "y2": fmt(y)})
        _text(root, left - 6, y + 4, f"{tv:.3g}", **{"text-anchor": "end", "font-size": "10"})

    for i, (pid, vals) in enumerate(groups):
        cx = left + slot * (i + 0.5)
        st = box_stats(vals)
        color = colors[pid]
        g = ET.SubElement(root, "g", {"class": "box", "data-planner": pid})
        ET.SubElement(g, "line", {"class": "whisker", "x1": fmt(cx), "x2": fmt(cx),
                                  "y1": fmt(axis.to_px(st["lo"])), "y2": fmt(axis.to_px(st["hi"])),
                                  "stroke": "black"})
        y_q3, y_q1 = axis.to_px(st["q3"]), axis.to_px(st["q1"])
        ET.SubElement(g, "rect", {"class": "iqr", "x": fmt(cx - 25), "y": fmt(y_q3), "width": "50",
                                  "height": fmt(max(y_q1 - y_q3, 0.0)), "fill": color,
                                  "fill-opacity": "0.35", "stroke": color})
        ym = axis.to_px(st["median"])
        ET.SubElement(g, "line", {"class": "median", "x1": fmt(cx - 25), "x2": fmt(cx + 25),
                                  "y1": fmt(ym), "y2": fmt(ym), "stroke": "black",
                                  "stroke-width": "2", "data-value": repr(st["median"])})
        for j, v in enumerate(vals):
            # deterministic jitter so overlapping points stay visible
            jx = ((j * 0.618034) % 1.0 - 0.5) * 30
            ET.SubElement(g, "circle", {"class": "point", "cx": fmt(cx + jx), "cy": fmt(axis.to_px(v)),
                                        "r": "2.5", "fill": color, "fill-opacity": "0.8"})
        _text(root, cx, axis.bottom + 18, pid, **{"text-anchor": "middle"})
    return to_string(root)


def plot_quantitative(aggregates: Sequence[AggregateReport], spec: PlotSpec | None = None) -> dict[str, str]:
    """Box-with-points SVG per metric, one box per planner."""
    spec = spec or PlotSpec()
    if not aggregates:
        raise ValueError("need at least one aggregate group")
    aggs = [a for a in aggregates if spec.planners is None or a.planner_id in spec.planners]
    colors = planner_colors([a.planner_id for a in aggs], spec.colors)
    metrics = list(spec.metrics) if spec.metrics else sorted({m for a in aggs for m in a.values})
    out = {}
    for metric in metrics:
        groups: dict[str, list[float]] = {}
        for a in sorted(aggs, key=lambda a: (a.planner_id, a.scenario_id)):
            groups.setdefault(a.planner_id, []).extend(a.values.get(metric, []))
        groups = {k: v for k, v in groups.items() if v}
        if not groups:
            log.info("metric %s absent from all episodes; panel omitted", metric)
            continue
        out[metric] = metric_panel(metric, sorted(groups.items()), colors, spec)
    return out


# ---------------------------------------------------------------- qualitative

@dataclass(frozen=True)
class MapTransform:
    """World metres to SVG pixels: uniform scale, y axis flipped."""

    x0: float
    y1: float
    scale: float
    margin: float

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        return (self.margin + (x - self.x0) * self.scale, self.margin + (self.y1 - y) * self.scale)

    def to_world(self, px: float, py: float) -> tuple[float, float]:
        return (self.x0 + (px - self.margin) / self.scale, self.y1 - (py - self.margin) / self.scale)


def map_transform(world: WorldMap, spec: PlotSpec) -> MapTransform:
    x0, _, x1, y1 = world.extent
    scale = spec.px_per_m or (spec.width or 800) / (x1 - x0)
    return MapTransform(x0, y1, scale, spec.margin)


def _points(tf: MapTransform, pts) -> str:
    return " ".join(f"{fmt(px)},{fmt(py)}" for px, py in (tf.to_px(x, y) for x, y in pts))


def plot_qualitative(records: Sequence[EpisodeRecord], world: WorldMap,
                     spec: PlotSpec | None = None) -> str:
    """Occupancy map with robot trajectories, pedestrian paths and collision markers."""
    spec = spec or PlotSpec(kind="qualitative")
    if not records:
        raise ValueError("need at least one record")
    digest = world.digest()
    for r in records:
        if r.meta.get("map_digest") != digest:
            raise ValueError(f"record {r.file_name()} was recorded on a different map")
    if spec.planners is not None:
        records = [r for r in records if r.planner_id in spec.planners]
    planners = sorted({r.planner_id for r in records})
    if len(planners) > MAX_QUALITATIVE_PLANNERS:
        msg = (f"{len(planners)} planners in one trajectory plot; more than "
               f"{MAX_QUALITATIVE_PLANNERS} makes it hard to read")
        log.warning(msg)
        warnings.warn(msg, CrowdedPlotWarning, stacklevel=2)
    colors = planner_colors(planners, spec.colors)
    tf = map_transform(world, spec)
    wm, hm = world.size_m
    width = 2 * tf.margin + wm * tf.scale
    height = 2 * tf.margin + hm * tf.scale + 20 * len(planners)
    root = _svg(width, height)
    ET.SubElement(root, "rect", {"x": "0", "y": "0", "width": fmt(width), "height": fmt(height),
                                 "fill": "white"})

    occ = ET.SubElement(root, "g", {"class": "occupancy", "fill": "#333333"})
    res = world.resolution
    for r in range(world.height):
        row = world.cells[r]
        c = 0
        while c < world.width:
            if not row[c]:
                c += 1
                continue
            start = c
            while c < world.width and row[c]:
                c += 1
            x = world.origin.x + start * res
            y_top = world.origin.y + (r + 1) * res
            px, py = tf.to_px(x, y_top)
            ET.SubElement(occ, "rect", {"x": fmt(px), "y": fmt(py), "width": fmt((c - start) * res * tf.scale),
                                        "height": fmt(res * tf.scale)})

    peds = ET.SubElement(root, "g", {"class": "pedestrians"})
    seen_scenarios = set()
    for rec in records:
        if rec.scenario_id in seen_scenarios or not rec.frames:
            continue
        seen_scenarios.add(rec.scenario_id)
        radii = {int(i): float(rr) for i, rr in rec.meta.get("pedestrian_radii", [])}
        tracks: dict[int, list[tuple[float, float]]] = {}
        for f in rec.frames:
            for pid, x, y in f.pedestrians:
                tracks.setdefault(pid, []).append((x, y))
        for pid in sorted(tracks):
            pts = tracks[pid]
            ET.SubElement(peds, "polyline", {"class": "pedestrian-path", "points": _points(tf, pts),
                                             "fill": "none", "stroke": "black", "stroke-width": "1"})
            cx, cy = tf.to_px(*pts[-1])
            ET.SubElement(peds, "circle", {"class": "pedestrian", "cx": fmt(cx), "cy": fmt(cy),
                                           "r": fmt(radii.get(pid, 0.3) * tf.scale), "fill": "white",
                                           "stroke": "black"})

    trajs = ET.SubElement(root, "g", {"class": "trajectories"})
    hits = ET.SubElement(root, "g", {"class": "collisions"})
    for rec in records:
        color = colors[rec.planner_id]
        starts = rec.meta.get("starts", [])
        n_rob = len(rec.meta.get("robot_models", [])) or (len(rec.frames[0].robots) if rec.frames else 0)
        for i in range(n_rob):
            pts = [tuple(starts[i][:2])] if i < len(starts) else []
            pts += [(f.robots[i].pose.x, f.robots[i].pose.y) for f in rec.frames]
            if not pts:
                continue
            ET.SubElement(trajs, "polyline", {"class": "trajectory", "data-planner": rec.planner_id,
                                              "data-episode": str(rec.episode_index),
                                              "points": _points(tf, pts), "fill": "none",
                                              "stroke": color, "stroke-width": "2"})
        for ev in rec.collision_events:
            radius = rec.meta["robot_models"][ev.robot]["radius"]
            cx, cy = tf.to_px(*ev.position)
            ET.SubElement(hits, "circle", {"class": "collision", "cx": fmt(cx), "cy": fmt(cy),
                                           "r": fmt(radius * tf.scale), "fill": "none",
                                           "stroke": COLLISION_COLOR, "stroke-width": "2"})

    goals = ET.SubElement(root, "g", {"class": "goals"})
    for gx, gy in sorted({tuple(g) for rec in records for g in rec.meta.get("goals", [])}):
        px, py = tf.to_px(gx, gy)
        ET.SubElement(goals, "path", {"class": "goal", "stroke": "black", "stroke-width": "2",
                                      "d": f"M{fmt(px - 6)},{fmt(py - 6)} L{fmt(px + 6)},{fmt(py + 6)} "
                                           f"M{fmt(px - 6)},{fmt(py + 6)} L{fmt(px + 6)},{fmt(py - 6)}"})

    legend = ET.SubElement(root, "g", {"class": "legend"})
    y0 = 2 * tf.margin + hm * tf.scale - tf.margin / 2
    for i, pid in enumerate(planners):
        y = y0 + 20 * i
        ET.SubElement(legend, "rect", {"x": fmt(tf.margin), "y": fmt(y), "width": "14", "height": "10",
                                       "fill": colors[pid]})
        _text(legend, tf.margin + 20, y + 10, pid)
    return to_string(root)
