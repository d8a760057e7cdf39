"""Desk-scale comparison of the built-in planners on one fixed-seed 20x20 m map.

Two crowd densities (5 and 10 pedestrians), 30 episodes per planner each.
Writes records, metrics CSVs and SVG figures under --out and prints the
summary table. Usage::

    python3 scripts/methodology.py --out runs/methodology [--episodes 30]
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from navbench.episode import run_batch
from navbench.metrics import episodes_csv, evaluate_records, group_reports, summary_csv
from navbench.plotting import PlotSpec, plot_qualitative, plot_quantitative
from navbench.taskgen import TaskMode, TaskSpec, generate_random_map, sample_task, save_map, save_scenario

MAP_SEED = 7
N_STATIC = 4
DENSITIES = (5, 10)
TIMEOUT = 60.0
PLANNERS = [{"id": "naive", "kind": "builtin"}, {"id": "apf", "kind": "builtin"},
            {"id": "dwa", "kind": "builtin"}]


def build_scenarios(map_seed: int = MAP_SEED, timeout: float = TIMEOUT):
    world = generate_random_map(map_seed, 20.0, 20.0, 0.1, N_STATIC)
    base = sample_task(world, TaskSpec(TaskMode.RANDOM, max(DENSITIES), N_STATIC), map_seed,
                       scenario_id="desk", timeout=timeout)
    # same map, start and goal; the sparse crowd is a prefix of the dense one
    out = []
    for n in DENSITIES:
        out.append(replace(base, id=f"desk_p{n}", pedestrians=base.pedestrians[:n]))
    return world, out


def run(episodes: int = 30, out: str | Path | None = None, parallelism: int = 1,
        map_seed: int = MAP_SEED, timeout: float = TIMEOUT):
    world, scenarios = build_scenarios(map_seed, timeout)
    rec_dir = None if out is None else Path(out) / "records"
    records = run_batch(scenarios, PLANNERS, episodes, parallelism=parallelism, output_dir=rec_dir)
    aggs = group_reports(evaluate_records(records))
    if out is not None:
        out = Path(out)
        save_map(world, out / "map.json")
        for s in scenarios:
            save_scenario(s, out / f"{s.id}.json")
        (out / "summary.csv").write_text(summary_csv(aggs))
        (out / "episodes.csv").write_text(episodes_csv(evaluate_records(records)))
        figs = out / "figures"
        figs.mkdir(exist_ok=True)
        for metric, svg in plot_quantitative(aggs, PlotSpec(metrics=["collisions", "path_length",
                                                                     "jerk_avg", "time_to_goal"])).items():
            (figs / f"{metric}.svg").write_text(svg)
        for s in scenarios:
            first = [r for r in records if r.scenario_id == s.id and r.episode_index == 0]
            (figs / f"{s.id}_trajectories.svg").write_text(
                plot_qualitative(first, world, PlotSpec(kind="qualitative", px_per_m=30)))
    return records, aggs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/methodology")
    ap.add_argument("--episodes", type=int, default=30)
    ap.add_argument("--parallelism", type=int, default=1)
    args = ap.parse_args()
    t0 = time.perf_counter()
    records, aggs = run(args.episodes, args.out, args.parallelism)
    wall = time.perf_counter() - t0
    for a in aggs:
        col = a.stats.get("collisions")
        ttg = a.stats.get("time_to_goal")
        print(f"{a.scenario_id:10s} {a.planner_id:6s} success={a.success_rate:6.1f}% "
              f"collisions_mean={col.mean:.3f} "
              f"time_to_goal_mean={'-' if ttg is None else f'{ttg.mean:.2f}'}")
    outcomes = {}
    for r in records:
        outcomes[f"{r.scenario_id}/{r.planner_id}/{r.outcome}"] = outcomes.get(
            f"{r.scenario_id}/{r.planner_id}/{r.outcome}", 0) + 1
    print(json.dumps(outcomes, sort_keys=True))
    print(f"wall time {wall:.1f} s for {len(records)} episodes")


if __name__ == "__main__":
    main()
