"""Command-line entry point: ``navbench <subcommand> ...``.

Exit codes:

====  =====================================================
0     success
1     any other failure
2     bad command-line usage (argparse)
3     input file not found
4     schema_version mismatch in a map, scenario, config or record
5     malformed config or input content
====  =====================================================

Failures print exactly one JSON line to stderr:
``{"error": <kind>, "exit_code": <n>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .episode import EpisodeOptions, load_records, run_batch
from .metrics import episodes_csv, evaluate_records, group_reports, metrics_json, summary_csv
from .plotting import PlotSpec, plot_qualitative, plot_quantitative
from .taskgen import (SCHEMA_VERSION, SchemaVersionError, TaskMode, TaskSpec, generate_random_map,
                      load_map, load_scenario, sample_task, save_map, save_scenario)

log = logging.getLogger("navbench")

EXIT_OK, EXIT_ERROR, EXIT_MISSING, EXIT_SCHEMA, EXIT_MALFORMED = 0, 1, 3, 4, 5
OUTPUT_ENV = "NAVBENCH_OUTPUT_DIR"
DEFAULT_OUTPUT = "navbench_out"


class ConfigError(ValueError):
    pass


@dataclass
class BenchmarkConfig:
    scenarios: list[str]
    planners: list[dict]
    episodes: int = 30
    parallelism: int = 1
    output_dir: str | None = None
    seed_base: int = 0
    base_dir: str = "."
    schema_version: int = SCHEMA_VERSION
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise SchemaVersionError(f"config schema_version {self.schema_version}, "
                                     f"expected {SCHEMA_VERSION}")
        if not self.scenarios:
            raise ConfigError("config needs at least one scenario")
        if not self.planners:
            raise ConfigError("config needs at least one planner")
        ids = [p.get("id") for p in self.planners]
        if any(not isinstance(i, str) or not i for i in ids) or len(set(ids)) != len(ids):
            raise ConfigError(f"planner ids must be unique non-empty strings, got {ids}")
        for p in self.planners:
            if p.get("kind", "builtin") not in ("builtin", "plugin"):
                raise ConfigError(f"planner {p['id']}: kind must be builtin or plugin")
            if p.get("kind") == "plugin" and not p.get("command"):
                raise ConfigError(f"planner {p['id']}: plugin needs a command")
        if not isinstance(self.episodes, int) or self.episodes < 1:
            raise ConfigError("episodes must be a positive integer")
        if not isinstance(self.parallelism, int) or self.parallelism < 1:
            raise ConfigError("parallelism must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> BenchmarkConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {"schema_version", "scenarios", "planners", "episodes", "parallelism",
                 "output_dir", "seed_base", "options"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "schema_version" not in d:
            raise SchemaVersionError("config has no schema_version")
        try:
            cfg = cls(scenarios=list(d.get("scenarios", [])), planners=list(d.get("planners", [])),
                      episodes=d.get("episodes", 30), parallelism=d.get("parallelism", 1),
                      output_dir=d.get("output_dir"), seed_base=d.get("seed_base", 0),
                      base_dir=base_dir, schema_version=d["schema_version"],
                      options=dict(d.get("options", {})))
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        return cfg

    def scenario_paths(self) -> list[Path]:
        return [Path(self.base_dir, s) for s in self.scenarios]


def _read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON ({e})") from e


def _output_dir(arg: str | None, config_value: str | None = None) -> Path:
    return Path(arg or config_value or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


# ---------------------------------------------------------------- subcommands

def cmd_generate_map(args) -> None:
    world = generate_random_map(args.seed, args.width, args.height, args.resolution, args.obstacles)
    save_map(world, args.out)
    print(json.dumps({"map": str(args.out), "digest": world.digest()}))


def cmd_generate_scenario(args) -> None:
    task = TaskSpec(TaskMode(args.mode), args.pedestrians, args.obstacles)
    if args.map:
        world = load_map(args.map)
    else:
        world = generate_random_map(args.seed, args.width, args.height, args.resolution, args.obstacles)
    scenario = sample_task(world, task, args.seed, scenario_id=args.id, timeout=args.timeout,
                           episodes=args.episodes)
    save_scenario(scenario, args.out)
    print(json.dumps({"scenario": str(args.out), "id": scenario.id}))


def load_config(args) -> BenchmarkConfig:
    if args.config:
        cfg = BenchmarkConfig.from_dict(_read_json(args.config), str(Path(args.config).parent))
    else:
        cfg = BenchmarkConfig(scenarios=[], planners=[])
    # flags override the file
    if args.scenario:
        cfg.scenarios = [str(Path(s).resolve()) for s in args.scenario]
    if args.planner:
        specs = []
        for tok in args.planner:
            pid, _, name = tok.partition("=")
            specs.append({"id": pid, "kind": "builtin", "name": name or pid})
        cfg.planners = specs
    for name in ("episodes", "parallelism", "seed_base"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def cmd_run(args) -> None:
    cfg = load_config(args)
    scenarios = [load_scenario(p) for p in cfg.scenario_paths()]
    opts = EpisodeOptions(**cfg.options) if cfg.options else None
    out = _output_dir(args.output_dir, cfg.output_dir)
    records = run_batch(scenarios, cfg.planners, cfg.episodes, parallelism=cfg.parallelism,
                        seed_base=cfg.seed_base, output_dir=out, options=opts)
    outcomes: dict[str, int] = {}
    for r in records:
        outcomes[r.outcome] = outcomes.get(r.outcome, 0) + 1
    print(json.dumps({"records": len(records), "output_dir": str(out), "outcomes": outcomes},
                     sort_keys=True))


def cmd_evaluate(args) -> None:
    src = Path(args.records)
    if not src.is_dir():
        raise FileNotFoundError(f"no such record directory: {src}")
    records = load_records(src)
    if not records:
        raise ConfigError(f"{src} contains no record files")
    reports = evaluate_records(records)
    aggs = group_reports(reports)
    out = _output_dir(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "episodes.csv").write_text(episodes_csv(reports))
    (out / "summary.csv").write_text(summary_csv(aggs))
    mdir = out / "metrics"
    mdir.mkdir(exist_ok=True)
    for r in reports:
        name = f"{r.scenario_id}__{r.planner_id}__{r.episode_index}__r{r.robot}.json"
        (mdir / name).write_text(metrics_json(r) + "\n")
    print(json.dumps({"episodes": len(reports), "groups": len(aggs), "output_dir": str(out)}))


def cmd_plot(args) -> None:
    src = Path(args.records)
    if not src.is_dir():
        raise FileNotFoundError(f"no such record directory: {src}")
    records = load_records(src)
    if not records:
        raise ConfigError(f"{src} contains no record files")
    if args.scenario_id:
        records = [r for r in records if r.scenario_id == args.scenario_id]
    out = _output_dir(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.kind == "quantitative":
        spec = PlotSpec(kind="quantitative", metrics=args.metric or None, planners=args.planners or None)
        for metric, svg in plot_quantitative(group_reports(evaluate_records(records)), spec).items():
            path = out / f"{metric}.svg"
            path.write_text(svg)
            written.append(str(path))
    else:
        if not args.map:
            raise ConfigError("qualitative plots need --map")
        world = load_map(args.map)
        spec = PlotSpec(kind="qualitative", planners=args.planners or None,
                        px_per_m=args.px_per_m)
        path = out / (args.name or "trajectories.svg")
        path.write_text(plot_qualitative(records, world, spec))
        written.append(str(path))
    print(json.dumps({"written": written}))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="navbench", description="Crowd-navigation benchmark harness.")
    p.add_argument("--version", action="version", version=f"navbench {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def map_args(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--width", type=float, default=20.0)
        sp.add_argument("--height", type=float, default=20.0)
        sp.add_argument("--resolution", type=float, default=0.1)
        sp.add_argument("--obstacles", type=int, default=0)

    g = sub.add_parser("generate-map", help="random bordered map with static obstacles")
    map_args(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_map)

    g = sub.add_parser("generate-scenario", help="sample a feasible task into a scenario file")
    map_args(g)
    g.add_argument("--map", help="use this map instead of generating one")
    g.add_argument("--mode", default="random", choices=[m.value for m in TaskMode])
    g.add_argument("--pedestrians", type=int, default=0)
    g.add_argument("--id")
    g.add_argument("--timeout", type=float, default=180.0)
    g.add_argument("--episodes", type=int, default=30)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_scenario)

    g = sub.add_parser("run", help="run every (scenario, planner, episode) cell")
    g.add_argument("--config")
    g.add_argument("--scenario", action="append", help="scenario file (repeatable)")
    g.add_argument("--planner", action="append", help="ID or ID=BUILTIN (repeatable)")
    g.add_argument("--episodes", type=int)
    g.add_argument("--parallelism", type=int)
    g.add_argument("--seed-base", dest="seed_base", type=int)
    g.add_argument("--output-dir")
    g.set_defaults(func=cmd_run)

    g = sub.add_parser("evaluate", help="metrics CSV/JSON from a record directory")
    g.add_argument("records")
    g.add_argument("--output-dir")
    g.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("plot", help="SVG figures from a record directory")
    g.add_argument("kind", choices=["quantitative", "qualitative"])
    g.add_argument("records")
    g.add_argument("--map")
    g.add_argument("--metric", action="append")
    g.add_argument("--planners", nargs="*")
    g.add_argument("--scenario-id")
    g.add_argument("--px-per-m", type=float)
    g.add_argument("--name")
    g.add_argument("--output-dir")
    g.set_defaults(func=cmd_plot)
    return p


def _fail(kind: str, code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FileNotFoundError as e:
        return _fail("missing_file", EXIT_MISSING, e)
    except SchemaVersionError as e:
        return _fail("schema_version", EXIT_SCHEMA, e)
    except (ConfigError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        return _fail("malformed", EXIT_MALFORMED, e)
    except Exception as e:  # noqa: BLE001 - top-level boundary
        return _fail("error", EXIT_ERROR, e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
