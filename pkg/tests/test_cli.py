import json
import subprocess
import sys

import pytest

from navbench.cli import (EXIT_MALFORMED, EXIT_MISSING, EXIT_OK, EXIT_SCHEMA, OUTPUT_ENV,
                          BenchmarkConfig, ConfigError, main)
from navbench.taskgen import SchemaVersionError


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("scn")
    assert main(["generate-map", "--seed", "3", "--width", "8", "--height", "8", "--obstacles", "2",
                 "--out", str(d / "map.json")]) == 0
    assert main(["generate-scenario", "--map", str(d / "map.json"), "--seed", "3", "--pedestrians", "2",
                 "--timeout", "20", "--id", "small", "--out", str(d / "small.json")]) == 0
    return d / "small.json"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, scenario_file):
    out = tmp_path_factory.mktemp("run")
    cfg = {"schema_version": 1, "scenarios": [scenario_file.name], "episodes": 30,
           "planners": [{"id": "naive"}, {"id": "dwa", "kind": "builtin", "name": "dwa"}]}
    (scenario_file.parent / "bench.json").write_text(json.dumps(cfg))
    assert main(["run", "--config", str(scenario_file.parent / "bench.json"), "--output-dir", str(out)]) == 0
    return out


def test_run_writes_one_file_per_episode(run_dir):
    files = sorted(run_dir.glob("*.jsonl"))
    assert len(files) == 60
    assert files[0].name == "small__dwa__0.jsonl"


def test_rerun_is_byte_identical(run_dir, scenario_file, tmp_path, capsys):
    code, out, _ = run(capsys, "run", "--scenario", scenario_file, "--planner", "naive",
                       "--planner", "dwa=dwa", "--episodes", 30, "--output-dir", tmp_path)
    assert code == EXIT_OK and json.loads(out)["records"] == 60
    for p in run_dir.glob("*.jsonl"):
        assert p.read_bytes() == (tmp_path / p.name).read_bytes()


def test_evaluate_summary_and_idempotence(run_dir, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "evaluate", run_dir, "--output-dir", a)[0] == EXIT_OK
    assert run(capsys, "evaluate", run_dir, "--output-dir", b)[0] == EXIT_OK
    summary = (a / "summary.csv").read_text().splitlines()
    assert len(summary) == 3 and summary[1].startswith("small,dwa,30,")
    assert len((a / "episodes.csv").read_text().splitlines()) == 61
    assert len(list((a / "metrics").glob("*.json"))) == 60
    for name in ("summary.csv", "episodes.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_plot_subcommands(run_dir, scenario_file, tmp_path, capsys):
    code, out, _ = run(capsys, "plot", "quantitative", run_dir, "--metric", "path_length",
                       "--metric", "jerk_avg", "--output-dir", tmp_path)
    assert code == EXIT_OK and sorted(p.name for p in tmp_path.glob("*.svg")) == ["jerk_avg.svg", "path_length.svg"]
    code, out, _ = run(capsys, "plot", "qualitative", run_dir, "--map", scenario_file.parent / "map.json",
                       "--planners", "dwa", "--output-dir", tmp_path, "--name", "traj.svg")
    assert code == EXIT_OK and (tmp_path / "traj.svg").read_text().count('class="trajectory"') == 30
    code, _, err = run(capsys, "plot", "qualitative", run_dir, "--output-dir", tmp_path)
    assert code == EXIT_MALFORMED and json.loads(err)["error"] == "malformed"


def test_output_dir_from_environment(scenario_file, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    code, out, _ = run(capsys, "run", "--scenario", scenario_file, "--planner", "naive", "--episodes", 2)
    assert code == EXIT_OK and len(list((tmp_path / "env").glob("*.jsonl"))) == 2


def test_exit_codes(scenario_file, tmp_path, capsys):
    code, _, err = run(capsys, "run", "--config", tmp_path / "nope.json")
    assert code == EXIT_MISSING and json.loads(err) == {"error": "missing_file", "exit_code": 3,
                                                        "message": json.loads(err)["message"]}
    bad_version = tmp_path / "v.json"
    bad_version.write_text(json.dumps({"schema_version": 9, "scenarios": ["x"], "planners": [{"id": "a"}]}))
    assert run(capsys, "run", "--config", bad_version)[0] == EXIT_SCHEMA
    scen = json.loads(scenario_file.read_text())
    scen["schema_version"] = 2
    (tmp_path / "s.json").write_text(json.dumps(scen))
    assert run(capsys, "run", "--scenario", tmp_path / "s.json", "--planner", "naive",
               "--output-dir", tmp_path)[0] == EXIT_SCHEMA
    (tmp_path / "broken.json").write_text("{nope")
    assert run(capsys, "run", "--config", tmp_path / "broken.json")[0] == EXIT_MALFORMED
    (tmp_path / "keys.json").write_text(json.dumps({"schema_version": 1, "scenarios": ["x"],
                                                    "planners": [{"id": "a"}], "typo": 1}))
    assert run(capsys, "run", "--config", tmp_path / "keys.json")[0] == EXIT_MALFORMED
    assert run(capsys, "run", "--planner", "naive")[0] == EXIT_MALFORMED  # no scenario
    assert run(capsys, "evaluate", tmp_path / "missing")[0] == EXIT_MISSING
    (tmp_path / "empty").mkdir()
    assert run(capsys, "evaluate", tmp_path / "empty")[0] == EXIT_MALFORMED
    with pytest.raises(SystemExit) as e:
        main(["run", "--episodes", "many"])
    assert e.value.code == 2
    capsys.readouterr()


def test_config_validation():
    base = {"schema_version": 1, "scenarios": ["a.json"], "planners": [{"id": "x"}]}
    BenchmarkConfig.from_dict(base).validate()
    with pytest.raises(SchemaVersionError):
        BenchmarkConfig.from_dict({k: v for k, v in base.items() if k != "schema_version"})
    for bad in ({"planners": [{"id": "x"}, {"id": "x"}]}, {"planners": []}, {"scenarios": []},
                {"episodes": 0}, {"parallelism": 0}, {"planners": [{"id": "p", "kind": "plugin"}]},
                {"planners": [{"id": "p", "kind": "docker"}]}):
        with pytest.raises(ConfigError):
            BenchmarkConfig.from_dict({**base, **bad}).validate()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "navbench", "generate-map", "--seed", "1", "--width", "5",
                           "--height", "5", "--out", str(tmp_path / "m.json")],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and "digest" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "navbench", "evaluate", str(tmp_path / "none")],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 3 and json.loads(proc.stderr.strip().splitlines()[-1])["exit_code"] == 3
