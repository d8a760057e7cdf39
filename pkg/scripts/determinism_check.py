"""Run one scenario repeatedly through the CLI and compare the JSONL records byte for byte.

Generates an 8x8 m map and scenario, runs DWA and naive twice at parallelism 1
and once at --parallelism, then prints one SHA-256 comparison per record file.
Exit status 0 only when every file matches. Usage::

    python3 scripts/determinism_check.py [--episodes 30] [--parallelism 8] [--out DIR]
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import tempfile
import time
from pathlib import Path

from navbench.cli import main as cli_main


def digests(directory: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.glob("*.jsonl"))}


def check(out: Path, episodes: int, parallelism: int, seed: int = 3) -> bool:
    cli_main(["generate-map", "--seed", str(seed), "--width", "8", "--height", "8", "--obstacles", "2",
              "--out", str(out / "map.json")])
    cli_main(["generate-scenario", "--map", str(out / "map.json"), "--seed", str(seed),
              "--pedestrians", "2", "--timeout", "20", "--id", "det", "--out", str(out / "det.json")])
    runs = {}
    for name, par in (("run1", 1), ("run2", 1), (f"par{parallelism}", parallelism)):
        t0 = time.perf_counter()
        code = cli_main(["run", "--scenario", str(out / "det.json"), "--planner", "dwa", "--planner", "naive",
                         "--episodes", str(episodes), "--parallelism", str(par),
                         "--output-dir", str(out / name)])
        if code != 0:
            print(f"{name}: run failed with exit code {code}")
            return False
        runs[name] = digests(out / name)
        print(f"{name}: {len(runs[name])} records in {time.perf_counter() - t0:.1f} s")
    ref_name, ref = next(iter(runs.items()))
    ok = True
    for name, got in runs.items():
        if name == ref_name:
            continue
        bad = [f for f in ref if got.get(f) != ref[f]] + sorted(set(got) - set(ref))
        ok &= not bad
        print(f"{ref_name} vs {name}: {'identical' if not bad else f'{len(bad)} files differ: {bad[:5]}'}")
    return ok


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=30)
    ap.add_argument("--parallelism", type=int, default=8)
    ap.add_argument("--out", default=None, help="keep outputs here instead of a temporary directory")
    args = ap.parse_args()
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return 0 if check(out, args.episodes, args.parallelism) else 1
    with tempfile.TemporaryDirectory() as tmp:
        return 0 if check(Path(tmp), args.episodes, args.parallelism) else 1


if __name__ == "__main__":
    sys.exit(main())
