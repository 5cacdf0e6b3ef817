#!/usr/bin/env python3
"""Decompilation wall time versus worker count with a simulated slow decompiler.

Each fake binary costs DELAY seconds of `sleep` inside an external decompiler
command, so the measured stage time isolates scheduling from real analysis.

    python scripts/speedup_experiment.py [--binaries 16] [--delay 0.1] [--workers 1 2 4 8 16]
"""

import argparse
import json
import math
import sys
import tempfile
from pathlib import Path

from codelink.cli import parse_cli
from codelink.pipeline import run_pipeline


def make_repo(root: Path, n: int) -> list[str]:
    root.mkdir(parents=True)
    names, src = [], []
    for i in range(n):
        name = f"bin{i:02d}"
        (root / name).write_bytes(b"\x7fELF-placeholder")
        fn = f"fn_{i}"
        (root / f"{name}.dec.jsonl").write_text(json.dumps(
            {"name": fn, "address": 0x1000, "architecture": "x86_64", "assembly": "C3",
             "definition": f"void {fn}(void) {{}}"}) + "\n")
        src.append(f"void {fn}(void) {{}}\n")
        names.append(name)
    (root / "all.c").write_text("".join(src))
    return names


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--binaries", type=int, default=16)
    ap.add_argument("--delay", type=float, default=0.1)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    ap.add_argument("--json", action="store_true", help="print machine-readable rows")
    args = ap.parse_args()

    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        repo = Path(tmp) / "repo"
        names = make_repo(repo, args.binaries)
        bins = [t for n in names for t in ("--bin", n)]
        for w in args.workers:
            config = parse_cli(["create", str(repo), str(Path(tmp) / f"out{w}"), "--build", "true",
                                "--decompiler", f"external:sleep {args.delay}; cat {{binary}}.dec.jsonl",
                                "--workers", str(w), *bins], environ={})
            report = run_pipeline(config)
            wall = report.metrics["decompilation"].wall_seconds
            bound = math.ceil(args.binaries / w) * args.delay
            rows.append({"workers": w, "wall_seconds": round(wall, 4),
                         "ideal_seconds": round(bound, 4), "records": report.record_count})

    base = rows[0]["wall_seconds"]
    if args.json:
        for r in rows:
            print(json.dumps({**r, "speedup": round(base / r["wall_seconds"], 3)}))
        return 0
    print(f"{args.binaries} binaries, {args.delay * 1000:.0f} ms each")
    print(f"{'workers':>8} {'wall s':>8} {'ideal s':>8} {'speedup':>8}")
    for r in rows:
        print(f"{r['workers']:>8} {r['wall_seconds']:>8.3f} {r['ideal_seconds']:>8.3f} "
              f"{base / r['wall_seconds']:>8.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
