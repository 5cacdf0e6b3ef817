#!/usr/bin/env python3
"""Build the bundled demo repository, pair its functions, and show the result.

    python scripts/demo_end_to_end.py [--decompiler elf-symtab|fixture] [--strip] [--keep DIR]
"""

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

from codelink.cli import cmd_stats, main as cli_main
from codelink.export import import_csv

DEMO = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "demo-c-repo"


def run(workdir: Path, decompiler: str, strip: bool) -> int:
    repo = workdir / "demo-c-repo"
    shutil.copytree(DEMO, repo, ignore=shutil.ignore_patterns("main_app", "tool"))
    out = workdir / "out"
    argv = ["create", str(repo), str(out), "--build", "make", "--bin", "main_app", "--bin", "tool",
            "--decompiler", decompiler, "--format", "both"]
    if strip:
        argv += ["--strip", "--include-unmapped"]
    rc = cli_main(argv)
    if rc != 0:
        return rc
    print()
    cmd_stats(out / "dataset.csv")
    records = import_csv(out / "dataset.csv")
    if records:
        first = records[0]
        print("\nfirst record:")
        print(f"  {first.decompiled.decompiled_uid}")
        for uid, text in first.source_definitions.items():
            print(f"  {uid}\n" + "\n".join("    " + line for line in text.splitlines()))
    report = json.loads((out / "run_report.json").read_text())
    print("\nstage wall seconds:")
    for stage, stat in report["metrics"].items():
        if isinstance(stat, dict) and stat["item_count"]:
            print(f"  {stage:14s} {stat['wall_seconds']:.4f}")
    print(f"\noutputs in {out}")
    return 0


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--decompiler", default="elf-symtab",
                    help="elf-symtab, fixture, or external:CMD (default elf-symtab)")
    ap.add_argument("--strip", action="store_true",
                    help="strip the binaries and use the prologue scanner as decompiler")
    ap.add_argument("--keep", metavar="DIR", help="write into DIR instead of a temp dir")
    args = ap.parse_args()
    decompiler = args.decompiler
    if args.strip and decompiler == "elf-symtab":
        decompiler = f"external:{sys.executable} -m codelink.prologue {{binary}}"
    if args.keep:
        workdir = Path(args.keep)
        workdir.mkdir(parents=True, exist_ok=True)
        return run(workdir, decompiler, args.strip)
    with tempfile.TemporaryDirectory() as tmp:
        return run(Path(tmp), decompiler, args.strip)


if __name__ == "__main__":
    sys.exit(main())
