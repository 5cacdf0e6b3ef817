"""Command-line front end: ``codelink create`` and ``codelink stats``.

Exit codes: 0 success, 1 fatal pipeline (or dataset) error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from collections import Counter

from .config import (PipelineConfig, build_config, env_layer, load_config_file, merge_layers,
                     parse_decompiler_string)
from .errors import CodelinkError, ConfigFileError, UsageError
from .export import read_dataset
from .extract import DEFAULT_C

EXIT_OK, EXIT_FATAL, EXIT_USAGE = 0, 1, 2

# file globs assumed when ``--extractor LANG=CMD`` omits them
DEFAULT_GLOBS = {
    "c": ("*.c", "*.h"),
    "c++": ("*.cpp", "*.cc", "*.cxx", "*.hpp", "*.hh"),
    "cpp": ("*.cpp", "*.cc", "*.cxx", "*.hpp", "*.hh"),
    "rust": ("*.rs",),
    "go": ("*.go",),
    "java": ("*.java",),
}


def _flag_from_message(message: str) -> str:
    m = re.match(r"argument ([^:]+):", message)
    if m:
        name = m.group(1).split("/")[-1]
    else:
        m = re.search(r"(?:required|unrecognized arguments): (\S+)", message)
        name = m.group(1).rstrip(",") if m else "command"
    return name.lstrip("-") or "command"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(_flag_from_message(message), message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="codelink", allow_abbrev=False,
                     description="Build paired decompiled/source function datasets.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    create = sub.add_parser("create", allow_abbrev=False, help="run the full pipeline")
    create.add_argument("repo", metavar="REPO")
    create.add_argument("output_dir", metavar="OUTPUT_DIR")
    create.add_argument("--build", metavar="CMD")
    create.add_argument("--bin", metavar="PATH", action="append")
    create.add_argument("--decompiler", metavar="KIND")
    create.add_argument("--extractor", metavar="LANG[:GLOBS]=CMD", action="append")
    create.add_argument("--format", choices=("csv", "jsonl", "both"))
    create.add_argument("--workers", type=int, metavar="N")
    create.add_argument("--lenient", action="store_const", const=True)
    create.add_argument("--include-unmapped", action="store_const", const=True)
    create.add_argument("--require-unique", action="store_const", const=True)
    create.add_argument("--strip", action="store_const", const=True)
    create.add_argument("--strip-command", metavar="CMD")
    create.add_argument("--ref", metavar="REF", help="branch, tag or commit to check out")
    create.add_argument("--config", metavar="FILE")

    stats = sub.add_parser("stats", allow_abbrev=False, help="summarize a dataset")
    stats.add_argument("dataset", metavar="DATASET")
    return parser


def parse_extractor(value: str) -> dict:
    """``LANG[:GLOBS]=CMD``; GLOBS is comma separated, CMD may be ``builtin:c-scanner``."""
    head, sep, command = value.partition("=")
    if not sep or not head or not command.strip():
        raise UsageError("extractor", f"expected LANG[:GLOBS]=CMD, got {value!r}")
    lang, _, globs = head.partition(":")
    if not lang:
        raise UsageError("extractor", "missing language")
    patterns = tuple(g for g in globs.split(",") if g) if globs else DEFAULT_GLOBS.get(lang.lower())
    if not patterns:
        raise UsageError("extractor", f"no default file globs for {lang!r}; use {lang}:GLOBS=CMD")
    return {"language": lang, "file_patterns": list(patterns), "kind": command.strip()}


def _flag_layer(ns) -> dict:
    layer: dict = {"repo": {"location": ns.repo}, "workspace": ns.output_dir}
    if ns.ref is not None:
        layer["repo"]["checkout_ref"] = ns.ref
    if ns.build is not None:
        layer["build"] = {"command": ns.build}
    if ns.bin is not None:
        layer["binaries"] = {"paths": list(ns.bin)}
    if ns.decompiler is not None:
        layer["decompiler"] = parse_decompiler_string(ns.decompiler)
    if ns.format is not None:
        layer["export_format"] = ns.format
    if ns.workers is not None:
        layer["workers"] = ns.workers
    policy = {}
    if ns.lenient:
        policy["mode"] = "lenient"
    if ns.include_unmapped:
        policy["include_unmapped"] = True
    if ns.require_unique:
        policy["require_unique"] = True
    if policy:
        layer["policy"] = policy
    if ns.strip:
        layer["strip_binaries"] = True
    if ns.strip_command is not None:
        layer["strip_command"] = ns.strip_command
    return layer


def _default_extractor() -> dict:
    return {"language": DEFAULT_C.language, "file_patterns": list(DEFAULT_C.file_patterns),
            "kind": DEFAULT_C.kind}


def config_from_namespace(ns, environ=None) -> PipelineConfig:
    file_layer = load_config_file(ns.config) if ns.config is not None else {}
    merged = merge_layers(env_layer(environ), file_layer, _flag_layer(ns))
    if ns.extractor:
        # command-line extractors are registered after the configured ones, so they win
        base = file_layer.get("extractors", [_default_extractor()])
        merged["extractors"] = list(base) + [parse_extractor(v) for v in ns.extractor]
    return build_config(merged)


def parse_cli(argv, environ=None) -> PipelineConfig:
    """Parse a ``create`` command line into a validated PipelineConfig.

    Raises UsageError naming the offending flag, or ConfigFileError for a bad ``--config``.
    """
    ns = build_parser().parse_args(list(argv))
    if ns.command != "create":
        raise UsageError("command", "expected the create subcommand")
    return config_from_namespace(ns, environ)


def cmd_stats(dataset_path, out=None) -> dict:
    """Print a dataset summary and return the counts; raises SchemaError or OSError."""
    out = sys.stdout if out is None else out
    records = read_dataset(dataset_path)
    mapped = sum(1 for r in records if r.is_mapped)
    ambiguous = sum(1 for r in records if len(r.source_files) > 1)
    by_language = Counter(r.language or "(unmapped)" for r in records)
    by_binary = Counter(r.decompiled.bin for r in records)
    summary = {"records": len(records), "mapped": mapped, "unmapped": len(records) - mapped,
               "ambiguous": ambiguous, "languages": dict(sorted(by_language.items())),
               "binaries": dict(sorted(by_binary.items()))}
    print(f"records: {summary['records']}, mapped: {mapped}, unmapped: {summary['unmapped']}, "
          f"ambiguous: {ambiguous}", file=out)
    for lang, n in summary["languages"].items():
        print(f"language {lang}: {n}", file=out)
    for name, n in summary["binaries"].items():
        print(f"binary {name}: {n}", file=out)
    return summary


def _cmd_create(ns) -> int:
    from .pipeline import run_pipeline
    config = config_from_namespace(ns)
    try:
        report = run_pipeline(config)
    except (CodelinkError, OSError) as exc:
        stage = getattr(exc, "stage", None) or "pipeline"
        print(f"codelink: {stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL
    s = report.mapping
    print(f"records: {report.record_count}, matched: {s.matched}, "
          f"unmatched: {s.unmatched_decompiled}, ambiguous: {s.ambiguous}")
    for path in report.datasets:
        print(f"wrote {path}")
    for name, err in sorted({**report.extraction_errors, **report.decompile_errors}.items()):
        print(f"warning: {name}: {err}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if ns.verbose > 1 else
                            logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if ns.command == "stats":
            try:
                cmd_stats(ns.dataset)
            except (CodelinkError, OSError) as exc:
                print(f"codelink: {type(exc).__name__}: {exc}", file=sys.stderr)
                return EXIT_FATAL
            return EXIT_OK
        return _cmd_create(ns)
    except (UsageError, ConfigFileError) as exc:
        print(f"codelink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
