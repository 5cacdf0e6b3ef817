"""End-to-end orchestration: acquire, build, extract and decompile in parallel, map, export."""

from __future__ import annotations

import json
import logging
import shlex
import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, _proc
from .config import PipelineConfig
from .decompile import SIDECAR_SUFFIX, DecompileResult, bin_relpath, decompile_binary, merge_decompiled
from .errors import NoExtractorsRegistered, StripFailed
from .export import DatasetManifest, export_csv, export_jsonl, write_manifest
from .extract import ExtractionResult, ExtractorRegistry, discover_source_files, extract_file, merge_extraction
from .mapping import MappingStats, map_functions
from .repo import BuildReport, acquire, execute_build, resolve_binaries
from .scheduler import STAGES, ExecutionTrace, StageMetrics, TaskGraph, TraceEntry, collect_metrics, schedule

log = logging.getLogger(__name__)

DATASET_NAMES = {"csv": ("dataset.csv",), "jsonl": ("dataset.jsonl",),
                 "both": ("dataset.csv", "dataset.jsonl")}
TRACE_NAME = "trace.jsonl"
REPORT_NAME = "run_report.json"


@dataclass
class RunReport:
    workspace: Path
    repo_root: Path
    datasets: list[Path]
    manifest: Path | None
    record_count: int
    mapping: MappingStats
    metrics: StageMetrics
    trace: ExecutionTrace
    build: BuildReport | None = None
    binaries: list[str] = field(default_factory=list)
    extraction_errors: dict[str, str] = field(default_factory=dict)
    decompile_errors: dict[str, str] = field(default_factory=dict)
    scanner_notes: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "workspace": str(self.workspace),
            "repo_root": str(self.repo_root),
            "datasets": [p.name for p in self.datasets],
            "record_count": self.record_count,
            "binaries": self.binaries,
            "mapping": asdict(self.mapping),
            "extraction_errors": self.extraction_errors,
            "decompile_errors": self.decompile_errors,
            "scanner_notes": self.scanner_notes,
            "metrics": self.metrics.to_dict(),
        }


def _timed(trace: ExecutionTrace, task_id: str, stage: str, fn, count=lambda r: (1, 0)):
    """Run a sequential step, recording it in the trace like a scheduled task."""
    start = time.monotonic_ns()
    try:
        result = fn()
    except Exception as exc:
        trace.entries.append(TraceEntry(task_id, stage, start, time.monotonic_ns(), "error", 0, 1,
                                        f"{type(exc).__name__}: {exc}"))
        _annotate(exc, stage)
        raise
    items, errors = count(result)
    trace.entries.append(TraceEntry(task_id, stage, start, time.monotonic_ns(), "ok", items, errors))
    return result


def _annotate(exc: BaseException, stage: str) -> None:
    if getattr(exc, "stage", None) is None:
        try:
            exc.stage = stage
        except AttributeError:
            pass


def strip_copies(binaries: list[Path], repo_root: Path, workspace: Path,
                 strip_command: str = "strip") -> list[Path]:
    """Copy each binary to ``workspace/stripped/<rel>`` and strip the copy in place."""
    out = []
    argv = shlex.split(strip_command)
    for binary in binaries:
        rel = bin_relpath(binary, repo_root)
        dest = workspace / "stripped" / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(binary, dest)
        sidecar = Path(str(binary) + SIDECAR_SUFFIX)
        if sidecar.exists():
            shutil.copy2(sidecar, str(dest) + SIDECAR_SUFFIX)
        try:
            res = _proc.run([*argv, str(dest)], timeout=600)
        except FileNotFoundError:
            raise StripFailed(f"strip command not found: {argv[0]}") from None
        if res.timed_out or res.returncode != 0:
            raise StripFailed(f"{strip_command} failed on {rel}: "
                              f"{res.stderr.decode('utf-8', 'replace').strip()}")
        out.append(dest)
    return out


def _build_graph(config: PipelineConfig, repo_root: Path, registry: ExtractorRegistry,
                 binaries: list[tuple[Path, str]]) -> TaskGraph:
    workspace = config.workspace
    files = discover_source_files(repo_root, registry, exclude=[workspace])
    graph = TaskGraph()

    extract_ids = []
    for path, handle in files:
        tid = f"extract:{path.relative_to(repo_root).as_posix()}"
        graph.add(tid, "extraction", lambda _in, p=path, h=handle: extract_file(repo_root, p, h),
                  count=lambda r: (len(r.functions), 1 if r.error else 0))
        extract_ids.append(tid)

    decompile_ids = []
    for path, rel in binaries:
        tid = f"decompile:{rel}"
        graph.add(tid, "decompilation",
                  lambda _in, p=path, r=rel: decompile_binary(config.decompiler, p, r,
                                                              workspace / "logs"),
                  count=lambda r: (len(r.functions), 1 if r.error else 0))
        decompile_ids.append(tid)

    graph.add("extract:merge", "extraction", lambda inputs: merge_extraction(inputs.values()),
              deps=extract_ids, count=lambda r: (0, 0))
    graph.add("decompile:merge", "decompilation", lambda inputs: merge_decompiled(inputs.values()),
              deps=decompile_ids, count=lambda r: (0, 0))

    def do_map(inputs):
        ext: ExtractionResult = inputs["extract:merge"]
        dec: DecompileResult = inputs["decompile:merge"]
        return map_functions(ext.functions, dec.functions, config.rules, config.policy)

    graph.add("map", "mapping", do_map, deps=("extract:merge", "decompile:merge"),
              count=lambda r: (len(r[0]), 0))

    def do_export(inputs):
        records, _ = inputs["map"]
        written = []
        for name in DATASET_NAMES[config.export_format]:
            path = workspace / name
            (export_csv if name.endswith(".csv") else export_jsonl)(records, path)
            written.append(path)
        return written

    graph.add("export", "export", do_export, deps=("map",), count=lambda r: (len(r), 0))
    return graph


def _first_failure(trace: ExecutionTrace, graph: TaskGraph):
    rank = {s: i for i, s in enumerate(STAGES)}
    failed = [(rank.get(graph.tasks[tid].stage, len(STAGES)), tid) for tid in trace.exceptions]
    if not failed:
        return None
    _, tid = min(failed)
    exc = trace.exceptions[tid]
    _annotate(exc, graph.tasks[tid].stage)
    return exc


def _write_failure(workspace: Path, trace: ExecutionTrace, exc: BaseException) -> None:
    trace.dump_jsonl(workspace / TRACE_NAME)
    report = {"error": f"{type(exc).__name__}: {exc}", "stage": getattr(exc, "stage", None),
              "metrics": collect_metrics(trace).to_dict()}
    (workspace / REPORT_NAME).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Run every stage; fatal errors propagate with ``stage`` set after the trace is written."""
    workspace = config.workspace
    workspace.mkdir(parents=True, exist_ok=True)
    trace = ExecutionTrace()
    try:
        return _run(config, workspace, trace)
    except Exception as exc:
        _write_failure(workspace, trace, exc)
        raise


def _run(config: PipelineConfig, workspace: Path, trace: ExecutionTrace) -> RunReport:
    if not config.extractors:
        exc = NoExtractorsRegistered("no extractors registered")
        exc.stage = "extraction"
        raise exc
    try:
        registry = ExtractorRegistry(config.extractors).freeze()
    except Exception as exc:
        _annotate(exc, "extraction")
        raise

    repo_root = _timed(trace, "acquire", "acquisition", lambda: acquire(config.repo, workspace))
    report = _timed(trace, "build", "build", lambda: execute_build(repo_root, config.build, workspace))
    binaries = _timed(trace, "resolve", "build", lambda: resolve_binaries(repo_root, config.binaries),
                      count=lambda r: (len(r), 0))
    rels = [bin_relpath(b, repo_root) for b in binaries]
    targets = binaries
    if config.strip_binaries:
        targets = _timed(trace, "strip", "build",
                         lambda: strip_copies(binaries, repo_root, workspace, config.strip_command),
                         count=lambda r: (len(r), 0))

    graph = _build_graph(config, repo_root, registry, list(zip(targets, rels)))
    scheduled = schedule(graph, config.workers)
    trace.extend(scheduled)
    failure = _first_failure(scheduled, graph)
    if failure is not None:
        raise failure

    extraction: ExtractionResult = scheduled.results["extract:merge"]
    decompiled: DecompileResult = scheduled.results["decompile:merge"]
    records, stats = scheduled.results["map"]
    datasets: list[Path] = scheduled.results["export"]
    for path, err in extraction.errors.items():
        log.warning("extraction: %s: %s", path, err)
    for rel, err in decompiled.errors.items():
        log.warning("decompilation: %s: %s", rel, err)

    metrics = collect_metrics(trace)
    manifest = write_manifest(DatasetManifest(
        tool_version=__version__,
        repo=config.repo.location,
        build_command=config.build.command,
        binaries=rels,
        record_count=len(records),
        stage_metrics=metrics.to_dict(),
        config=config.to_dict(),
        datasets=[p.name for p in datasets],
    ), workspace)
    trace.dump_jsonl(workspace / TRACE_NAME)
    result = RunReport(workspace, repo_root, datasets, manifest, len(records), stats, metrics, trace,
                       report, rels, extraction.errors, decompiled.errors, extraction.notes)
    (workspace / REPORT_NAME).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    return result
