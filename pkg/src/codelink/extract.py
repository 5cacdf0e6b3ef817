"""Source-side function extraction: extractor registry, file discovery, C extractor."""

from __future__ import annotations

import logging
import os
import shlex
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path

from . import _proc, cscan
from .errors import (ExternalCommandNotFound, ExtractorFailed, NoExtractorsRegistered,
                     ProtocolError, UnknownBuiltin)
from .protocol import parse_json_lines

log = logging.getLogger(__name__)

BUILTINS = ("c-scanner",)
METADATA_DIRS = frozenset({".git", ".hg", ".svn"})
EXTERNAL_TIMEOUT = 600


@dataclass(frozen=True)
class SourceFunction:
    uid: str
    name: str
    qualified_class: str | None
    language: str
    file: str
    start_byte: int
    end_byte: int
    definition: str


@dataclass(frozen=True)
class ExtractorSpec:
    language: str
    file_patterns: tuple[str, ...]
    kind: str = "c-scanner"

    def __post_init__(self):
        if not self.file_patterns:
            raise ValueError("file_patterns must be non-empty")
        object.__setattr__(self, "file_patterns", tuple(self.file_patterns))
        if self.kind.startswith("builtin:") and self.kind[8:] in BUILTINS:
            object.__setattr__(self, "kind", self.kind[8:])

    @property
    def is_builtin(self) -> bool:
        return self.kind in BUILTINS


DEFAULT_C = ExtractorSpec("C", ("*.c", "*.h"), "c-scanner")


@dataclass(frozen=True)
class ExtractorHandle:
    index: int
    spec: ExtractorSpec

    def matches(self, rel_path: str) -> bool:
        base = rel_path.rsplit("/", 1)[-1]
        return any(fnmatchcase(rel_path if "/" in pat else base, pat)
                   for pat in self.spec.file_patterns)


class ExtractorRegistry:
    """Ordered extractor registrations; later registrations win on pattern overlap."""

    def __init__(self, specs=()):
        self._handles: list[ExtractorHandle] = []
        self.frozen = False
        for spec in specs:
            self.register(spec)

    def register(self, spec: ExtractorSpec) -> ExtractorHandle:
        if self.frozen:
            raise RuntimeError("registry is frozen")
        if spec.kind.startswith("builtin:"):
            raise UnknownBuiltin(spec.kind[8:])
        if not spec.is_builtin:
            argv = shlex.split(spec.kind)
            if not argv or shutil.which(argv[0]) is None:
                raise ExternalCommandNotFound(spec.kind)
        handle = ExtractorHandle(len(self._handles), spec)
        self._handles.append(handle)
        return handle

    def freeze(self) -> "ExtractorRegistry":
        self.frozen = True
        return self

    def lookup(self, rel_path: str) -> ExtractorHandle | None:
        for handle in reversed(self._handles):
            if handle.matches(rel_path):
                return handle
        return None

    def __len__(self) -> int:
        return len(self._handles)


def discover_source_files(repo_root, registry: ExtractorRegistry, exclude=()):
    """List ``(path, handle)`` for every file some extractor claims, sorted by relative path.

    Version-control metadata directories and anything under ``exclude`` are skipped.
    """
    repo_root = Path(repo_root).resolve()
    excluded = {Path(p).resolve() for p in exclude}
    found = []
    for dirpath, dirnames, filenames in os.walk(repo_root):
        here = Path(dirpath)
        dirnames[:] = [d for d in dirnames
                       if d not in METADATA_DIRS and (here / d).resolve() not in excluded]
        for name in filenames:
            path = here / name
            rel = path.relative_to(repo_root).as_posix()
            handle = registry.lookup(rel)
            if handle is not None:
                found.append((rel, path, handle))
    found.sort(key=lambda t: t[0])
    return [(path, handle) for _, path, handle in found]


def _codec(data: bytes) -> str:
    try:
        data.decode("utf-8")
        return "utf-8"
    except UnicodeDecodeError:
        return "latin-1"


def _decode(data: bytes, codec: str) -> str:
    try:
        return data.decode(codec)
    except UnicodeDecodeError:
        return data.decode("latin-1")


def make_uid(file: str, name: str, start_byte: int) -> str:
    return f"{file}::{name}::{start_byte}"


def _source_function(data, codec, file, name, start, end, language="C", cls=None):
    return SourceFunction(make_uid(file, name, start), name, cls, language, file, start, end,
                          _decode(data[start:end], codec))


def extract_c_functions(file_bytes: bytes, file: str, language: str = "C") -> list[SourceFunction]:
    """Return every top-level C function definition in ``file_bytes`` in file order.

    On unbalanced input raises ScanError whose ``partial`` attribute holds the
    functions found before the error point.
    """
    codec = _codec(file_bytes)
    result = cscan.scan(file_bytes)
    funcs = [_source_function(file_bytes, codec, file, s.name, s.start, s.end, language)
             for s in result.spans]
    if result.error is not None:
        err = result.error
        err.partial = funcs
        raise err
    return funcs


def run_external_extractor(command: str, abs_path, file: str, file_bytes: bytes,
                           language: str, timeout: float = EXTERNAL_TIMEOUT) -> list[SourceFunction]:
    res = _proc.run([*shlex.split(command), str(abs_path)], timeout=timeout)
    if res.timed_out:
        raise ExtractorFailed(f"{command} timed out after {timeout}s")
    if res.returncode != 0:
        raise ExtractorFailed(f"{command} exited {res.returncode}: "
                              + res.stderr.decode("utf-8", "replace").strip())
    records = parse_json_lines(res.stdout, {"name": str, "start_byte": int, "end_byte": int},
                               {"class_name": str})
    codec = _codec(file_bytes)
    out = []
    for lineno, rec in enumerate(records, start=1):
        start, end = rec["start_byte"], rec["end_byte"]
        if not 0 <= start < end <= len(file_bytes):
            raise ProtocolError(lineno, f"span [{start}, {end}) outside file", key="end_byte")
        out.append(_source_function(file_bytes, codec, file, rec["name"], start, end, language,
                                    rec.get("class_name")))
    return out


@dataclass
class FileResult:
    file: str
    functions: list[SourceFunction]
    error: str | None = None
    notes: list[str] = field(default_factory=list)


def extract_file(repo_root, path, handle: ExtractorHandle) -> FileResult:
    """Extract one file; never raises for per-file problems."""
    repo_root = Path(repo_root).resolve()
    path = Path(path)
    rel = path.relative_to(repo_root).as_posix() if path.is_absolute() else path.as_posix()
    spec = handle.spec
    try:
        data = (repo_root / rel).read_bytes()
    except OSError as exc:
        return FileResult(rel, [], f"unreadable: {exc}")
    try:
        if spec.is_builtin:
            result = cscan.scan(data)
            codec = _codec(data)
            funcs = [_source_function(data, codec, rel, s.name, s.start, s.end, spec.language)
                     for s in result.spans]
            error = str(result.error) if result.error else None
            return FileResult(rel, funcs, error, result.notes)
        funcs = run_external_extractor(spec.kind, repo_root / rel, rel, data, spec.language)
    except (ExtractorFailed, ProtocolError) as exc:
        return FileResult(rel, [], str(exc))
    uids = [f.uid for f in funcs]
    if len(set(uids)) != len(uids):
        return FileResult(rel, [], "extractor emitted duplicate functions")
    return FileResult(rel, funcs)


@dataclass
class ExtractionResult:
    functions: list[SourceFunction]
    errors: dict[str, str] = field(default_factory=dict)
    notes: dict[str, list[str]] = field(default_factory=dict)
    file_count: int = 0


def merge_extraction(results) -> ExtractionResult:
    """Combine per-file results into one deterministically ordered list."""
    results = sorted(results, key=lambda r: r.file)
    funcs = [f for r in results for f in r.functions]
    funcs.sort(key=lambda f: (f.file, f.start_byte))
    return ExtractionResult(
        funcs,
        {r.file: r.error for r in results if r.error},
        {r.file: list(r.notes) for r in results if r.notes},
        len(results),
    )


def extract_all(repo_root, registry: ExtractorRegistry, workers: int = 1,
                exclude=()) -> ExtractionResult:
    if not len(registry):
        raise NoExtractorsRegistered("no extractors registered")
    registry.freeze()
    files = discover_source_files(repo_root, registry, exclude)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda fh: extract_file(repo_root, *fh), files))
    return merge_extraction(results)
