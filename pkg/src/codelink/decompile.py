"""Binary-side function recovery through pluggable backends.

Three backends share one record type:

* ``elf-symtab``: the built-in symbol-table reader (hex dump in place of disassembly)
* ``external``: any command that prints the JSON-lines protocol, e.g. a thin
  wrapper around a headless decompiler
* ``fixture``: reads a ``<binary>.dec.jsonl`` sidecar written by hand or by tests
"""

from __future__ import annotations

import logging
import re
import shlex
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import _proc, elf
from .errors import (AllBinariesFailed, CodelinkError, DecompilerFailed, DecompilerTimeout,
                     ProtocolError)
from .protocol import parse_json_lines

log = logging.getLogger(__name__)

KINDS = ("elf-symtab", "external", "fixture")
SIDECAR_SUFFIX = ".dec.jsonl"
PROTOCOL_KEYS = {"name": str, "address": int, "architecture": str, "assembly": str,
                 "definition": str}
_PLACEHOLDER_RE = re.compile(r"^(FUN|SUB|LAB|thunk_FUN)_[0-9a-fA-F]{6,16}$")


@dataclass(frozen=True)
class DecompiledFunction:
    decompiled_uid: str
    name: str
    address: int
    architecture: str
    bin: str
    assembly: str
    decompiled_definition: str
    # optional source-path hint from an external backend; not part of the dataset schema
    source_hint: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class DecompilerSpec:
    kind: str = "elf-symtab"
    command: str | None = None
    timeout: float = 1800
    retries: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown decompiler kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external decompiler requires a command")
        if self.timeout <= 0:
            raise ValueError("decompiler timeout must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


def make_decompiled_uid(bin_rel: str, address: int, name: str) -> str:
    return f"{bin_rel}::{address:#x}::{name}"


def is_placeholder_name(name: str) -> bool:
    return not name or bool(_PLACEHOLDER_RE.match(name))


def read_elf_functions(binary_bytes: bytes, bin_path: str) -> list[DecompiledFunction]:
    info = elf.parse_elf(binary_bytes)
    return [
        DecompiledFunction(make_decompiled_uid(bin_path, f.address, f.name), f.name, f.address,
                           info.architecture, bin_path, elf.hex_dump(f.code), "")
        for f in info.functions
    ]


def _records_to_functions(records: list[dict], bin_rel: str, min_address: int) -> list[DecompiledFunction]:
    out = []
    seen = set()
    for lineno, rec in enumerate(records, start=1):
        if rec["address"] < min_address:
            raise ProtocolError(lineno, f"address must be >= {min_address}", key="address")
        uid = make_decompiled_uid(bin_rel, rec["address"], rec["name"])
        if uid in seen:
            raise ProtocolError(lineno, f"duplicate function {uid}", key="name")
        seen.add(uid)
        out.append(DecompiledFunction(uid, rec["name"], rec["address"], rec["architecture"], bin_rel,
                                      rec["assembly"], rec["definition"], rec.get("source_file")))
    return out


def _stderr_log(log_dir, bin_rel: str) -> Path | None:
    if log_dir is None:
        return None
    path = Path(log_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path / f"decompile.{bin_rel.replace('/', '_')}.stderr"


def run_external_decompiler(spec: DecompilerSpec, binary_path, bin_rel: str,
                            log_dir=None) -> list[DecompiledFunction]:
    """Run ``spec.command`` with ``{binary}`` replaced by the (shell-quoted) binary path."""
    command = spec.command.replace("{binary}", shlex.quote(str(Path(binary_path).resolve())))
    res = _proc.run(["sh", "-c", command], timeout=spec.timeout)
    err_log = _stderr_log(log_dir, bin_rel)
    if err_log is not None:
        err_log.write_bytes(res.stderr)
    stderr = res.stderr.decode("utf-8", "replace")
    if res.timed_out:
        raise DecompilerTimeout(f"decompiler timed out after {spec.timeout}s on {bin_rel}", stderr)
    if res.returncode != 0:
        raise DecompilerFailed(f"decompiler exited {res.returncode} on {bin_rel}", stderr)
    records = parse_json_lines(res.stdout, PROTOCOL_KEYS, {"source_file": str})
    return _records_to_functions(records, bin_rel, min_address=1)


def read_fixture(binary_path, bin_rel: str) -> list[DecompiledFunction]:
    sidecar = Path(str(binary_path) + SIDECAR_SUFFIX)
    try:
        payload = sidecar.read_bytes()
    except OSError as exc:
        raise DecompilerFailed(f"fixture sidecar unreadable: {exc}") from None
    records = parse_json_lines(payload, PROTOCOL_KEYS, {"source_file": str})
    return _records_to_functions(records, bin_rel, min_address=0)


def decompile_one(spec: DecompilerSpec, binary_path, bin_rel: str,
                  log_dir=None) -> list[DecompiledFunction]:
    if spec.kind == "elf-symtab":
        return read_elf_functions(Path(binary_path).read_bytes(), bin_rel)
    if spec.kind == "fixture":
        return read_fixture(binary_path, bin_rel)
    return run_external_decompiler(spec, binary_path, bin_rel, log_dir)


@dataclass
class BinaryResult:
    bin: str
    functions: list[DecompiledFunction]
    error: str | None = None
    attempts: int = 1


def decompile_binary(spec: DecompilerSpec, binary_path, bin_rel: str, log_dir=None) -> BinaryResult:
    """Per-binary task body: never raises for per-binary failures.

    External commands get ``spec.retries`` extra attempts after a failure or
    timeout; protocol errors are not retried.
    """
    attempts = 1 + (spec.retries if spec.kind == "external" else 0)
    for attempt in range(1, attempts + 1):
        try:
            return BinaryResult(bin_rel, decompile_one(spec, binary_path, bin_rel, log_dir),
                                attempts=attempt)
        except DecompilerFailed as exc:
            error = f"{type(exc).__name__}: {exc}"
            log.warning("%s (attempt %d/%d)", error, attempt, attempts)
        except (CodelinkError, OSError) as exc:
            return BinaryResult(bin_rel, [], f"{type(exc).__name__}: {exc}", attempt)
    return BinaryResult(bin_rel, [], error, attempts)


@dataclass
class DecompileResult:
    functions: list[DecompiledFunction]
    errors: dict[str, str] = field(default_factory=dict)
    binary_count: int = 0


def merge_decompiled(results) -> DecompileResult:
    """Union of per-binary results ordered by (bin, address, name); fatal if all failed."""
    results = sorted(results, key=lambda r: r.bin)
    errors = {r.bin: r.error for r in results if r.error}
    if results and len(errors) == len(results):
        raise AllBinariesFailed(errors)
    funcs = [f for r in results for f in r.functions]
    funcs.sort(key=lambda f: (f.bin, f.address, f.name))
    return DecompileResult(funcs, errors, len(results))


def bin_relpath(binary_path, repo_root=None) -> str:
    path = Path(binary_path)
    if repo_root is not None:
        try:
            return path.resolve().relative_to(Path(repo_root).resolve()).as_posix()
        except ValueError:
            pass
    return path.name


def decompile_all(binaries, spec: DecompilerSpec, repo_root=None, workers: int = 1,
                  log_dir=None) -> DecompileResult:
    binaries = list(binaries)
    if not binaries:
        raise ValueError("no binaries to decompile")
    jobs = [(b, bin_relpath(b, repo_root)) for b in binaries]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda job: decompile_binary(spec, job[0], job[1], log_dir), jobs))
    return merge_decompiled(results)
