"""Repository acquisition, build execution and binary target resolution."""

from __future__ import annotations

import logging
import os
import re
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

from . import _proc
from .errors import (BinaryMissing, BuildFailed, BuildTimeout, CloneFailed, RefNotFound,
                     SourceNotFound)

log = logging.getLogger(__name__)

_REMOTE_RE = re.compile(r"^(?:(?:https|git|ssh|file)://\S+|[\w.\-]+@[\w.\-]+:\S+)$")
_GLOB_CHARS = set("*?[")


def is_remote(location: str) -> bool:
    return bool(_REMOTE_RE.match(location))


@dataclass(frozen=True)
class RepoSource:
    location: str
    checkout_ref: str | None = None
    copy: bool = False  # copy a local tree into the workspace instead of using it in place


@dataclass(frozen=True)
class BuildSpec:
    command: str
    working_dir: str = "."
    timeout: float = 3600
    env: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.command or not self.command.strip():
            raise ValueError("build command must be non-empty")
        if self.timeout <= 0:
            raise ValueError("build timeout must be > 0")
        for item in self.env:
            if "=" not in item or item.startswith("="):
                raise ValueError(f"env override must be KEY=VALUE, got {item!r}")


@dataclass(frozen=True)
class BuildReport:
    exit_code: int
    duration_seconds: float
    stdout_path: Path
    stderr_path: Path


@dataclass(frozen=True)
class BinaryTargets:
    paths: tuple[str, ...]
    allow_globs: bool = True

    def __post_init__(self):
        if not self.paths:
            raise ValueError("at least one binary target is required")


def _repo_name(url: str) -> str:
    tail = re.split(r"[/:]", url.rstrip("/"))[-1]
    return tail[:-4] if tail.endswith(".git") else tail or "repo"


def _git(args: list[str], cwd: Path | None = None) -> _proc.Completed:
    env = dict(os.environ, GIT_TERMINAL_PROMPT="0")
    return _proc.run(["git", *args], cwd=cwd, env=env)


def acquire(source: RepoSource, workspace: str | os.PathLike) -> Path:
    """Return a directory holding the repository working tree.

    Local directories are used in place unless ``source.copy`` is set. Remote
    locations are cloned into ``workspace/<name>`` with git; an existing clone
    there is reused.
    """
    workspace = Path(workspace)
    loc = source.location
    if is_remote(loc):
        dest = workspace / _repo_name(loc)
        if (dest / ".git").exists():
            log.info("reusing existing clone at %s", dest)
        else:
            res = _git(["clone", "--quiet", loc, str(dest)])
            if res.returncode != 0:
                err = res.stderr.decode("utf-8", "replace")
                raise CloneFailed(f"git clone {loc} exited {res.returncode}", stderr=err)
        if source.checkout_ref:
            res = _git(["checkout", "--quiet", source.checkout_ref], cwd=dest)
            if res.returncode != 0:
                raise RefNotFound(source.checkout_ref)
        return dest.resolve()

    path = Path(loc)
    if not path.is_dir():
        raise SourceNotFound(loc)
    path = path.resolve()
    if source.copy:
        dest = workspace / path.name
        if not dest.exists():
            shutil.copytree(path, dest, symlinks=True)
        return dest.resolve()
    return path


def execute_build(repo_root: str | os.PathLike, spec: BuildSpec,
                  workspace: str | os.PathLike) -> BuildReport:
    """Run the build command through ``sh -c`` with output captured to ``workspace/logs``.

    Raises BuildTimeout or BuildFailed (both carry the report) unless the
    command exits 0.
    """
    repo_root = Path(repo_root)
    if not repo_root.is_dir():
        raise SourceNotFound(str(repo_root))
    logs = Path(workspace) / "logs"
    logs.mkdir(parents=True, exist_ok=True)
    out_path, err_path = logs / "build.stdout", logs / "build.stderr"

    env = dict(os.environ)
    for item in spec.env:
        key, _, value = item.partition("=")
        env[key] = value

    start = time.perf_counter()
    with open(out_path, "wb") as out, open(err_path, "wb") as err:
        res = _proc.run(["sh", "-c", spec.command], cwd=repo_root / spec.working_dir, env=env,
                        timeout=spec.timeout, stdout=out, stderr=err)
    report = BuildReport(res.returncode, max(0.0, time.perf_counter() - start), out_path, err_path)
    if res.timed_out:
        raise BuildTimeout(f"build timed out after {spec.timeout}s", report)
    if res.returncode != 0:
        raise BuildFailed(f"build exited with code {res.returncode}", report)
    return report


def resolve_binaries(repo_root: str | os.PathLike, targets: BinaryTargets) -> list[Path]:
    repo_root = Path(repo_root).resolve()
    found: dict[str, Path] = {}
    missing = []
    for pattern in targets.paths:
        if targets.allow_globs and _GLOB_CHARS & set(pattern):
            hits = [p for p in repo_root.glob(pattern) if p.is_file()]
        else:
            p = repo_root / pattern
            hits = [p] if p.is_file() else []
        if not hits:
            missing.append(pattern)
        for p in hits:
            found.setdefault(p.relative_to(repo_root).as_posix(), p)
    if missing:
        raise BinaryMissing(missing)
    return [found[k] for k in sorted(found)]
