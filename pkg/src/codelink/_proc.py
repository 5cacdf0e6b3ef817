"""Subprocess helper that kills the whole process group on timeout.

``subprocess.run(..., timeout=...)`` only kills the direct child; a shell that
spawned ``sleep`` would leave the grandchild holding the output pipes open.
"""

from __future__ import annotations

import os
import signal
import subprocess
from dataclasses import dataclass


@dataclass
class Completed:
    returncode: int
    stdout: bytes
    stderr: bytes
    timed_out: bool


def run(argv, *, cwd=None, env=None, timeout: float | None = None, stdout=subprocess.PIPE,
        stderr=subprocess.PIPE) -> Completed:
    proc = subprocess.Popen(argv, cwd=cwd, env=env, stdout=stdout, stderr=stderr,
                            stdin=subprocess.DEVNULL, start_new_session=True)
    try:
        out, err = proc.communicate(timeout=timeout)
        timed_out = False
    except subprocess.TimeoutExpired:
        _kill_group(proc)
        out, err = proc.communicate()
        timed_out = True
    return Completed(proc.returncode, out or b"", err or b"", timed_out)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
