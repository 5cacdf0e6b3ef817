"""Tiny stand-in for a headless decompiler: finds x86-64 frame-pointer prologues in ``.text``.

Usage: ``python -m codelink.prologue BINARY`` prints the JSON-lines decompiler protocol.
Functions without a symbol get an address-derived placeholder name (``FUN_00401136``),
which is what a real decompiler reports for a stripped binary. This is a heuristic:
it only sees functions compiled with a frame pointer.
"""

from __future__ import annotations

import json
import sys

from . import elf
from .errors import CodelinkError

ENDBR64 = bytes.fromhex("f30f1efa")
FRAME_SETUP = bytes.fromhex("554889e5")  # push rbp; mov rbp, rsp


def find_prologues(code: bytes) -> list[int]:
    """Offsets of function starts, including a preceding ``endbr64`` when present."""
    starts = []
    i = code.find(FRAME_SETUP)
    while i >= 0:
        start = i - 4 if i >= 4 and code[i - 4:i] == ENDBR64 else i
        starts.append(start)
        i = code.find(FRAME_SETUP, i + 1)
    return starts


def _symbol_names(data: bytes) -> dict[int, str]:
    try:
        return {f.address: f.name for f in elf.parse_elf(data).functions}
    except CodelinkError:
        return {}


def scan_binary(data: bytes) -> list[dict]:
    machine, sections = elf.named_sections(data)
    text = next((s for name, s in sections if name == ".text"), None)
    if text is None:
        return []
    code = elf.section_bytes(data, text)
    names = _symbol_names(data)
    starts = find_prologues(code)
    out = []
    for k, off in enumerate(starts):
        end = starts[k + 1] if k + 1 < len(starts) else len(code)
        addr = text.addr + off
        out.append({
            "name": names.get(addr, f"FUN_{addr:08x}"),
            "address": addr,
            "architecture": elf.architecture_name(machine),
            "assembly": elf.hex_dump(code[off:end]),
            "definition": "",
        })
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m codelink.prologue BINARY", file=sys.stderr)
        return 2
    try:
        with open(argv[0], "rb") as fh:
            data = fh.read()
        records = scan_binary(data)
    except (OSError, CodelinkError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for rec in records:
        sys.stdout.write(json.dumps(rec) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
