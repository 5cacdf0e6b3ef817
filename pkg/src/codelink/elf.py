"""Minimal ELF symbol-table reader.

Only what function extraction needs: identification, section headers,
``.symtab``/``.dynsym`` and the bytes backing each function symbol. Every read
goes through :meth:`_View.take`, which refuses out-of-range requests, so a
hostile file can only produce :class:`MalformedElf`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import MalformedElf, NoSymbols, NotAnElf

ELF_MAGIC = b"\x7fELF"

SHT_NOBITS = 8
SHT_SYMTAB = 2
SHT_DYNSYM = 11
STT_FUNC = 2
SHN_LORESERVE = 0xFF00
SHN_XINDEX = 0xFFFF
ET_REL = 1

EM_386, EM_ARM, EM_X86_64, EM_AARCH64 = 3, 40, 62, 183
MACHINES = {
    EM_386: "x86",
    EM_ARM: "ARM",
    EM_X86_64: "x86_64",
    EM_AARCH64: "ARM64",
    8: "MIPS",
    20: "PPC",
    21: "PPC64",
    243: "RISCV",
}


def architecture_name(machine: int) -> str:
    return MACHINES.get(machine, f"unknown({machine})")


@dataclass(frozen=True)
class Section:
    index: int
    name_off: int
    type: int
    addr: int
    offset: int
    size: int
    link: int
    entsize: int


@dataclass(frozen=True)
class FuncSymbol:
    name: str
    address: int
    size: int
    section: int
    code: bytes


@dataclass(frozen=True)
class ElfInfo:
    bits: int
    little_endian: bool
    machine: int
    architecture: str
    symbol_table: str  # ".symtab" or ".dynsym"
    functions: list[FuncSymbol]


class _View:
    def __init__(self, data: bytes):
        self.data = data
        self.size = len(data)

    def take(self, off: int, size: int) -> bytes:
        if off < 0 or size < 0 or off > self.size or size > self.size - off:
            raise MalformedElf(f"read of {size} bytes at offset {off} exceeds file size {self.size}")
        return self.data[off:off + size]


class _Layout:
    def __init__(self, bits: int, little: bool):
        e = "<" if little else ">"
        if bits == 64:
            self.ehdr = struct.Struct(e + "HHIQQQIHHHHHH")
            self.shdr = struct.Struct(e + "IIQQQQIIQQ")
            self.sym = struct.Struct(e + "IBBHQQ")
        else:
            self.ehdr = struct.Struct(e + "HHIIIIIHHHHHH")
            self.shdr = struct.Struct(e + "IIIIIIIIII")
            self.sym = struct.Struct(e + "IIIBBH")
        self.bits = bits

    def section(self, index: int, raw: bytes) -> Section:
        name, typ, _flags, addr, off, size, link, _info, _align, entsize = self.shdr.unpack(raw)
        return Section(index, name, typ, addr, off, size, link, entsize)

    def symbol(self, raw: bytes) -> tuple[int, int, int, int, int]:
        """Return (name_off, info, shndx, value, size)."""
        if self.bits == 64:
            name, info, _other, shndx, value, size = self.sym.unpack(raw)
        else:
            name, value, size, info, _other, shndx = self.sym.unpack(raw)
        return name, info, shndx, value, size


def _cstring(view: _View, sec: Section, off: int) -> bytes:
    if off >= sec.size:
        raise MalformedElf(f"string offset {off} outside string table")
    blob = view.take(sec.offset + off, sec.size - off)
    end = blob.find(b"\x00")
    if end < 0:
        raise MalformedElf("unterminated string in string table")
    return blob[:end]


def _headers(view: _View):
    """Validate identification and return (layout, e_type, machine, shstrndx, sections)."""
    if view.size < 4 or view.take(0, 4) != ELF_MAGIC:
        raise NotAnElf("missing ELF magic")
    if view.size < 16:
        raise MalformedElf("truncated identification")
    ident = view.take(0, 16)
    if ident[4] not in (1, 2):
        raise MalformedElf(f"bad ELF class {ident[4]}")
    if ident[5] not in (1, 2):
        raise MalformedElf(f"bad ELF data encoding {ident[5]}")
    layout = _Layout(64 if ident[4] == 2 else 32, ident[5] == 1)

    (e_type, machine, _ver, _entry, _phoff, shoff, _flags, _ehsize, _phentsize, _phnum,
     shentsize, shnum, shstrndx) = layout.ehdr.unpack(view.take(16, layout.ehdr.size))

    if shoff == 0:
        return layout, e_type, machine, shstrndx, []
    if shentsize < layout.shdr.size:
        raise MalformedElf(f"section header entry size {shentsize} too small")
    if shnum == 0:
        # extended numbering: the real count lives in section 0's sh_size
        shnum = layout.section(0, view.take(shoff, layout.shdr.size)).size
    if shoff > view.size or shnum > (view.size - shoff) // shentsize:
        raise MalformedElf(f"{shnum} section headers do not fit in the file")
    sections = [layout.section(i, view.take(shoff + i * shentsize, layout.shdr.size))
                for i in range(shnum)]
    if shstrndx == SHN_XINDEX and sections:
        shstrndx = sections[0].link
    return layout, e_type, machine, shstrndx, sections


def _in_file(view: _View, sec: Section) -> bool:
    return sec.offset <= view.size and sec.size <= view.size - sec.offset


def parse_elf(data: bytes) -> ElfInfo:
    """Parse ``data`` and return every named, sized STT_FUNC symbol with its bytes.

    Raises NotAnElf, MalformedElf or NoSymbols.
    """
    view = _View(data)
    layout, e_type, machine, _, sections = _headers(view)
    shnum = len(sections)

    table = next((s for s in sections if s.type == SHT_SYMTAB), None)
    table_name = ".symtab"
    if table is None:
        table = next((s for s in sections if s.type == SHT_DYNSYM), None)
        table_name = ".dynsym"
    if table is None:
        raise NoSymbols("no .symtab or .dynsym section")
    if table.entsize < layout.sym.size:
        raise MalformedElf(f"symbol entry size {table.entsize} too small")
    if table.link >= shnum:
        raise MalformedElf(f"symbol table links to missing section {table.link}")
    strtab = sections[table.link]
    if not (_in_file(view, table) and _in_file(view, strtab)):
        raise MalformedElf("symbol or string table extends past end of file")

    funcs: list[FuncSymbol] = []
    seen = set()
    for i in range(table.size // table.entsize):
        raw = view.take(table.offset + i * table.entsize, layout.sym.size)
        name_off, info, shndx, value, size = layout.symbol(raw)
        if info & 0xF != STT_FUNC or size == 0 or name_off == 0:
            continue
        if shndx == 0 or shndx >= SHN_LORESERVE or shndx >= shnum:
            continue
        name = _cstring(view, strtab, name_off).decode("utf-8", "replace")
        if not name or (name, value) in seen:
            continue
        sec = sections[shndx]
        if sec.type == SHT_NOBITS:
            continue
        if not _in_file(view, sec):
            raise MalformedElf(f"section {shndx} extends past end of file")
        code_addr = value & ~1 if machine == EM_ARM else value
        rel = code_addr if e_type == ET_REL else code_addr - sec.addr
        # the function must sit inside its section's file extent
        if rel < 0 or size > sec.size or rel > sec.size - size:
            continue
        seen.add((name, value))
        funcs.append(FuncSymbol(name, value, size, shndx, view.take(sec.offset + rel, size)))

    if not funcs:
        raise NoSymbols(f"{table_name} holds no function symbols")
    return ElfInfo(layout.bits, layout.ehdr.format.startswith("<"), machine,
                   architecture_name(machine), table_name, funcs)


def named_sections(data: bytes) -> tuple[int, list[tuple[str, Section]]]:
    """Return ``(e_machine, [(name, section), ...])``; works on stripped binaries."""
    view = _View(data)
    _, _, machine, shstrndx, sections = _headers(view)
    if not sections:
        return machine, []
    if shstrndx >= len(sections):
        raise MalformedElf("bad section name table index")
    names = sections[shstrndx]
    if not _in_file(view, names):
        raise MalformedElf("section name table extends past end of file")
    return machine, [(_cstring(view, names, s.name_off).decode("utf-8", "replace"), s)
                     for s in sections]


def section_bytes(data: bytes, sec: Section) -> bytes:
    return _View(data).take(sec.offset, sec.size)


def hex_dump(code: bytes, width: int = 16) -> str:
    """Uppercase hex bytes, ``width`` per line, lines joined with ``\\n``."""
    return "\n".join(code[i:i + width].hex(" ").upper() for i in range(0, len(code), width))
