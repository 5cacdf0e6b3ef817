import re
import shutil
import subprocess

import pytest
from conftest import needs_cc
from elfbuild import (EM_386, EM_AARCH64, EM_ARM, EM_PPC64, ET_REL, SHT_DYNSYM, SHT_PROGBITS,
                      STT_OBJECT, Sym, build_elf, one_add_elf)
from guarded import GuardedBytes
from hypothesis import given, settings
from hypothesis import strategies as st

from codelink import elf
from codelink.decompile import read_elf_functions
from codelink.errors import MalformedElf, NoSymbols, NotAnElf

needs_readelf = pytest.mark.skipif(shutil.which("readelf") is None, reason="readelf missing")


def readelf_functions(path, table=".symtab"):
    """Independent oracle: FUNC symbols with nonzero size and a real section, via readelf."""
    out = subprocess.run(["readelf", "-sW", str(path)], check=True, capture_output=True,
                         text=True).stdout
    funcs, current = set(), None
    for line in out.splitlines():
        m = re.match(r"Symbol table '([^']+)'", line)
        if m:
            current = m.group(1)
            continue
        parts = line.split()
        if current != table or len(parts) < 8 or not parts[0].endswith(":"):
            continue
        _, value, size, typ, _bind, _vis, ndx, name = parts[:8]
        if typ == "FUNC" and int(size, 0) > 0 and ndx.isdigit():
            funcs.add((name.split("@")[0], int(value, 16), int(size, 0)))
    return funcs


def parsed(data):
    return {(f.name, f.address, f.size) for f in elf.parse_elf(data).functions}


@needs_readelf
def test_handcrafted_add_matches_readelf(tmp_path):
    data = one_add_elf()
    path = tmp_path / "add.elf"
    path.write_bytes(data)
    assert parsed(data) == readelf_functions(path) == {("add", 0x401000, 8)}
    (rec,) = read_elf_functions(data, "bin/add")
    assert rec.name == "add" and rec.address == 0x401000 and rec.architecture == "x86_64"
    assert rec.assembly == "8D 04 37 48 C3 90 90 90"
    assert rec.decompiled_definition == ""
    assert rec.decompiled_uid == "bin/add::0x401000::add"


@needs_readelf
@pytest.mark.parametrize("bits,little", [(64, True), (64, False), (32, True), (32, False)])
def test_classes_and_byte_orders_match_readelf(tmp_path, bits, little):
    code = bytes(range(64))
    syms = [Sym("f", 0, 16), Sym("g", 16, 32), Sym("data", 48, 8, STT_OBJECT), Sym("z", 60, 0)]
    data = build_elf(code, syms, bits=bits, little=little, machine=EM_386)
    path = tmp_path / "x.elf"
    path.write_bytes(data)
    assert parsed(data) == readelf_functions(path)
    info = elf.parse_elf(data)
    assert info.bits == bits and info.little_endian is little
    assert [f.code for f in info.functions] == [code[0:16], code[16:48]]


@needs_cc
@needs_readelf
def test_demo_binaries_match_readelf(built_demo):
    for name in ("main_app", "tool"):
        path = built_demo / name
        assert parsed(path.read_bytes()) == readelf_functions(path)


@needs_cc
def test_stripped_binary_has_no_symbols(built_demo, tmp_path):
    dest = tmp_path / "main_app"
    shutil.copy(built_demo / "main_app", dest)
    subprocess.run(["strip", str(dest)], check=True)
    with pytest.raises(NoSymbols):
        elf.parse_elf(dest.read_bytes())


def test_no_symbol_table_at_all():
    data = build_elf(b"\x90" * 8, [Sym("f", 0, 8)], symtab_type=SHT_PROGBITS)
    with pytest.raises(NoSymbols):
        elf.parse_elf(data)


def test_dynsym_fallback():
    data = build_elf(b"\x90" * 16, [Sym("exported", 0, 16)], symtab_name=".dynsym",
                     symtab_type=SHT_DYNSYM)
    info = elf.parse_elf(data)
    assert info.symbol_table == ".dynsym" and info.functions[0].name == "exported"


def test_relocatable_object_uses_section_offsets():
    data = build_elf(bytes(range(32)), [Sym("a", 0, 8), Sym("b", 8, 8)], e_type=ET_REL)
    info = elf.parse_elf(data)
    assert [(f.name, f.address, f.code) for f in info.functions] == [
        ("a", 0, bytes(range(8))), ("b", 8, bytes(range(8, 16)))]


def test_arm_thumb_bit_cleared_for_bytes():
    code = bytes(range(16))
    data = build_elf(code, [Sym("t", 1, 4)], machine=EM_ARM, bits=32)
    (f,) = elf.parse_elf(data).functions
    assert f.address == 0x401001 and f.code == code[0:4]


def test_symbol_outside_section_is_skipped():
    data = build_elf(b"\x90" * 16, [Sym("inside", 0, 8), Sym("outside", 12, 8)])
    assert [f.name for f in elf.parse_elf(data).functions] == ["inside"]
    with pytest.raises(NoSymbols):
        elf.parse_elf(build_elf(b"\x90" * 16, [Sym("outside", 12, 8)]))


@pytest.mark.parametrize("machine,name", [(62, "x86_64"), (EM_AARCH64, "ARM64"), (EM_ARM, "ARM"),
                                          (EM_386, "x86"), (EM_PPC64, "PPC64"), (4242, "unknown(4242)")])
def test_architecture_names(machine, name):
    assert elf.architecture_name(machine) == name
    assert elf.parse_elf(build_elf(b"\x90" * 8, [Sym("f", 0, 8)], machine=machine)).architecture == name


@pytest.mark.parametrize("data,exc", [
    (b"", NotAnElf), (b"\x7fEL", NotAnElf), (b"MZ\x90\x00" + bytes(100), NotAnElf),
    (b"\x7fELF", MalformedElf), (b"\x7fELF" + b"\xff" * 60, MalformedElf),
    (b"\x7fELF\x02\x01" + bytes(10), MalformedElf),
])
def test_rejects_bad_input(data, exc):
    with pytest.raises(exc):
        elf.parse_elf(GuardedBytes(data))


def test_truncations_never_overread():
    data = one_add_elf()
    for cut in range(len(data)):
        try:
            elf.parse_elf(GuardedBytes(data[:cut]))
        except (NotAnElf, MalformedElf, NoSymbols):
            pass


def test_hex_dump_wraps_at_16():
    assert elf.hex_dump(bytes(range(18))) == (
        "00 01 02 03 04 05 06 07 08 09 0A 0B 0C 0D 0E 0F\n10 11")
    assert elf.hex_dump(b"") == ""


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=512))
def test_random_bytes_after_magic(tail):
    try:
        elf.parse_elf(GuardedBytes(b"\x7fELF" + tail))
    except (MalformedElf, NoSymbols):
        pass


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10_000), st.integers(0, 7)), max_size=8))
def test_bit_flips_of_valid_file(flips):
    data = bytearray(one_add_elf())
    for pos, bit in flips:
        data[pos % len(data)] ^= 1 << bit
    try:
        info = elf.parse_elf(GuardedBytes(bytes(data)))
    except (NotAnElf, MalformedElf, NoSymbols):
        return
    for f in info.functions:
        assert f.size == len(f.code) > 0
