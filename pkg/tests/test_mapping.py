import random

import pytest
from corpus import brute_force_mapping, random_corpus, records_as_rows
from hypothesis import given, settings
from hypothesis import strategies as st

from codelink.decompile import DecompiledFunction, make_decompiled_uid
from codelink.errors import DuplicateUid
from codelink.extract import SourceFunction, make_uid
from codelink.mapping import (MappingPolicy, NameNormalization, is_potential_match, map_functions,
                              normalize_name)


def src(name, file="a.c", start=0, cls=None, lang="C"):
    return SourceFunction(make_uid(file, name, start), name, cls, lang, file, start, start + 10,
                          f"int {name}(){{}}")


def dec(name, addr=0x1000, binary="main_app"):
    return DecompiledFunction(make_decompiled_uid(binary, addr, name), name, addr, "x86_64", binary,
                              "C3", "")


@pytest.mark.parametrize("raw,expected", [
    ("hv_loop_run.isra.0", "hv_loop_run"), ("_memcpy", "memcpy"), ("main", "main"),
    ("f.part.1.cold", "f"), ("g.isra.0.constprop.3", "g"), ("puts.plt", "puts"),
    ("__x", "__x"), ("_", ""), ("", ""), ("a.cold.part", "a.cold.part"),
])
def test_normalize_examples(raw, expected):
    assert normalize_name(raw) == expected


def test_normalize_switches():
    assert normalize_name("_f.isra.0", NameNormalization(strip_leading_underscores=False)) == "_f"
    assert normalize_name("_f.isra.0", NameNormalization(strip_compiler_suffixes=False)) == "f.isra.0"
    assert normalize_name("f_impl", NameNormalization(suffix_patterns=(r"_impl$",))) == "f"


def test_bad_suffix_pattern():
    with pytest.raises(Exception):
        NameNormalization(suffix_patterns=("(",))


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.sampled_from(list("_ab.1") + [".part.1", ".isra.0", ".cold", ".plt",
                                                  ".constprop.2"]), max_size=12).map("".join))
def test_normalize_idempotent_on_suffix_soup(name):
    once = normalize_name(name)
    assert normalize_name(once) == once


@settings(max_examples=500, deadline=None)
@given(st.text(max_size=20))
def test_normalize_idempotent_on_any_text(name):
    once = normalize_name(name)
    assert normalize_name(once) == once


def test_is_potential_match_examples():
    assert is_potential_match(src("add"), dec("add"))
    assert not is_potential_match(src("add"), dec("FUN_00401a2c"))
    assert not is_potential_match(src("add"), dec("Add"))
    run = src("run", cls="EventLoop")
    lenient = MappingPolicy(mode="lenient")
    assert is_potential_match(run, dec("EventLoop::run"), policy=lenient)
    assert not is_potential_match(run, dec("EventLoop::run"))
    assert is_potential_match(src("run"), dec("ns::Other::run"), policy=lenient)
    assert not is_potential_match(src("run"), dec("ns::Other::runner"), policy=lenient)


def test_lenient_rule_by_enumeration():
    # every (src, dec) pair, checked against the rule stated directly
    sources = [src("run", cls="EventLoop"), src("run", file="b.c"), src("stop", cls="EventLoop"),
               src("EventLoop::run", file="c.c")]
    decs = [dec("EventLoop::run"), dec("run", 2), dec("Other::run", 3), dec("EventLoop::stop", 4),
            dec("_EventLoop::run.isra.0", 5), dec("stop", 6), dec("FUN_00001234", 7)]
    for s in sources:
        for d in decs:
            norm = normalize_name(d.name)
            expected = (norm == s.name or (s.qualified_class is not None
                                           and norm == f"{s.qualified_class}::{s.name}")
                        or norm.endswith("::" + s.name))
            expected = expected and not d.name.startswith("FUN_")
            assert is_potential_match(s, d, policy=MappingPolicy(mode="lenient")) == expected


def test_pairs_example():
    sources = [src("add", "math.c"), src("log_msg", "util.c")]
    records, stats = map_functions(sources, [dec("add", 1), dec("log_msg", 2)])
    assert [len(r.source_files) for r in records] == [1, 1]
    assert (stats.matched, stats.unmatched_decompiled, stats.ambiguous) == (2, 0, 0)


def test_static_duplicates_in_one_record():
    sources = [src("init", "loop.c", 10), src("init", "net.c", 20)]
    (record,), stats = map_functions(sources, [dec("init")])
    assert record.uids == ["loop.c::init::10", "net.c::init::20"]
    assert record.key_sets_coherent() and stats.ambiguous == 0
    _, strict = map_functions(sources, [dec("init")], policy=MappingPolicy(require_unique=True))
    assert strict.ambiguous == 1 and strict.ambiguous_uids == [dec("init").decompiled_uid]


def test_stripped_all_placeholders():
    decs = [dec(f"FUN_{a:08x}", a) for a in range(0x1000, 0x1005)]
    records, stats = map_functions([src("add")], decs)
    assert records == [] and stats.unmatched_decompiled == 5
    records, _ = map_functions([src("add")], decs, policy=MappingPolicy(include_unmapped=True))
    assert len(records) == 5 and not any(r.is_mapped for r in records)
    assert all(r.language == "" for r in records)


def test_mixed_language_flagged():
    sources = [src("parse", "a.c"), src("parse", "b.cc", lang="C++")]
    (record,), stats = map_functions(sources, [dec("parse")])
    assert record.language == "mixed" and len(record.source_files) == 2
    assert stats.ambiguous == 1


def test_filename_consistency_hint():
    sources = [src("init", "loop.c"), src("init", "net.c", 5)]
    d = DecompiledFunction("b::0x1::init", "init", 1, "x86_64", "b", "", "", source_hint="/x/net.c")
    policy = MappingPolicy(filename_consistency=True)
    (record,), _ = map_functions(sources, [d], policy=policy)
    assert record.uids == ["net.c::init::5"]
    assert is_potential_match(sources[1], d, policy=policy)
    assert not is_potential_match(sources[0], d, policy=policy)


def test_duplicate_uids_rejected():
    with pytest.raises(DuplicateUid):
        map_functions([src("a"), src("a")], [])
    with pytest.raises(DuplicateUid):
        map_functions([], [dec("a"), dec("a")])


def test_output_order():
    decs = [dec("b", 2, "tool"), dec("a", 2, "main_app"), dec("c", 1, "tool"), dec("a", 1, "tool")]
    records, _ = map_functions([src(n, start=i) for i, n in enumerate("abc")], decs)
    assert [(r.decompiled.bin, r.decompiled.address, r.decompiled.name) for r in records] == [
        ("main_app", 2, "a"), ("tool", 1, "a"), ("tool", 1, "c"), ("tool", 2, "b")]


def test_invalid_mode():
    with pytest.raises(ValueError):
        MappingPolicy(mode="fuzzy")


POLICIES = [MappingPolicy(), MappingPolicy(mode="lenient"),
            MappingPolicy(include_unmapped=True), MappingPolicy(require_unique=True),
            MappingPolicy(mode="lenient", include_unmapped=True, require_unique=True)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(POLICIES),
       st.sampled_from([NameNormalization(), NameNormalization(strip_leading_underscores=False)]))
def test_equals_brute_force(seed, policy, rules):
    sources, decs = random_corpus(random.Random(seed), 60, 60)
    records, stats = map_functions(sources, decs, rules, policy)
    rows, counts = brute_force_mapping(sources, decs, rules, policy)
    assert records_as_rows(records) == rows
    assert (stats.matched, stats.unmatched_decompiled, stats.ambiguous) == (
        counts["matched"], counts["unmatched"], counts["ambiguous"])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["exact", "lenient"]))
def test_coherence_and_exclusion_monotonicity(seed, mode):
    sources, decs = random_corpus(random.Random(seed), 60, 60)
    with_unmapped, s1 = map_functions(sources, decs, policy=MappingPolicy(mode, include_unmapped=True))
    without, s2 = map_functions(sources, decs, policy=MappingPolicy(mode))
    assert all(r.key_sets_coherent() for r in with_unmapped)
    assert without == [r for r in with_unmapped if r.is_mapped]
    assert s1.matched + s1.unmatched_decompiled == len(decs)
    assert s1.ambiguous <= s1.matched
    assert s1 == s2
