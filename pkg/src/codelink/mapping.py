"""Align decompiled functions with source functions by normalized symbol name."""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import PurePosixPath

from .decompile import DecompiledFunction, is_placeholder_name
from .errors import DuplicateUid
from .extract import SourceFunction

DEFAULT_SUFFIXES = (r"\.part\.\d+$", r"\.isra\.\d+$", r"\.constprop\.\d+$", r"\.cold$", r"\.plt$")
MIXED_LANGUAGE = "mixed"


@dataclass(frozen=True)
class NameNormalization:
    strip_leading_underscores: bool = True
    strip_compiler_suffixes: bool = True
    suffix_patterns: tuple[str, ...] = DEFAULT_SUFFIXES

    def __post_init__(self):
        object.__setattr__(self, "suffix_patterns", tuple(self.suffix_patterns))
        for pat in self.suffix_patterns:
            re.compile(pat)


@dataclass(frozen=True)
class MappingPolicy:
    mode: str = "exact"
    include_unmapped: bool = False
    require_unique: bool = False
    # only consulted when a backend supplies DecompiledFunction.source_hint
    filename_consistency: bool = False

    def __post_init__(self):
        if self.mode not in ("exact", "lenient"):
            raise ValueError(f"unknown mapping mode {self.mode!r}")


@dataclass(frozen=True)
class MappedRecord:
    decompiled: DecompiledFunction
    source_files: dict[str, str]
    source_definitions: dict[str, str]
    source_file_start_bytes: dict[str, int]
    source_file_end_bytes: dict[str, int]
    class_names: dict[str, str | None]
    language: str

    @property
    def uids(self) -> list[str]:
        return sorted(self.source_files)

    @property
    def is_mapped(self) -> bool:
        return bool(self.source_files)

    def key_sets_coherent(self) -> bool:
        keys = set(self.source_files)
        return all(set(m) == keys for m in (self.source_definitions, self.source_file_start_bytes,
                                            self.source_file_end_bytes, self.class_names))


@dataclass
class MappingStats:
    matched: int = 0
    unmatched_decompiled: int = 0
    ambiguous: int = 0
    ambiguous_uids: list[str] = field(default_factory=list)


def _compiled(rules: NameNormalization):
    return [re.compile(p) for p in rules.suffix_patterns] if rules.strip_compiler_suffixes else []


def normalize_name(name: str, rules: NameNormalization = NameNormalization(), _patterns=None) -> str:
    """Strip compiler clone suffixes until fixpoint, then at most one leading underscore."""
    patterns = _compiled(rules) if _patterns is None else _patterns
    changed = True
    while changed and patterns:
        changed = False
        for pat in patterns:
            stripped = pat.sub("", name, count=1)
            if stripped != name:
                name, changed = stripped, True
    if rules.strip_leading_underscores and name.startswith("_"):
        candidate = name[1:]
        # "__x" keeps both underscores: stripping one would not be a fixpoint
        if not candidate.startswith("_") and not any(p.search(candidate) for p in patterns):
            name = candidate
    return name


def _hint_ok(src: SourceFunction, dec: DecompiledFunction, policy: MappingPolicy) -> bool:
    if not policy.filename_consistency or not dec.source_hint:
        return True
    return PurePosixPath(src.file).name == PurePosixPath(dec.source_hint).name


def is_potential_match(src: SourceFunction, dec: DecompiledFunction,
                       rules: NameNormalization = NameNormalization(),
                       policy: MappingPolicy = MappingPolicy()) -> bool:
    if is_placeholder_name(dec.name):
        return False
    if not _hint_ok(src, dec, policy):
        return False
    norm = normalize_name(dec.name, rules)
    if norm == src.name:
        return True
    if policy.mode == "lenient":
        if src.qualified_class and norm == f"{src.qualified_class}::{src.name}":
            return True
        return norm.endswith("::" + src.name)
    return False


def _lookup_keys(norm: str, mode: str) -> list[str]:
    keys = [norm]
    if mode == "lenient":
        i = norm.find("::")
        while i >= 0:
            keys.append(norm[i + 2:])
            i = norm.find("::", i + 1)
    return keys


def build_record(dec: DecompiledFunction, matches: list[SourceFunction]) -> MappedRecord:
    matches = sorted(matches, key=lambda s: s.uid)
    langs = sorted({s.language for s in matches})
    language = langs[0] if len(langs) == 1 else (MIXED_LANGUAGE if langs else "")
    return MappedRecord(
        dec,
        {s.uid: s.file for s in matches},
        {s.uid: s.definition for s in matches},
        {s.uid: s.start_byte for s in matches},
        {s.uid: s.end_byte for s in matches},
        {s.uid: s.qualified_class for s in matches},
        language,
    )


def _check_unique(items, attr: str) -> None:
    seen = set()
    for item in items:
        uid = getattr(item, attr)
        if uid in seen:
            raise DuplicateUid(uid)
        seen.add(uid)


def assemble(decompiled, matches_for, policy: MappingPolicy):
    """Turn per-function match lists into records ordered by (bin, address, name)."""
    stats = MappingStats()
    records = []
    for dec in sorted(decompiled, key=lambda d: (d.bin, d.address, d.name)):
        matches = matches_for(dec)
        if not matches:
            stats.unmatched_decompiled += 1
            if policy.include_unmapped:
                records.append(build_record(dec, []))
            continue
        stats.matched += 1
        record = build_record(dec, matches)
        mixed = record.language == MIXED_LANGUAGE
        if mixed or (policy.require_unique and policy.mode == "exact" and len(matches) > 1):
            stats.ambiguous += 1
            stats.ambiguous_uids.append(dec.decompiled_uid)
        records.append(record)
    return records, stats


def map_functions(sources, decompiled, rules: NameNormalization = NameNormalization(),
                  policy: MappingPolicy = MappingPolicy()):
    """Return ``(records, stats)``; every matching source lands in the same record.

    Sources are indexed by name (and, in lenient mode, every ``::`` suffix of the
    decompiled name is probed), so the cost is O(S + D * k) rather than the
    O(S * D) pairwise scan, with identical results.
    """
    sources = list(sources)
    decompiled = list(decompiled)
    _check_unique(sources, "uid")
    _check_unique(decompiled, "decompiled_uid")
    index: dict[str, list[SourceFunction]] = defaultdict(list)
    for src in sources:
        index[src.name].append(src)
    patterns = _compiled(rules)

    def matches_for(dec: DecompiledFunction) -> list[SourceFunction]:
        if is_placeholder_name(dec.name):
            return []
        norm = normalize_name(dec.name, rules, patterns)
        found: dict[str, SourceFunction] = {}
        for key in _lookup_keys(norm, policy.mode):
            for src in index.get(key, ()):
                if _hint_ok(src, dec, policy):
                    found[src.uid] = src
        return list(found.values())

    return assemble(decompiled, matches_for, policy)
