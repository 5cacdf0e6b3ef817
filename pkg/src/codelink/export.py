"""Dataset serialization: CSV (default), JSONL, and the sidecar manifest."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .decompile import DecompiledFunction
from .errors import SchemaError
from .mapping import MappedRecord

COLUMNS = (
    "decompiled_uid", "assembly", "architecture", "name", "bin", "decompiled_definition",
    "language", "source_files", "source_definitions", "source_file_start_bytes",
    "source_file_end_bytes", "class_names",
)
SCALAR_COLUMNS = COLUMNS[:7]
MAP_COLUMNS = COLUMNS[7:]
MANIFEST_NAME = "manifest.json"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def record_to_row(record: MappedRecord) -> dict:
    """Schema-ordered dict; map values are key-sorted plain dicts."""
    d = record.decompiled
    row = {
        "decompiled_uid": d.decompiled_uid,
        "assembly": d.assembly,
        "architecture": d.architecture,
        "name": d.name,
        "bin": d.bin,
        "decompiled_definition": d.decompiled_definition,
        "language": record.language,
    }
    for col in MAP_COLUMNS:
        m = getattr(record, col)
        row[col] = {k: m[k] for k in sorted(m)}
    return row


def _address_from_uid(uid: str, bin_rel: str, name: str) -> int:
    prefix, suffix = f"{bin_rel}::", f"::{name}"
    if uid.startswith(prefix) and uid.endswith(suffix) and len(uid) > len(prefix) + len(suffix):
        middle = uid[len(prefix):len(uid) - len(suffix)]
        if middle.startswith("0x"):
            try:
                return int(middle, 16)
            except ValueError:
                pass
    return 0


def row_to_record(row: dict, line: int) -> MappedRecord:
    """Validate one decoded row and rebuild the record; raises SchemaError."""
    for key in row:
        if key not in COLUMNS:
            raise SchemaError(line, key, "unknown column")
    for key in COLUMNS:
        if key not in row:
            raise SchemaError(line, key, "missing")
    for key in SCALAR_COLUMNS:
        if not isinstance(row[key], str):
            raise SchemaError(line, key, "expected a string")
    for key in MAP_COLUMNS:
        if not isinstance(row[key], dict):
            raise SchemaError(line, key, "expected an object")
    keys = set(row["source_files"])
    for key in MAP_COLUMNS[1:]:
        other = set(row[key])
        if other != keys:
            uid = sorted(keys ^ other)[0]
            raise SchemaError(line, uid, f"uid present in only some of the map columns ({key})")
    for uid in keys:
        if not isinstance(row["source_files"][uid], str) or \
                not isinstance(row["source_definitions"][uid], str):
            raise SchemaError(line, uid, "file and definition must be strings")
        for col in ("source_file_start_bytes", "source_file_end_bytes"):
            v = row[col][uid]
            if not isinstance(v, int) or isinstance(v, bool):
                raise SchemaError(line, uid, f"{col} must be an integer")
        if row["class_names"][uid] is not None and not isinstance(row["class_names"][uid], str):
            raise SchemaError(line, uid, "class name must be a string or null")
    dec = DecompiledFunction(
        row["decompiled_uid"], row["name"],
        _address_from_uid(row["decompiled_uid"], row["bin"], row["name"]),
        row["architecture"], row["bin"], row["assembly"], row["decompiled_definition"],
    )
    return MappedRecord(dec, *(dict(row[c]) for c in MAP_COLUMNS), row["language"])


# -- CSV ----------------------------------------------------------------------------


def csv_cell(value: str) -> str:
    """RFC 4180 quoting; a bare CR is quoted too, which ``csv.writer`` would miss with LF rows."""
    if any(c in value for c in ',"\r\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def export_csv(records, out_path) -> int:
    count = 0
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for record in records:
            row = record_to_row(record)
            cells = [row[c] for c in SCALAR_COLUMNS] + [canonical_json(row[c]) for c in MAP_COLUMNS]
            fh.write(",".join(csv_cell(c) for c in cells) + "\n")
            count += 1
    return count


def iter_csv_rows(text: str):
    """Yield ``(line, cells)`` per record; ``line`` is where the record starts.

    Inverse of ``csv_cell``. Written by hand because the stdlib reader on some
    versions rejects NUL characters that the writer legitimately emits.
    """
    i, n, line = 0, len(text), 1
    while i < n:
        start_line, cells = line, []
        while True:
            if i < n and text[i] == '"':
                i += 1
                buf = []
                while True:
                    j = text.find('"', i)
                    if j < 0:
                        raise SchemaError(start_line, "row", "unterminated quoted cell")
                    buf.append(text[i:j])
                    line += text.count("\n", i, j)
                    if text.startswith('""', j):
                        buf.append('"')
                        i = j + 2
                        continue
                    i = j + 1
                    break
                cell = "".join(buf)
                if i < n and text[i] not in ",\r\n":
                    raise SchemaError(start_line, "row", "text after closing quote")
            else:
                j = i
                while j < n and text[j] not in ',\r\n"':
                    j += 1
                if j < n and text[j] == '"':
                    raise SchemaError(start_line, "row", "stray quote in unquoted cell")
                cell, i = text[i:j], j
            cells.append(cell)
            if i < n and text[i] == ",":
                i += 1
                continue
            if text.startswith("\r\n", i):
                i += 2
            elif i < n:
                i += 1
            line += 1
            break
        yield start_line, cells


def import_csv(path) -> list[MappedRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    rows = iter_csv_rows(text)
    first = next(rows, None)
    if first is None:
        return []
    header = first[1]
    if tuple(header) != COLUMNS:
        missing = [c for c in COLUMNS if c not in header] or ["header"]
        raise SchemaError(1, missing[0], "header does not match the dataset schema")
    records = []
    for line, cells in rows:
        if len(cells) != len(COLUMNS):
            raise SchemaError(line, "row", f"expected {len(COLUMNS)} cells, got {len(cells)}")
        row = dict(zip(COLUMNS, cells))
        for col in MAP_COLUMNS:
            try:
                row[col] = json.loads(row[col])
            except json.JSONDecodeError:
                raise SchemaError(line, col, "cell is not valid JSON") from None
        records.append(row_to_record(row, line))
    return records


# -- JSONL --------------------------------------------------------------------------


def export_jsonl(records, out_path) -> int:
    count = 0
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        for record in records:
            fh.write(json.dumps(record_to_row(record), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def import_jsonl(path) -> list[MappedRecord]:
    records = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                row = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(line, "json", exc.msg) from None
            if not isinstance(row, dict):
                raise SchemaError(line, "json", "expected an object")
            records.append(row_to_record(row, line))
    return records


def read_dataset(path) -> list[MappedRecord]:
    path = Path(path)
    if path.suffix == ".jsonl":
        return import_jsonl(path)
    return import_csv(path)


# -- manifest -----------------------------------------------------------------------


@dataclass
class DatasetManifest:
    tool_version: str
    repo: str
    build_command: str
    binaries: list[str]
    record_count: int
    stage_metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    datasets: list[str] = field(default_factory=list)
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc)
                            .isoformat(timespec="seconds").replace("+00:00", "Z"))


def write_manifest(manifest: DatasetManifest, out_dir) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    return path


def validate_manifest(manifest_path) -> list[str]:
    """Return a list of problems (empty when every listed dataset matches record_count)."""
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    problems = []
    for name in data.get("datasets", []):
        dataset = manifest_path.parent / name
        if not dataset.exists():
            problems.append(f"{name}: missing")
            continue
        rows = len(read_dataset(dataset))
        if rows != data["record_count"]:
            problems.append(f"{name}: record_count {data['record_count']} != {rows} rows")
    return problems
