"""JSON-lines plugin protocol shared by external extractors and decompilers."""

from __future__ import annotations

import json

from .errors import ProtocolError

_TYPE_NAMES = {str: "string", int: "integer"}


def parse_json_lines(payload: bytes, required: dict[str, type],
                     optional: dict[str, type] | None = None) -> list[dict]:
    """Decode one JSON object per non-blank line and check key presence and types.

    Line numbers in errors are 1-based and count blank lines.
    """
    optional = optional or {}
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = payload[:exc.start].count(b"\n") + 1
        raise ProtocolError(line, "output is not valid UTF-8") from None
    out = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ProtocolError(lineno, "expected a JSON object")
        for key, typ in required.items():
            if key not in obj:
                raise ProtocolError(lineno, f"missing key {key!r}", key=key)
            _check(lineno, key, obj[key], typ)
        for key, typ in optional.items():
            if obj.get(key) is not None:
                _check(lineno, key, obj[key], typ)
        out.append(obj)
    return out


def _check(lineno: int, key: str, value, typ: type) -> None:
    ok = isinstance(value, typ) and not (typ is int and isinstance(value, bool))
    if not ok:
        raise ProtocolError(lineno, f"key {key!r} must be a {_TYPE_NAMES.get(typ, typ.__name__)}",
                            key=key)
