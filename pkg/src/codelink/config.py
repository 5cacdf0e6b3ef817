"""Pipeline configuration: dataclass, JSON config files, and layered merging.

Precedence is per leaf field: defaults < ``CODELINK_WORKERS`` < config file < CLI flags.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

from .decompile import DecompilerSpec
from .errors import ConfigFileError, UsageError
from .extract import DEFAULT_C, ExtractorSpec
from .mapping import MappingPolicy, NameNormalization
from .repo import BinaryTargets, BuildSpec, RepoSource

EXPORT_FORMATS = ("csv", "jsonl", "both")
WORKERS_ENV = "CODELINK_WORKERS"
MAX_DEFAULT_WORKERS = 32


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, MAX_DEFAULT_WORKERS))


@dataclass(frozen=True)
class PipelineConfig:
    repo: RepoSource
    build: BuildSpec
    binaries: BinaryTargets
    workspace: Path
    extractors: tuple[ExtractorSpec, ...] = (DEFAULT_C,)
    decompiler: DecompilerSpec = DecompilerSpec()
    rules: NameNormalization = NameNormalization()
    policy: MappingPolicy = MappingPolicy()
    export_format: str = "csv"
    workers: int = field(default_factory=default_workers)
    strip_binaries: bool = False
    strip_command: str = "strip"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.export_format not in EXPORT_FORMATS:
            raise ValueError(f"export_format must be one of {EXPORT_FORMATS}")
        object.__setattr__(self, "workspace", Path(self.workspace))
        object.__setattr__(self, "extractors", tuple(self.extractors))

    def to_dict(self) -> dict:
        """JSON-safe snapshot for the manifest."""
        def conv(v):
            if is_dataclass(v):
                return {f.name: conv(getattr(v, f.name)) for f in fields(v)
                        if f.name != "source_hint"}
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            if isinstance(v, Path):
                return str(v)
            return v
        return conv(self)


# -- config file schema --------------------------------------------------------------

_NUM = (int, float)
_OPT_STR = (str, type(None))
_SECTIONS = {
    "repo": {"location": str, "checkout_ref": _OPT_STR, "copy": bool},
    "build": {"command": str, "working_dir": str, "timeout": _NUM, "env": list},
    "binaries": {"paths": list, "allow_globs": bool},
    "decompiler": {"kind": str, "command": _OPT_STR, "timeout": _NUM, "retries": int},
    "rules": {"strip_leading_underscores": bool, "strip_compiler_suffixes": bool,
              "suffix_patterns": list},
    "policy": {"mode": str, "include_unmapped": bool, "require_unique": bool,
               "filename_consistency": bool},
}
_SCALARS = {"export_format": str, "workers": int, "workspace": str, "strip_binaries": bool,
            "strip_command": str}
_EXTRACTOR_KEYS = {"language": str, "file_patterns": list, "kind": str}
# shorthand forms: a bare value stands for this field of the section
_SHORTHAND = {"repo": "location", "build": "command", "binaries": "paths"}


def _typecheck(key: str, value, typ) -> None:
    ok = isinstance(value, typ) and not (isinstance(value, bool) and typ in (int, _NUM))
    if not ok:
        raise ConfigFileError(key, f"unexpected value {value!r}")


def _string_list(key: str, value) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigFileError(key, "expected a list of strings")
    return list(value)


def parse_decompiler_string(value: str) -> dict:
    """``elf-symtab`` | ``fixture`` | ``external:CMD``.

    The command is always set so a lower layer's command cannot leak through a merge.
    """
    if value.startswith("external:"):
        return {"kind": "external", "command": value[len("external:"):]}
    return {"kind": value, "command": None}


def load_config_file(path) -> dict:
    """Parse a JSON config into a partial config: ``{field: value or {subfield: value}}``.

    Unknown keys anywhere raise ConfigFileError naming the key.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigFileError(str(path), f"unreadable: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError("<json>", exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigFileError("<root>", "expected a JSON object")

    partial: dict = {}
    for key, value in doc.items():
        if key in _SCALARS:
            _typecheck(key, value, _SCALARS[key])
            partial[key] = value
        elif key in _SECTIONS:
            if key in _SHORTHAND and not isinstance(value, dict):
                value = {_SHORTHAND[key]: value}
            elif key == "decompiler" and isinstance(value, str):
                value = parse_decompiler_string(value)
            if not isinstance(value, dict):
                raise ConfigFileError(key, "expected an object")
            section = {}
            for sub, subval in value.items():
                schema = _SECTIONS[key]
                if sub not in schema:
                    raise ConfigFileError(f"{key}.{sub}", "unknown key")
                _typecheck(f"{key}.{sub}", subval, schema[sub])
                if schema[sub] is list:
                    subval = _string_list(f"{key}.{sub}", subval)
                section[sub] = subval
            partial[key] = section
        elif key == "extractors":
            if not isinstance(value, list):
                raise ConfigFileError(key, "expected a list")
            specs = []
            for i, item in enumerate(value):
                if not isinstance(item, dict):
                    raise ConfigFileError(f"extractors[{i}]", "expected an object")
                for sub, subval in item.items():
                    if sub not in _EXTRACTOR_KEYS:
                        raise ConfigFileError(f"extractors[{i}].{sub}", "unknown key")
                    _typecheck(f"extractors[{i}].{sub}", subval, _EXTRACTOR_KEYS[sub])
                for sub in ("language", "file_patterns"):
                    if sub not in item:
                        raise ConfigFileError(f"extractors[{i}].{sub}", "missing")
                specs.append({**item, "file_patterns": _string_list(
                    f"extractors[{i}].file_patterns", item["file_patterns"])})
            partial[key] = specs
        else:
            raise ConfigFileError(key, "unknown key")
    return partial


def env_layer(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    raw = environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return {}
    try:
        return {"workers": int(raw)}
    except ValueError:
        raise UsageError(WORKERS_ENV, f"expected an integer, got {raw!r}") from None


def merge_layers(*layers: dict) -> dict:
    """Later layers win per leaf; section dicts merge key by key, lists replace."""
    merged: dict = {}
    for layer in layers:
        for key, value in layer.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value
    return merged


# which user-facing option a config field maps to, for error messages
FIELD_FLAGS = {
    "repo": "REPO", "workspace": "OUTPUT_DIR", "build": "build", "binaries": "bin",
    "decompiler": "decompiler", "extractors": "extractor", "export_format": "format",
    "workers": "workers", "rules": "config", "policy": "config", "strip_command": "strip-command",
}


def build_config(merged: dict) -> PipelineConfig:
    """Construct a validated PipelineConfig; problems raise UsageError naming the option."""
    def make(key, cls, **extra):
        try:
            return cls(**{**merged.get(key, {}), **extra})
        except (TypeError, ValueError) as exc:
            raise UsageError(FIELD_FLAGS.get(key, key), str(exc)) from None

    for key in ("repo", "build", "binaries", "workspace"):
        value = merged.get(key)
        if not value or (isinstance(value, dict) and not value.get(_SHORTHAND.get(key, ""), True)):
            raise UsageError(FIELD_FLAGS[key], "required")

    kwargs = {
        "repo": make("repo", RepoSource),
        "build": make("build", BuildSpec, env=tuple(merged["build"].get("env", ()))),
        "binaries": make("binaries", BinaryTargets,
                         paths=tuple(merged["binaries"].get("paths", ()))),
        "workspace": Path(merged["workspace"]),
        "decompiler": make("decompiler", DecompilerSpec),
        "rules": make("rules", NameNormalization,
                      **({"suffix_patterns": tuple(merged["rules"]["suffix_patterns"])}
                         if "suffix_patterns" in merged.get("rules", {}) else {})),
        "policy": make("policy", MappingPolicy),
    }
    if "extractors" in merged:
        try:
            kwargs["extractors"] = tuple(
                ExtractorSpec(e["language"], tuple(e["file_patterns"]), e.get("kind", "c-scanner"))
                for e in merged["extractors"])
        except ValueError as exc:
            raise UsageError("extractor", str(exc)) from None
    for key in ("export_format", "workers", "strip_binaries", "strip_command"):
        if key in merged:
            kwargs[key] = merged[key]
    try:
        return PipelineConfig(**kwargs)
    except ValueError as exc:
        flag = "workers" if "workers" in str(exc) else "format"
        raise UsageError(flag, str(exc)) from None


__all__ = [
    "PipelineConfig", "load_config_file", "merge_layers", "build_config", "env_layer",
    "default_workers", "parse_decompiler_string", "EXPORT_FORMATS",
]
