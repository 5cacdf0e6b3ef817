"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class CodelinkError(Exception):
    """Base class; ``stage`` is filled in by the orchestrator when a fatal error escapes."""

    stage: str | None = None


# -- repository acquisition / build -------------------------------------------------


class SourceNotFound(CodelinkError):
    pass


class CloneFailed(CodelinkError):
    def __init__(self, message: str, stderr: str = "") -> None:
        super().__init__(message)
        self.stderr = stderr


class RefNotFound(CodelinkError):
    pass


class BuildFailed(CodelinkError):
    def __init__(self, message: str, report=None) -> None:
        super().__init__(message)
        self.report = report


class BuildTimeout(BuildFailed):
    pass


class StripFailed(CodelinkError):
    pass


class BinaryMissing(CodelinkError):
    def __init__(self, patterns: list[str]) -> None:
        super().__init__(", ".join(patterns))
        self.patterns = list(patterns)


# -- source extraction --------------------------------------------------------------


class ScanError(CodelinkError):
    """Raised by the C scanner; ``partial`` holds the functions found before ``offset``."""

    def __init__(self, message: str, offset: int, partial=None) -> None:
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset
        self.partial = list(partial or [])


class UnknownBuiltin(CodelinkError):
    pass


class ExternalCommandNotFound(CodelinkError):
    pass


class ExtractorFailed(CodelinkError):
    pass


class NoExtractorsRegistered(CodelinkError):
    pass


# -- binary analysis ----------------------------------------------------------------


class NotAnElf(CodelinkError):
    pass


class MalformedElf(CodelinkError):
    pass


class NoSymbols(CodelinkError):
    pass


class DecompilerFailed(CodelinkError):
    def __init__(self, message: str, stderr: str = "") -> None:
        super().__init__(message)
        self.stderr = stderr


class DecompilerTimeout(DecompilerFailed):
    pass


class ProtocolError(CodelinkError):
    def __init__(self, line: int, message: str, key: str | None = None) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.key = key


class AllBinariesFailed(CodelinkError):
    def __init__(self, errors: dict[str, str]) -> None:
        super().__init__("every binary failed: " + "; ".join(f"{k}: {v}" for k, v in errors.items()))
        self.errors = dict(errors)


# -- mapping / export ---------------------------------------------------------------


class DuplicateUid(CodelinkError):
    pass


class SchemaError(CodelinkError):
    def __init__(self, line: int, key: str, message: str = "") -> None:
        text = f"line {line}: {key}"
        if message:
            text += f": {message}"
        super().__init__(text)
        self.line = line
        self.key = key


# -- orchestration / config ---------------------------------------------------------


class CycleDetected(CodelinkError):
    def __init__(self, task_ids) -> None:
        self.task_ids = list(task_ids)
        super().__init__(f"dependency cycle among: {', '.join(self.task_ids)}")


class UsageError(CodelinkError):
    def __init__(self, flag: str, message: str = "") -> None:
        super().__init__(f"{flag}: {message}" if message else flag)
        self.flag = flag


class ConfigFileError(CodelinkError):
    def __init__(self, key: str, message: str = "", line: int | None = None) -> None:
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key}" + (f": {message}" if message else ""))
        self.key = key
        self.line = line


# filesystem failures surface as the builtin OSError
IoError = OSError
