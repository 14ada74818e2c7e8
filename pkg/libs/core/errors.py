from __future__ import annotations

from typing import Optional


class CxrValError(Exception):
    """Base error. `code` is the stable kebab-case kind written to diagnostics."""

    code = "error"

    def __init__(self, message: str, *, record: Optional[str] = None) -> None:
        super().__init__(message)
        self.message = message
        self.record = record

    def to_dict(self) -> dict:
        return {"code": self.code, "record": self.record, "error": self.message}


class MalformedFileError(CxrValError):
    code = "malformed-file"


class UnsupportedSyntaxError(CxrValError):
    code = "unsupported-syntax"


class MissingTagError(CxrValError):
    code = "missing-tag"

    def __init__(self, tag: str, keyword: str, *, record: Optional[str] = None) -> None:
        super().__init__(f"Missing required tag {tag} {keyword}", record=record)
        self.tag = tag
        self.keyword = keyword


class BadTimestampError(CxrValError):
    code = "bad-timestamp"


class ParseError(CxrValError):
    code = "parse-error"

    def __init__(
        self,
        message: str,
        *,
        record: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message, record=record)
        self.line = line
        self.column = column


class MissingAttributeError(CxrValError):
    code = "missing-attribute"

    def __init__(self, attribute: str, *, record: Optional[str] = None) -> None:
        super().__init__(f"Missing attribute '{attribute}'", record=record)
        self.attribute = attribute


class InconsistentSessionError(CxrValError):
    code = "inconsistent-session"


class CascadeError(CxrValError):
    code = "cascade-error"

    def __init__(self, stage: str, study_uid: str, cause: str) -> None:
        super().__init__(f"{stage} failed: {cause}", record=study_uid)
        self.stage = stage
        self.study_uid = study_uid


class ConfigError(CxrValError):
    code = "config-error"


class InputError(CxrValError):
    code = "input-error"


class StageError(CxrValError):
    code = "stage-error"

    def __init__(self, stage: str, message: str, *, record: Optional[str] = None) -> None:
        super().__init__(message, record=record)
        self.stage = stage
