from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ValidationError

from libs.core.errors import InputError, StageError
from libs.core.models import SCHEMA_VERSION

ENV_PREFIX = "CXRVAL_"


def env(name: str) -> Optional[str]:
    v = os.getenv(ENV_PREFIX + name.upper())
    return v.strip() if isinstance(v, str) and v.strip() else None


def ensure_dir(p: Path) -> None:
    p.mkdir(parents=True, exist_ok=True)


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    ensure_dir(path.parent)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_jsonl(path: Path, lines: Iterable[str]) -> Path:
    ensure_dir(path.parent)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def record_line(obj: Dict[str, Any]) -> str:
    """One JSON-lines record with schema_version first."""
    return json.dumps({"schema_version": SCHEMA_VERSION, **obj}, ensure_ascii=False)


def require(path: Optional[Path], what: str, stage: str) -> Path:
    if path is None:
        raise StageError(stage, f"No {what} configured")
    if not path.exists():
        raise StageError(stage, f"{what} not found", record=str(path))
    return path


def read_text(path: Path, stage: str) -> str:
    require(path, "input artifact", stage)
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise StageError(stage, f"Cannot read artifact: {e}", record=str(path)) from e


def read_json(path: Path, stage: str) -> Dict[str, Any]:
    try:
        return json.loads(read_text(path, stage))
    except json.JSONDecodeError as e:
        raise StageError(stage, f"Malformed JSON artifact: {e.msg}", record=str(path)) from e


def _numbered_jsonl(path: Path, stage: str) -> List[Tuple[int, Dict[str, Any]]]:
    records: List[Tuple[int, Dict[str, Any]]] = []
    for number, line in enumerate(read_text(path, stage).splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path}:{number}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise StageError(stage, f"Malformed JSON line: {e.msg}", record=where) from e
        if not isinstance(obj, dict):
            raise StageError(stage, "JSON line must be an object", record=where)
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise StageError(
                stage, f"schema_version {version!r} != {SCHEMA_VERSION}", record=where
            )
        records.append((number, obj))
    return records


def read_jsonl(path: Path, stage: str) -> List[Dict[str, Any]]:
    """Parse a JSON-lines artifact and check each record's schema_version."""
    return [obj for _, obj in _numbered_jsonl(path, stage)]


M = TypeVar("M", bound=BaseModel)


def read_models(path: Path, stage: str, model: Type[M]) -> List[M]:
    """JSON-lines records validated against `model`; a bad record is named by file and line."""
    items: List[M] = []
    for number, obj in _numbered_jsonl(path, stage):
        fields = {k: v for k, v in obj.items() if k != "schema_version"}
        try:
            items.append(model.model_validate(fields))
        except ValidationError as e:
            raise InputError(
                f"Invalid {model.__name__} record: {e.errors()[0]['msg']}",
                record=f"{path}:{number}",
            ) from e
    return items
