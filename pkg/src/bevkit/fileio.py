"""Canonical JSON persistence for the document models.

Serialization is deterministic (fixed field order, repr floats), so
write -> read -> write round trips byte-identically and identical runs
produce identical files. Parse failures carry the path and, for syntax
errors, the line and column.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import TypeVar

from pydantic import BaseModel, ValidationError

M = TypeVar("M", bound=BaseModel)


class FileFormatError(ValueError):
    """A file that could not be parsed or validated."""

    def __init__(self, path, message: str, line: int | None = None, col: int | None = None):
        loc = f"{path}:{line}:{col}" if line is not None else str(path)
        super().__init__(f"{loc}: {message}")
        self.path = str(path)
        self.line = line
        self.col = col


def dump_document(doc: BaseModel) -> str:
    return json.dumps(doc.model_dump(mode="json"), indent=2) + "\n"


def parse_document(text: str, model: type[M], source: str = "<string>") -> M:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise FileFormatError(source, e.msg, e.lineno, e.colno) from e
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        at = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise FileFormatError(source, f"invalid {model.__name__}: {at}: {first['msg']}") from e


def load_document(path, model: type[M]) -> M:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise FileFormatError(p, f"cannot read file: {e.strerror or e}") from e
    return parse_document(text, model, source=str(p))


def save_document(path, doc: BaseModel) -> None:
    Path(path).write_text(dump_document(doc))
