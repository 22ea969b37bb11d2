"""Small shared plumbing: schema tag and deterministic serialization helpers."""

from __future__ import annotations

import json
from pathlib import Path

SCHEMA_VERSION = 1


def fmt(value: object) -> str:
    """Render a cell for CSV output: full-precision repr for floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_json(path: str | Path, payload: dict) -> None:
    """Write a JSON document deterministically (sorted keys, no timestamps)."""
    text = json.dumps(payload, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")
