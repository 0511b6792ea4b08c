"""Published JSON schema files (golden copies of every wire shape)."""

from __future__ import annotations

import json
from pathlib import Path

SCHEMA_DIR = Path(__file__).parent


def load_schema(name: str) -> dict:
    """Load one of the published schema files by stem ("sample",
    "backend", "review_api")."""
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())
