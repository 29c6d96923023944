"""Line-delimited JSON persistence with provenance headers.

Every artifact file starts with a single header record carrying the schema
name and a content hash of the run configuration, so downstream stages can
verify provenance and outputs stay byte-reproducible.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable

from .errors import SchemaError, StageDependencyError


def canonical_dumps(obj: Any) -> str:
    """Serialize deterministically: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(obj: Any) -> str:
    """16-hex-char content hash of a JSON-serializable configuration."""
    return hashlib.sha256(canonical_dumps(obj).encode("utf-8")).hexdigest()[:16]


def stable_hash64(text: str) -> str:
    """Lowercase hex of a stable 64-bit hash (process-independent)."""
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


def derive_seed(*parts: object) -> int:
    """Stable sub-seed from arbitrary parts, for independent RNG streams."""
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(joined.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def write_jsonl(path: str | Path, schema: str, cfg_hash: str, rows: Iterable[dict]) -> int:
    """Write header + rows; returns the number of data rows written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        fh.write(canonical_dumps({"schema": schema, "config_hash": cfg_hash}) + "\n")
        for row in rows:
            fh.write(canonical_dumps(row) + "\n")
            count += 1
    return count


def read_jsonl(path: str | Path, expect_schema: str | None = None) -> tuple[dict, list[dict]]:
    """Read (header, rows) from a JSONL artifact.

    Raises StageDependencyError when the file is missing and SchemaError when
    the header is absent or declares an unexpected schema.
    """
    path = Path(path)
    if not path.exists():
        raise StageDependencyError(f"missing artifact: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file, expected a header record")
    header = json.loads(lines[0])
    if not isinstance(header, dict) or "schema" not in header:
        raise SchemaError(f"{path}: first line is not a header record")
    if expect_schema is not None and header["schema"] != expect_schema:
        raise SchemaError(
            f"{path}: schema {header['schema']!r}, expected {expect_schema!r}"
        )
    return header, [json.loads(line) for line in lines[1:]]


def write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
