"""Newline-delimited JSON helpers used by every file-facing module."""

from __future__ import annotations

import json
import os
from typing import Any, Iterable, Iterator

from .errors import DataError


def read_records(path: str | os.PathLike[str]) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, record) for each non-blank line of a JSONL file.

    Line numbers are 1-based so error messages match what editors show.
    """
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {line_no}: invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path} line {line_no}: expected a JSON object")
            yield line_no, record


def write_records(path: str | os.PathLike[str], records: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")


# Stage outputs carry a provenance header as their first line. Readers of
# stage files skip it; user-supplied inputs (corpus, QA) never have one.
HEADER_KEY = "config_digest"


def write_stage_file(
    path: str | os.PathLike[str],
    header: dict[str, Any],
    records: Iterable[dict[str, Any]],
) -> None:
    if HEADER_KEY not in header:
        raise ValueError(f"stage header must carry {HEADER_KEY!r}")

    def _rows() -> Iterator[dict[str, Any]]:
        yield header
        yield from records

    write_records(path, _rows())


def read_stage_records(
    path: str | os.PathLike[str],
) -> tuple[dict[str, Any] | None, list[tuple[int, dict[str, Any]]]]:
    """Split a JSONL file into (header or None, data rows with line numbers)."""
    header: dict[str, Any] | None = None
    rows: list[tuple[int, dict[str, Any]]] = []
    for line_no, record in read_records(path):
        if line_no == 1 and HEADER_KEY in record:
            header = record
            continue
        rows.append((line_no, record))
    return header, rows
