"""Reading-order strategies over OCR documents.

Each strategy turns a Document into a permutation of its word indices:

- standard: pass the provided order through (the corpus flags whether its
  word order is already a human reading order).
- raster_scan: rebuild lines geometrically. Repeatedly take the uppermost,
  leftmost remaining word as the line seed, gather every remaining word whose
  vertical centroid distance to the seed is within line_threshold_factor
  times the seed box height, and emit the gathered line left to right.
- shuffled: a seeded Fisher-Yates pass, the control arm for order ablations.

All functions are pure over immutable inputs, so ordering a corpus is
embarrassingly parallel across documents.
"""

from __future__ import annotations

import bisect
import os
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import DataError
from .geometry import Document, Word
from .jsonl import read_stage_records, write_records


class OrderStrategy(str, Enum):
    STANDARD = "standard"
    RASTER_SCAN = "raster_scan"
    SHUFFLED = "shuffled"


@dataclass(frozen=True)
class RasterScanParams:
    """line_threshold_factor scales the seed box height into the vertical
    tolerance that decides line membership. The distance is vertical only;
    grouping is relative to the line's seed word, not the last word added."""

    line_threshold_factor: float = 0.5

    def __post_init__(self) -> None:
        factor = self.line_threshold_factor
        if not isinstance(factor, (int, float)) or isinstance(factor, bool) or factor <= 0:
            raise ValueError(f"line_threshold_factor must be positive, got {factor!r}")
        object.__setattr__(self, "line_threshold_factor", float(factor))


@dataclass(frozen=True)
class ReadingOrder:
    """A permutation of word indices plus the recipe that produced it.

    line_groups is only populated by raster_scan_order (the permutation split
    into its lines); it is carried for in-process use and not persisted.
    """

    doc_id: str
    permutation: tuple[int, ...]
    strategy: OrderStrategy
    params: Mapping[str, Any] = field(default_factory=dict)
    line_groups: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", OrderStrategy(self.strategy))
        object.__setattr__(self, "permutation", tuple(int(i) for i in self.permutation))
        object.__setattr__(self, "params", dict(self.params))
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError(
                f"permutation of doc {self.doc_id!r} is not a bijection on 0..N-1"
            )
        if self.line_groups is not None:
            groups = tuple(tuple(g) for g in self.line_groups)
            object.__setattr__(self, "line_groups", groups)
            flattened = tuple(i for group in groups for i in group)
            if flattened != self.permutation:
                raise ValueError("line_groups do not flatten to the permutation")

    def to_record(self) -> dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "strategy": self.strategy.value,
            "params": dict(self.params),
            "permutation": list(self.permutation),
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "ReadingOrder":
        try:
            return cls(
                doc_id=record["doc_id"],
                permutation=record["permutation"],
                strategy=record["strategy"],
                params=record.get("params", {}),
            )
        except KeyError as exc:
            raise ValueError(f"order record is missing {exc.args[0]!r}") from exc


def standard_order(doc: Document) -> ReadingOrder:
    """Identity permutation for documents whose provided order is a reading order."""
    if not doc.provided_order_is_reading_order:
        raise DataError(f"doc {doc.doc_id!r}: document carries no standard reading order")
    return ReadingOrder(
        doc_id=doc.doc_id,
        permutation=tuple(range(len(doc.words))),
        strategy=OrderStrategy.STANDARD,
    )


def _seed_key(word: Word) -> tuple[float, float, int]:
    # "Uppermost and leftmost" as a lexicographic key; the index breaks exact
    # centroid ties so the result never depends on set iteration order.
    return (word.box.centroid_y, word.box.centroid_x, word.index)


def raster_scan_order(doc: Document, params: RasterScanParams | None = None) -> ReadingOrder:
    """Geometric line rebuild; see the module docstring for the loop."""
    params = params or RasterScanParams()
    by_seed_priority = sorted(doc.words, key=_seed_key)
    taken: set[int] = set()
    groups: list[tuple[int, ...]] = []
    for seed in by_seed_priority:
        if seed.index in taken:
            continue
        tolerance = params.line_threshold_factor * seed.box.height
        line = [
            word
            for word in by_seed_priority
            if word.index not in taken
            and abs(word.box.centroid_y - seed.box.centroid_y) <= tolerance
        ]
        line.sort(key=lambda word: (word.box.centroid_x, word.index))
        taken.update(word.index for word in line)
        groups.append(tuple(word.index for word in line))
    return ReadingOrder(
        doc_id=doc.doc_id,
        permutation=tuple(i for group in groups for i in group),
        strategy=OrderStrategy.RASTER_SCAN,
        params={"line_threshold_factor": params.line_threshold_factor},
        line_groups=tuple(groups),
    )


def shuffled_order(doc: Document, seed: int) -> ReadingOrder:
    """Fisher-Yates shuffle driven by a Mersenne Twister seeded with `seed`.

    The loop is spelled out (rather than delegated to random.shuffle) so the
    permutation for a given seed is pinned by this module alone.
    """
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValueError(f"seed must be an unsigned integer, got {seed!r}")
    rng = random.Random(seed)
    permutation = list(range(len(doc.words)))
    for i in range(len(permutation) - 1, 0, -1):
        j = rng.randrange(i + 1)
        permutation[i], permutation[j] = permutation[j], permutation[i]
    return ReadingOrder(
        doc_id=doc.doc_id,
        permutation=tuple(permutation),
        strategy=OrderStrategy.SHUFFLED,
        params={"seed": seed},
    )


def order_distance(a: ReadingOrder, b: ReadingOrder) -> int:
    """Kendall-tau distance: how many word pairs the two orders disagree on."""
    if a.doc_id != b.doc_id:
        raise DataError(f"orders compare different docs: {a.doc_id!r} vs {b.doc_id!r}")
    if len(a.permutation) != len(b.permutation):
        raise DataError(
            f"doc {a.doc_id!r}: permutation lengths differ "
            f"({len(a.permutation)} vs {len(b.permutation)})"
        )
    position_in_a = {word: rank for rank, word in enumerate(a.permutation)}
    sequence = [position_in_a[word] for word in b.permutation]
    # Count inversions by insertion into a sorted prefix.
    seen: list[int] = []
    discordant = 0
    for value in sequence:
        slot = bisect.bisect_left(seen, value)
        discordant += len(seen) - slot
        bisect.insort(seen, value)
    return discordant


def save_orders(path: str | os.PathLike[str], orders: Iterable[ReadingOrder]) -> None:
    write_records(path, (o.to_record() for o in orders))


def load_orders(path: str | os.PathLike[str]) -> list[ReadingOrder]:
    """Read an orders file, skipping a provenance header if one is present."""
    orders: list[ReadingOrder] = []
    _, rows = read_stage_records(path)
    for line_no, record in rows:
        try:
            orders.append(ReadingOrder.from_record(record))
        except ValueError as exc:
            raise DataError(f"{path} line {line_no}: {exc}") from exc
    return orders
