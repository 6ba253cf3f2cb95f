"""Context strings, the prompt template, and token budgets.

A context is the document's word texts joined by single spaces in reading
order. The prompt wraps it in the fixed template

    Context: <context> Question: <question> Answer:

and stays byte-identical for identical inputs. Token budgets are enforced by
keeping the longest prefix of whole words that fits; a word is never split.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

from .errors import DataError
from .geometry import Document
from .jsonl import read_stage_records, write_records
from .ordering import OrderStrategy, ReadingOrder


class TokenizerKind(str, Enum):
    WHITESPACE = "whitespace"
    EXTERNAL = "external"


@dataclass(frozen=True)
class TokenizerSpec:
    """Counting rule for budget enforcement.

    The whitespace kind counts whitespace-separated pieces and is the default
    everywhere; real deployments pass their model's tokenizer as a counting
    function via external(). External counters are assumed monotone in the
    text prefix, which is how budget search stays logarithmic.
    """

    kind: TokenizerKind = TokenizerKind.WHITESPACE
    count_fn: Callable[[str], int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TokenizerKind(self.kind))
        if self.kind is TokenizerKind.EXTERNAL and self.count_fn is None:
            raise ValueError("external tokenizer needs a counting function")

    @classmethod
    def external(cls, count_fn: Callable[[str], int]) -> "TokenizerSpec":
        return cls(kind=TokenizerKind.EXTERNAL, count_fn=count_fn)

    def count(self, text: str) -> int:
        if self.kind is TokenizerKind.WHITESPACE:
            return len(text.split())
        return int(self.count_fn(text))


WHITESPACE = TokenizerSpec()


@dataclass(frozen=True)
class SerializedContext:
    """The context string C for one document.

    pieces holds the word texts in serialization order so truncation can
    respect word boundaries even when a word carries an internal space; for
    contexts loaded back from disk it is rebuilt by splitting on single
    spaces. warnings records budget anomalies (in-process only).
    """

    doc_id: str
    text: str
    order_strategy: OrderStrategy | None
    token_count: int
    pieces: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.order_strategy is not None:
            object.__setattr__(self, "order_strategy", OrderStrategy(self.order_strategy))
        if not isinstance(self.token_count, int) or self.token_count < 0:
            raise ValueError(f"token_count must be a non-negative integer, got {self.token_count!r}")
        if not self.pieces and self.text:
            object.__setattr__(self, "pieces", tuple(self.text.split(" ")))
        else:
            object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if self.pieces:
            expected_len = sum(len(p) for p in self.pieces) + len(self.pieces) - 1
            if expected_len != len(self.text):
                raise ValueError(
                    f"doc {self.doc_id!r}: pieces do not tile the context text"
                )


def build_context(
    doc: Document,
    order: ReadingOrder,
    tokenizer: TokenizerSpec = WHITESPACE,
    *,
    group_separator: str = " ",
) -> SerializedContext:
    """Join word texts in permutation order with single spaces.

    group_separator applies only when the order carries raster line groups;
    passing "\\n" joins lines with newlines instead of spaces (words within a
    line always keep single spaces). This variant is for experimentation and
    is not what the contexts file format round-trips.
    """
    if order.doc_id != doc.doc_id:
        raise DataError(f"order doc_id {order.doc_id!r} does not match doc {doc.doc_id!r}")
    if len(order.permutation) != len(doc.words):
        raise DataError(
            f"doc {doc.doc_id!r}: order covers {len(order.permutation)} words, "
            f"document has {len(doc.words)}"
        )
    pieces = tuple(doc.words[i].text for i in order.permutation)
    if order.line_groups is not None and group_separator != " ":
        lines = (
            " ".join(doc.words[i].text for i in group) for group in order.line_groups
        )
        text = group_separator.join(lines)
    else:
        text = " ".join(pieces)
    return SerializedContext(
        doc_id=doc.doc_id,
        text=text,
        order_strategy=order.strategy,
        token_count=tokenizer.count(text),
        pieces=pieces,
    )


def _prefix_text(ctx: SerializedContext, piece_count: int) -> str:
    if piece_count == 0:
        return ""
    end = sum(len(p) for p in ctx.pieces[:piece_count]) + piece_count - 1
    return ctx.text[:end]


def truncate_context(
    ctx: SerializedContext, budget: int, tokenizer: TokenizerSpec = WHITESPACE
) -> SerializedContext:
    """Longest prefix of whole words whose token count fits the budget.

    Idempotent; an already-fitting context is returned unchanged. When even
    the first word exceeds the budget the context collapses to empty and a
    warning is recorded on the result.
    """
    if not isinstance(budget, int) or isinstance(budget, bool) or budget < 1:
        raise ValueError(f"budget must be a positive integer, got {budget!r}")
    total = tokenizer.count(ctx.text)
    if total <= budget:
        return ctx if ctx.token_count == total else dataclasses.replace(ctx, token_count=total)
    if tokenizer.kind is TokenizerKind.WHITESPACE:
        # Whitespace counts are additive over pieces, so accumulate directly.
        kept = 0
        running = 0
        for piece in ctx.pieces:
            running += tokenizer.count(piece)
            if running > budget:
                break
            kept += 1
    else:
        low, high = 0, len(ctx.pieces)
        while low < high:
            mid = (low + high + 1) // 2
            if tokenizer.count(_prefix_text(ctx, mid)) <= budget:
                low = mid
            else:
                high = mid - 1
        kept = low
    text = _prefix_text(ctx, kept)
    warnings = ctx.warnings
    if kept == 0 and ctx.pieces:
        warnings = warnings + (
            f"doc {ctx.doc_id}: first word alone exceeds the token budget {budget}; "
            "context emptied",
        )
    return dataclasses.replace(
        ctx,
        text=text,
        token_count=tokenizer.count(text),
        pieces=ctx.pieces[:kept],
        warnings=warnings,
    )


_CONTEXT_PREFIX = "Context: "
_QUESTION_SEP = " Question: "
_ANSWER_SUFFIX = " Answer:"


@dataclass(frozen=True)
class Prompt:
    """The exact string sent to the model, plus its parts."""

    text: str
    question: str
    context: SerializedContext

    def __post_init__(self) -> None:
        expected = f"{_CONTEXT_PREFIX}{self.context.text}{_QUESTION_SEP}{self.question}{_ANSWER_SUFFIX}"
        if self.text != expected:
            raise ValueError("prompt text deviates from the template")


def build_prompt(ctx: SerializedContext, question: str) -> Prompt:
    """Apply the template; an empty context leaves a double space, by design."""
    if not question:
        raise DataError(f"doc {ctx.doc_id!r}: question must be non-empty")
    text = f"{_CONTEXT_PREFIX}{ctx.text}{_QUESTION_SEP}{question}{_ANSWER_SUFFIX}"
    return Prompt(text=text, question=question, context=ctx)


def parse_prompt(text: str) -> tuple[str, str]:
    """Recover (context, question) from a templated prompt.

    Splits on the last occurrence of the question marker, so a question that
    itself contains the marker cannot be recovered.
    """
    if not text.startswith(_CONTEXT_PREFIX) or not text.endswith(_ANSWER_SUFFIX):
        raise DataError("text does not follow the prompt template")
    inner = text[len(_CONTEXT_PREFIX) : -len(_ANSWER_SUFFIX)]
    marker = inner.rfind(_QUESTION_SEP)
    if marker < 0:
        raise DataError("text does not follow the prompt template")
    return inner[:marker], inner[marker + len(_QUESTION_SEP) :]


def context_to_record(ctx: SerializedContext) -> dict[str, Any]:
    return {"doc_id": ctx.doc_id, "context": ctx.text, "token_count": ctx.token_count}


def context_from_record(record: dict[str, Any]) -> SerializedContext:
    try:
        doc_id = record["doc_id"]
        text = record["context"]
        token_count = record["token_count"]
    except KeyError as exc:
        raise ValueError(f"context record is missing {exc.args[0]!r}") from exc
    return SerializedContext(
        doc_id=doc_id, text=text, order_strategy=None, token_count=token_count
    )


def save_contexts(path: str | os.PathLike[str], contexts: Iterable[SerializedContext]) -> None:
    write_records(path, (context_to_record(c) for c in contexts))


def load_contexts(path: str | os.PathLike[str]) -> list[SerializedContext]:
    """Read a contexts file, skipping a provenance header if one is present."""
    contexts: list[SerializedContext] = []
    _, rows = read_stage_records(path)
    for line_no, record in rows:
        try:
            contexts.append(context_from_record(record))
        except ValueError as exc:
            raise DataError(f"{path} line {line_no}: {exc}") from exc
    return contexts
