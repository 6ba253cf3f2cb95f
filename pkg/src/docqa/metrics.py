"""Answer scoring: exact match, ANLS, relaxed accuracy, VQA accuracy.

Every per-example score is a float in [0, 1]; dataset_score aggregates a list
of them into the percentage reported for a benchmark. All string comparisons
share one normalization: lowercase, trim, collapse runs of whitespace.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

from .errors import DataError

# Per-example scores are plain floats in [0, 1].
Score = float

DEFAULT_ANLS_TAU = 0.5


class MetricKind(str, Enum):
    EXACT_MATCH = "exact_match"
    ANLS = "anls"
    RELAXED_ACCURACY = "relaxed_accuracy"
    VQA_ACCURACY = "vqa_accuracy"


def normalize(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace to single spaces."""
    return " ".join(text.split()).lower()


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit-cost insert, delete, and substitute.

    Operates on Unicode code points; no grapheme clustering is attempted.
    """
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, start=1):
        current = [i]
        for j, char_b in enumerate(b, start=1):
            substitution = previous[j - 1] + (0 if char_a == char_b else 1)
            current.append(min(previous[j] + 1, current[j - 1] + 1, substitution))
        previous = current
    return previous[-1]


def _require_golds(golds: Sequence[str]) -> None:
    if not golds:
        raise DataError("golds must be a non-empty list")


def anls_single(pred: str, golds: Sequence[str], tau: float = DEFAULT_ANLS_TAU) -> Score:
    """Normalized Levenshtein similarity against the closest gold.

    Per gold: 1 - distance / max(length), on normalized strings, with a pair
    of empty strings counting as a perfect match. The best similarity is kept
    if it reaches tau, otherwise the score is zero.
    """
    _require_golds(golds)
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau!r}")
    pred_n = normalize(pred)
    best = 0.0
    for gold in golds:
        gold_n = normalize(gold)
        if not pred_n and not gold_n:
            similarity = 1.0
        else:
            similarity = 1.0 - levenshtein(pred_n, gold_n) / max(len(pred_n), len(gold_n))
        best = max(best, similarity)
    return best if best >= tau else 0.0


def exact_match(pred: str, golds: Sequence[str]) -> Score:
    """1 if the normalized prediction equals any normalized gold."""
    _require_golds(golds)
    pred_n = normalize(pred)
    return 1.0 if any(pred_n == normalize(gold) for gold in golds) else 0.0


def _parse_number(text: str) -> float | None:
    """Read a decimal number, tolerating surrounding whitespace, a percent
    sign, thousands commas, and a sign. The percent sign is stripped as
    formatting, not rescaled. Returns None when the text is not numeric."""
    stripped = text.strip()
    if stripped.endswith("%"):
        stripped = stripped[:-1].strip()
    stripped = stripped.replace(",", "")
    if not stripped:
        return None
    try:
        value = float(stripped)
    except ValueError:
        return None
    if value != value or value in (float("inf"), float("-inf")):
        return None
    return value


def relaxed_accuracy(pred: str, golds: Sequence[str]) -> Score:
    """Exact match that tolerates 5% numeric error (boundary inclusive).

    When both the prediction and a gold parse as numbers they match if
    |p - g| <= 0.05 * |g|; a zero gold therefore admits only a zero
    prediction. Non-numeric pairs fall back to normalized exact match, and
    matching any one gold scores 1.
    """
    _require_golds(golds)
    pred_num = _parse_number(pred)
    for gold in golds:
        gold_num = _parse_number(gold)
        if pred_num is not None and gold_num is not None:
            if abs(pred_num - gold_num) <= 0.05 * abs(gold_num):
                return 1.0
        elif normalize(pred) == normalize(gold):
            return 1.0
    return 0.0


def vqa_accuracy(pred: str, golds: Sequence[str]) -> Score:
    """min(matching annotator answers / 3, 1) over the gold answer panel."""
    _require_golds(golds)
    pred_n = normalize(pred)
    matches = sum(1 for gold in golds if normalize(gold) == pred_n)
    return min(matches / 3.0, 1.0)


def score(
    kind: MetricKind,
    pred: str,
    golds: Sequence[str],
    *,
    anls_tau: float = DEFAULT_ANLS_TAU,
) -> Score:
    """Apply the scoring function a dataset config names."""
    kind = MetricKind(kind)
    if kind is MetricKind.EXACT_MATCH:
        return exact_match(pred, golds)
    if kind is MetricKind.ANLS:
        return anls_single(pred, golds, anls_tau)
    if kind is MetricKind.RELAXED_ACCURACY:
        return relaxed_accuracy(pred, golds)
    return vqa_accuracy(pred, golds)


def dataset_score(scores: Sequence[Score]) -> float:
    """Arithmetic mean of per-example scores, reported as a percentage."""
    if not scores:
        raise DataError("cannot aggregate an empty score list")
    return sum(scores) / len(scores) * 100.0
