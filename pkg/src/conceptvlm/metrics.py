"""Evaluation metrics: balanced recognition recall, BLEU, captioning recall,
reply parsing, and sample-count-weighted aggregation."""

import math
from collections import Counter

from .errors import UndefinedMetricError


def parse_yes_no(reply: str) -> str | None:
    """Map a model reply to Yes/No by case-insensitive prefix match."""
    text = reply.strip().lower()
    if text.startswith("yes"):
        return "Yes"
    if text.startswith("no"):
        return "No"
    return None


def parse_choice_letter(reply: str) -> int | None:
    """Map a model reply to option index 0 (A) or 1 (B)."""
    text = reply.strip().lower()
    if text.startswith("a"):
        return 0
    if text.startswith("b"):
        return 1
    return None


def balanced_recall(expected: list[str], predicted: list[str | None]) -> float:
    """Arithmetic mean of the yes-recall and the no-recall.

    `expected` entries are "Yes"/"No"; predictions that parse to neither count
    as wrong.
    """
    positives = sum(1 for e in expected if e == "Yes")
    negatives = sum(1 for e in expected if e == "No")
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError("balanced recall needs both positives and negatives")
    tp = sum(1 for e, p in zip(expected, predicted) if e == "Yes" and p == "Yes")
    tn = sum(1 for e, p in zip(expected, predicted) if e == "No" and p == "No")
    return 0.5 * (tp / positives) + 0.5 * (tn / negatives)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str, max_order: int = 4) -> float:
    """BLEU with clipped n-gram precisions up to order 4, add-one smoothing on
    orders >= 2, geometric mean, and brevity penalty. Whitespace tokenization,
    lowercase. Empty candidates score 0."""
    if not reference.split():
        raise UndefinedMetricError("BLEU reference must be non-empty")
    cand = candidate.lower().split()
    ref = reference.lower().split()
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        cgrams = _ngrams(cand, n)
        rgrams = _ngrams(ref, n)
        matches = sum(min(count, rgrams[g]) for g, count in cgrams.items())
        total = max(0, len(cand) - n + 1)
        if n == 1:
            if matches == 0:
                return 0.0
            p = matches / total
        else:
            p = (matches + 1) / (total + 1)
        log_sum += math.log(p)
    brevity = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return brevity * math.exp(log_sum / max_order)


def captioning_recall(captions: list[str], required: list[list[str]]) -> float:
    """Micro recall of required identifier occurrences across all captions."""
    if len(captions) != len(required):
        raise UndefinedMetricError("captions and requirement lists differ in length")
    found = 0
    needed = 0
    for caption, idents in zip(captions, required):
        for ident in idents:
            needed += 1
            if ident in caption:
                found += 1
    if needed == 0:
        return 0.0
    return found / needed


def weighted_score(single: float | None, multi: float | None,
                   n_single: int, n_multi: int) -> float | None:
    """Sample-count-weighted aggregate of the single- and multi-concept scores."""
    if n_single and n_multi:
        return (n_single * single + n_multi * multi) / (n_single + n_multi)
    if n_single:
        return single
    if n_multi:
        return multi
    return None


def accuracy(correct: int, total: int) -> float:
    if total == 0:
        raise UndefinedMetricError("accuracy over zero items is undefined")
    return correct / total
