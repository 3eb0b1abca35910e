"""Answer correctness, faithfulness and retrieval metrics plus run-level
aggregation."""

from __future__ import annotations

import re
import statistics
import string
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence


class DegenerateVariance(ValueError):
    pass


class MissingSupports(ValueError):
    pass


@dataclass(frozen=True)
class AnswerMetrics:
    em: int
    f1: float
    precision: float
    recall: float


@dataclass(frozen=True)
class RetrievalMetrics:
    precision: float
    recall: float
    f1: float
    delta_hops: int


@dataclass(frozen=True)
class InstanceEval:
    instance_id: str
    answer: AnswerMetrics
    k_precision: float
    retrieval: Optional[RetrievalMetrics] = None
    supporting_count: Optional[int] = None


@dataclass(frozen=True)
class EvalReport:
    count: int
    means: dict[str, float]  # raw fractions
    percents: dict[str, float]  # means scaled by 100, the tables' convention
    delta_hops_hist: dict[int, dict[int, int]]  # supporting count -> delta -> n


_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """SQuAD-style normalization: lower-case, strip punctuation, drop
    the articles a/an/the, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def answer_metrics(predicted: str, gold: str) -> AnswerMetrics:
    """Token-level multiset overlap of the normalized strings."""
    norm_pred = normalize_answer(predicted)
    norm_gold = normalize_answer(gold)
    em = int(norm_pred == norm_gold)
    pred_tokens = norm_pred.split()
    gold_tokens = norm_gold.split()
    if not pred_tokens or not gold_tokens:
        score = float(pred_tokens == gold_tokens)
        return AnswerMetrics(em=em, f1=score, precision=score, recall=score)
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    f1 = (
        0.0
        if precision + recall == 0
        else 2 * precision * recall / (precision + recall)
    )
    return AnswerMetrics(em=em, f1=f1, precision=precision, recall=recall)


def k_precision(predicted: str, passages: Sequence[str]) -> float:
    """Fraction of distinct predicted tokens grounded in the passages.

    Type-level membership: each predicted token type counts once; an
    empty prediction scores 0 by convention.
    """
    pred_tokens = set(normalize_answer(predicted).split())
    if not pred_tokens:
        return 0.0
    passage_tokens = set(normalize_answer(" ".join(passages)).split())
    grounded = sum(1 for tok in pred_tokens if tok in passage_tokens)
    return grounded / len(pred_tokens)


def retrieval_metrics(
    selected_sequence: Sequence[int],
    supporting_indices: Optional[set[int]],
) -> RetrievalMetrics:
    """Set precision/recall/F1 over deduplicated selected indices."""
    if supporting_indices is None:
        raise MissingSupports("instance has no supporting-passage labels")
    selected = set(selected_sequence)
    supports = set(supporting_indices)
    hits = len(selected & supports)
    precision = hits / len(selected) if selected else 0.0
    recall = hits / len(supports) if supports else 0.0
    f1 = (
        0.0
        if precision + recall == 0
        else 2 * precision * recall / (precision + recall)
    )
    return RetrievalMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        delta_hops=len(supports) - len(selected),
    )


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("pearson needs two equal-length vectors of size >= 2")
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise DegenerateVariance("pearson is undefined for a constant vector")
    return statistics.correlation(xs, ys)


def aggregate(records: Sequence[InstanceEval]) -> EvalReport:
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    n = len(records)
    means = {
        "em": sum(r.answer.em for r in records) / n,
        "f1": sum(r.answer.f1 for r in records) / n,
        "precision": sum(r.answer.precision for r in records) / n,
        "recall": sum(r.answer.recall for r in records) / n,
        "k_precision": sum(r.k_precision for r in records) / n,
    }
    with_retrieval = [r for r in records if r.retrieval is not None]
    if with_retrieval:
        m = len(with_retrieval)
        means["retrieval_precision"] = (
            sum(r.retrieval.precision for r in with_retrieval) / m
        )
        means["retrieval_recall"] = sum(r.retrieval.recall for r in with_retrieval) / m
        means["retrieval_f1"] = sum(r.retrieval.f1 for r in with_retrieval) / m

    hist: dict[int, dict[int, int]] = {}
    for r in with_retrieval:
        bucket = hist.setdefault(r.supporting_count or 0, {})
        bucket[r.retrieval.delta_hops] = bucket.get(r.retrieval.delta_hops, 0) + 1

    return EvalReport(
        count=n,
        means=means,
        percents={k: v * 100.0 for k, v in means.items()},
        delta_hops_hist=hist,
    )
