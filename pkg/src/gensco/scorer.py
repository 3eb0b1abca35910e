"""Per-level candidate scoring: every passage is appended to the greedy
prefix, the scorer's mean NLL of the target text is read, and the best
candidate wins (argmin, ties to the lowest passage index)."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .llm import LlmGateway, ScorerRequest
from .models import Passage, ScoredCandidate
from .prompts import render_scoring_prompt

MIN_NLL = "min_nll"
MAX_NLL = "max_nll"


@dataclass(frozen=True)
class LevelSelection:
    level: int
    candidates: tuple[ScoredCandidate, ...]
    chosen: ScoredCandidate


def better_than(a: ScoredCandidate, b: ScoredCandidate) -> bool:
    """Strict total order: lower score wins, then lower passage index."""
    return (a.score, a.passage_index) < (b.score, b.passage_index)


def select_best(
    candidates: Sequence[ScoredCandidate], score_sign: str = MIN_NLL
) -> ScoredCandidate:
    if score_sign == MAX_NLL:
        return min(candidates, key=lambda c: (-c.score, c.passage_index))
    return min(candidates, key=lambda c: (c.score, c.passage_index))


def score_level(
    gateway: LlmGateway,
    prefix: Sequence[Passage],
    candidates: Sequence[Passage],
    target: str,
    level: int,
    concurrency: int = 1,
    score_sign: str = MIN_NLL,
) -> LevelSelection:
    """Score every candidate continuation of the greedy prefix.

    Issues exactly one scorer call per candidate; results are merged in
    passage-index order regardless of completion order, and any single
    failure aborts the whole level (no partial argmin).
    """
    if not candidates:
        raise ValueError("score_level needs at least one candidate")
    if not target.strip():
        raise ValueError("score_level target must be non-empty")
    ordered = sorted(candidates, key=lambda p: p.index)

    def score_one(passage: Passage) -> ScoredCandidate:
        prompt = render_scoring_prompt(list(prefix) + [passage])
        resp = gateway.score_continuation(
            ScorerRequest(prompt=prompt.text, continuation=" " + target),
            purpose="relevance",
        )
        if not math.isfinite(resp.mean_nll):
            raise ValueError(
                f"non-finite score {resp.mean_nll!r} for passage {passage.index}"
            )
        return ScoredCandidate(level=level, passage_index=passage.index, score=resp.mean_nll)

    if concurrency > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            scored = list(pool.map(score_one, ordered))
    else:
        scored = [score_one(p) for p in ordered]

    chosen = select_best(scored, score_sign)
    return LevelSelection(level=level, candidates=tuple(scored), chosen=chosen)
