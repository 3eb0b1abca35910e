"""Builds scripted-backend entries for a planned run of one instance.

The builder walks the same prompt construction as the live loop, so any
drift between the two surfaces immediately as a ScriptMiss in tests and
scripted batch runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .decomposition import normalize_subquestion
from .llm import GeneratorRequest, ScorerRequest, ScriptedBackend
from .models import MultiHopInstance, Passage, Variant
from .pipeline import PipelineConfig, _shuffle_seed_for
from .prompts import (
    FIN_KEYWORD,
    ShotExample,
    render_answer_prompt,
    render_decomposition_prompt,
    render_scoring_prompt,
    render_stop_prompt,
)
from .scorer import MAX_NLL
from .baselines import shuffle_sequence


@dataclass
class ScriptedPlan:
    """What the backends should say for one instance.

    subquestions: completion per level, in order (use FIN_KEYWORD to end
    the decomposition).
    level_scores: mean NLL per passage index for each level that reaches
    passage selection.
    stop_nlls: for the likelihood-stop variant, (without, with-candidate)
    mean NLLs keyed by level.
    """

    subquestions: list[str]
    level_scores: list[dict[int, float]]
    answer: str
    stop_nlls: dict[int, tuple[float, float]] = field(default_factory=dict)


def _register_score(
    backend: ScriptedBackend, prompt_text: str, target: str, mean_nll: float
) -> None:
    backend.add_logprobs(
        ScorerRequest(prompt=prompt_text, continuation=" " + target), [-mean_nll]
    )


def build_instance_script(
    backend: ScriptedBackend,
    inst: MultiHopInstance,
    cfg: PipelineConfig,
    plan: ScriptedPlan,
    shot_bank: Sequence[ShotExample] = (),
) -> None:
    """Register every prompt the pipeline will issue for this instance."""
    history: list[tuple[str, Passage]] = []
    seen: set[str] = set()
    selected: list[Passage] = []
    score_cursor = 0

    for level in range(1, cfg.max_levels + 1):
        if cfg.variant is Variant.NO_QD:
            target = inst.question
        else:
            if level - 1 >= len(plan.subquestions):
                raise ValueError(f"plan has no sub-question for level {level}")
            completion = plan.subquestions[level - 1]
            prompt = render_decomposition_prompt(inst.question, history)
            backend.add_completion(
                GeneratorRequest(
                    prompt=prompt.text,
                    temperature=cfg.temperature,
                    max_output_tokens=cfg.max_subquestion_tokens,
                    stop_sequences=("\n",),
                ),
                completion,
            )
            target = completion.split("\n", 1)[0].strip()
            if FIN_KEYWORD in target or not target:
                break
            if normalize_subquestion(target) in seen:
                break
            if cfg.variant is Variant.STOP and level >= 2 and selected:
                if level not in plan.stop_nlls:
                    raise ValueError(f"plan has no stop NLL pair for level {level}")
                without, with_candidate = plan.stop_nlls[level]
                prior = [sq for sq, _ in history]
                _register_score(
                    backend,
                    render_stop_prompt(selected, prior).text,
                    inst.question,
                    without,
                )
                _register_score(
                    backend,
                    render_stop_prompt(selected, prior + [target]).text,
                    inst.question,
                    with_candidate,
                )
                if with_candidate > without:
                    break

        if score_cursor >= len(plan.level_scores):
            raise ValueError(f"plan has no score table for level {level}")
        scores = plan.level_scores[score_cursor]
        score_cursor += 1

        pool = list(inst.passages)
        if cfg.dedupe_pool:
            chosen_indices = {p.index for p in selected}
            pool = [p for p in pool if p.index not in chosen_indices]
            if not pool:
                break
        for p in sorted(pool, key=lambda p: p.index):
            if p.index not in scores:
                raise ValueError(f"plan level {level} missing score for passage {p.index}")
            _register_score(
                backend,
                render_scoring_prompt(selected + [p]).text,
                target,
                scores[p.index],
            )
        sign = -1.0 if cfg.score_sign == MAX_NLL else 1.0
        chosen = min(pool, key=lambda p: (sign * scores[p.index], p.index))
        if cfg.variant is Variant.NO_QD and any(
            p.index == chosen.index for p in selected
        ):
            break
        selected.append(chosen)
        history.append((target, chosen))
        seen.add(normalize_subquestion(target))

    context_order = tuple(p.index for p in selected)
    if cfg.shuffle and len(context_order) >= 2:
        context_order, _ = shuffle_sequence(
            context_order, _shuffle_seed_for(inst.id, cfg.shuffle_seed)
        )
    context_passages = [inst.passage_by_index(i) for i in context_order]
    answer_prompt = render_answer_prompt(
        inst.question, context_passages, tuple(shot_bank)[: cfg.shots]
    )
    backend.add_completion(
        GeneratorRequest(
            prompt=answer_prompt.text,
            temperature=cfg.temperature,
            max_output_tokens=cfg.max_answer_tokens,
            stop_sequences=("\n",),
        ),
        plan.answer,
    )
