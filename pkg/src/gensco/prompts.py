"""Bit-stable rendering of the four prompt families.

Templates and shot banks are plain fixture files shipped with the
package; rendering is pure string assembly so equal inputs always yield
byte-identical prompts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from .models import Dataset, Passage

FIN_KEYWORD = "<FIN></FIN>"

_SHOT_FILES = {
    Dataset.TWO_WIKI: "2wikimultihop.json",
    Dataset.ADV_HOTPOT: "advhotpot.json",
    Dataset.MUSIQUE: "musique.json",
    Dataset.SYNTHETIC: "synthetic.json",
}


class PromptError(ValueError):
    """Template preconditions violated (empty passage list, misaligned history)."""


@dataclass(frozen=True)
class ShotExample:
    question: str
    context: str
    answer: str


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    template_id: str  # "answering" | "decomposition" | "stop_criterion" | "passage_scoring"
    slot_digest: str


def _template(name: str) -> str:
    return resources.files("gensco.templates").joinpath(name).read_text(encoding="utf-8")


def _slot_digest(*slots: object) -> str:
    blob = json.dumps(slots, ensure_ascii=False, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_shots(dataset: Dataset) -> tuple[ShotExample, ...]:
    raw = resources.files("gensco.shots").joinpath(_SHOT_FILES[dataset]).read_text(
        encoding="utf-8"
    )
    return tuple(ShotExample(**d) for d in json.loads(raw))


def load_shots_file(path) -> tuple[ShotExample, ...]:
    with open(path, encoding="utf-8") as fh:
        return tuple(ShotExample(**d) for d in json.load(fh))


def concat_passages(passages: Sequence[Passage]) -> str:
    """Join passages into flowing prose: "title: body" pieces, single space."""
    parts = []
    for p in passages:
        parts.append(f"{p.title}: {p.body}" if p.title else p.body)
    return " ".join(parts)


def render_answer_prompt(
    question: str,
    passages: Sequence[Passage],
    shots: Sequence[ShotExample] = (),
) -> RenderedPrompt:
    instruction = _template("answer_instruction.txt").rstrip("\n")
    lines = []
    if shots:
        lines.append(instruction + " Here are a few examples:")
        for shot in shots:
            lines.append(f"Question: {shot.question}")
            lines.append(f"Context: {shot.context}")
            lines.append(f"Answer: {shot.answer}")
            lines.append("")
    else:
        lines.append(instruction)
        lines.append("")
    lines.append(f"Question: {question}")
    lines.append(f"Context: {concat_passages(passages)}")
    lines.append("Answer:")
    text = "\n".join(lines)
    return RenderedPrompt(
        text=text,
        template_id="answering",
        slot_digest=_slot_digest(
            question,
            [p.to_dict() for p in passages],
            [(s.question, s.context, s.answer) for s in shots],
        ),
    )


def render_decomposition_prompt(
    question: str,
    history: Sequence[tuple[str, Passage]],
) -> RenderedPrompt:
    """Prompt asking for sub-question number ``len(history) + 1``.

    ``history`` pairs each earlier sub-question with the passage selected
    for it; the pair being requested has no passage yet by construction.
    """
    for subq, passage in history:
        if not subq.strip():
            raise PromptError("history contains a blank sub-question")
        if passage is None:
            raise PromptError("history sub-question has no selected passage")
    header = _template("decomposition_header.txt").rstrip("\n")
    lines = [header, ""]
    lines.append(f"Question: {question}")
    for i, (subq, passage) in enumerate(history, start=1):
        lines.append(f"Subquestion {i}: {subq}")
        lines.append(f"Subcontext {i}: {concat_passages([passage])}")
    lines.append(f"Subquestion {len(history) + 1}:")
    text = "\n".join(lines)
    return RenderedPrompt(
        text=text,
        template_id="decomposition",
        slot_digest=_slot_digest(
            question, [(sq, p.to_dict()) for sq, p in history]
        ),
    )


def render_stop_prompt(
    passages: Sequence[Passage],
    subquestions: Sequence[str],
) -> RenderedPrompt:
    """Zero-shot prompt whose continuation likelihood drives the stopping test."""
    if not passages or not subquestions:
        raise PromptError("stopping criterion needs at least one passage and sub-question")
    instruction = _template("stop_instruction.txt").rstrip("\n")
    text = "\n".join(
        [
            instruction,
            f"Context: {concat_passages(passages)}",
            f"Decomposition: {' '.join(subquestions)}",
            "Question:",
        ]
    )
    return RenderedPrompt(
        text=text,
        template_id="stop_criterion",
        slot_digest=_slot_digest([p.to_dict() for p in passages], list(subquestions)),
    )


def render_scoring_prompt(passages: Sequence[Passage]) -> RenderedPrompt:
    """Zero-shot question-generation prompt; only the continuation likelihood
    of the supplied sub-question is read back, the generated text is ignored."""
    if not passages:
        raise PromptError("scoring prompt needs at least one passage")
    instruction = _template("scoring_instruction.txt").rstrip("\n")
    text = "\n".join(
        [
            instruction,
            f"Context: {concat_passages(passages)}",
            "Question:",
        ]
    )
    return RenderedPrompt(
        text=text,
        template_id="passage_scoring",
        slot_digest=_slot_digest([p.to_dict() for p in passages]),
    )
