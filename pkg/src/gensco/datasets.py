"""Loaders normalizing the evaluation datasets into MultiHopInstance values.

Source formats follow each dataset's published release: a JSON array with
title/sentence contexts and supporting-fact labels (2WikiMultiHop and the
adversarial HotpotQA subset; the synthetic fixtures mirror this shape),
and JSON lines with labeled paragraphs for MuSiQue.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .models import Dataset, MultiHopInstance, Passage, validate_instance


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class SizeTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    dataset: Dataset
    path: str
    limit: Optional[int] = None
    split_seed: Optional[int] = None


def _require(record: dict, field: str, where: str):
    if field not in record:
        raise SchemaError(f"{where}: missing field {field!r}")
    return record[field]


def _instance_from_wiki_record(
    record: dict, dataset: Dataset, where: str
) -> MultiHopInstance:
    context = _require(record, "context", where)
    supporting = record.get("supporting_facts")
    passages = []
    titles = []
    for pos, entry in enumerate(context):
        try:
            title, sentences = entry
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: malformed context entry {pos}") from exc
        body = "".join(sentences) if isinstance(sentences, list) else str(sentences)
        passages.append(Passage(index=pos, title=title, body=body))
        titles.append(title)
    supports: Optional[frozenset[int]] = None
    if supporting is not None:
        support_titles = {fact[0] for fact in supporting}
        supports = frozenset(
            i for i, title in enumerate(titles) if title in support_titles
        )
    return MultiHopInstance(
        id=str(_require(record, "_id", where)),
        question=_require(record, "question", where),
        gold_answer=_require(record, "answer", where),
        passages=tuple(passages),
        supporting_indices=supports,
        dataset=dataset,
    )


def _load_wiki_style(path: Path, dataset: Dataset) -> list[MultiHopInstance]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(data, list) or not data:
        raise ParseError(f"{path}: expected a non-empty JSON array of instances")
    return [
        validate_instance(_instance_from_wiki_record(rec, dataset, f"{path}[{i}]"))
        for i, rec in enumerate(data)
    ]


def _load_musique(path: Path) -> list[MultiHopInstance]:
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc.msg} at column {exc.colno}")
            where = f"{path}:{lineno}"
            instance_id = str(_require(record, "id", where))
            # Only the 2-hop slice of the dev set is evaluated.
            if not instance_id.startswith("2hop"):
                continue
            paragraphs = _require(record, "paragraphs", where)
            passages = []
            supports = set()
            for pos, para in enumerate(paragraphs):
                passages.append(
                    Passage(
                        index=pos,
                        title=para.get("title", ""),
                        body=_require(para, "paragraph_text", where),
                    )
                )
                if para.get("is_supporting"):
                    supports.add(pos)
            instances.append(
                validate_instance(
                    MultiHopInstance(
                        id=instance_id,
                        question=_require(record, "question", where),
                        gold_answer=_require(record, "answer", where),
                        passages=tuple(passages),
                        supporting_indices=frozenset(supports) if supports else None,
                        dataset=Dataset.MUSIQUE,
                    )
                )
            )
    if not instances:
        raise ParseError(f"{path}: no 2-hop instances found")
    return instances


def load(cfg: DatasetConfig) -> list[MultiHopInstance]:
    path = Path(cfg.path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    if cfg.dataset is Dataset.MUSIQUE:
        instances = _load_musique(path)
    else:
        instances = _load_wiki_style(path, cfg.dataset)
    if cfg.limit is not None:
        if cfg.limit > len(instances):
            raise SizeTooLarge(
                f"limit {cfg.limit} exceeds the {len(instances)} available instances"
            )
        instances = instances[: cfg.limit]
    return instances


def subsample(
    instances: Sequence[MultiHopInstance],
    sizes: Sequence[int],
    seed: int,
) -> list[list[MultiHopInstance]]:
    """Deterministic nested subsets: one seeded shuffle, prefixes per size."""
    for size in sizes:
        if size > len(instances):
            raise SizeTooLarge(
                f"subset size {size} exceeds the {len(instances)} available instances"
            )
    shuffled = list(instances)
    random.Random(seed).shuffle(shuffled)
    return [shuffled[:size] for size in sizes]
