"""Batch front end: run pipelines and baselines over a dataset, evaluate
finished runs offline, and emit plot-ready tables.

Run directory layout: manifest.json, instances.jsonl, traces.jsonl,
answers.jsonl, failures.jsonl (when instances failed), report.json and
report.csv after evaluation. Exit codes: 0 ok, 1 instance failures,
2 fatal.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional

import click
import yaml

from . import baselines, datasets, metrics
from .llm import HttpBackend, LlmGateway, ScriptedBackend
from .models import (
    AnswerRecord,
    Dataset,
    GeneratorParams,
    MultiHopInstance,
    Variant,
    append_jsonl,
    read_jsonl,
)
from .llm import GeneratorRequest
from .pipeline import DEFAULT_MAX_LEVELS, DEFAULT_SHOTS, PipelineConfig, run_instance
from .prompts import load_shots, load_shots_file, render_answer_prompt

BASELINE_METHODS = ("bm25", "precomputed")


class ConfigError(ValueError):
    pass


class CorruptTrace(ValueError):
    pass


def load_config(path, overrides: dict[str, Any]) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    for required in ("dataset", "dataset_path", "variant"):
        if required not in cfg:
            raise ConfigError(f"missing config field {required!r}")
    return cfg


def _build_gateway(cfg: dict[str, Any]) -> LlmGateway:
    backend_kind = cfg.get("backend", "http")
    if backend_kind == "scripted":
        script_file = cfg.get("script_file")
        if not script_file:
            raise ConfigError("scripted backend requires script_file")
        backend = ScriptedBackend.from_file(script_file)
        generator = scorer = backend
    elif backend_kind == "http":
        for field in ("generator_url", "generator_model", "scorer_url", "scorer_model"):
            if not cfg.get(field):
                raise ConfigError(f"http backend requires {field!r}")
        generator = HttpBackend(cfg["generator_url"], cfg["generator_model"])
        scorer = HttpBackend(cfg["scorer_url"], cfg["scorer_model"])
    else:
        raise ConfigError(f"unknown backend kind {backend_kind!r}")
    return LlmGateway(
        generator,
        scorer,
        cache_dir=cfg.get("cache_dir"),
        max_in_flight=int(cfg.get("max_in_flight", 8)),
    )


def _pipeline_config(cfg: dict[str, Any], dataset: Dataset) -> PipelineConfig:
    try:
        variant = Variant(cfg["variant"])
    except ValueError as exc:
        raise ConfigError(f"unknown variant {cfg['variant']!r}") from exc
    return PipelineConfig(
        variant=variant,
        max_levels=int(cfg.get("max_levels", DEFAULT_MAX_LEVELS[dataset])),
        shots=int(cfg.get("shots", DEFAULT_SHOTS[dataset])),
        temperature=float(cfg.get("temperature", 0.0)),
        dedupe_pool=bool(cfg.get("dedupe_pool", False)),
        score_sign=cfg.get("score_sign", "min_nll"),
        shuffle=bool(cfg.get("shuffle", False)),
        shuffle_seed=int(cfg.get("shuffle_seed", 0)),
        scorer_concurrency=int(cfg.get("scorer_concurrency", 1)),
    )


def _baseline_selection(
    inst: MultiHopInstance, cfg: dict[str, Any], rankings: Optional[dict[str, list[int]]]
) -> list[int]:
    k = int(cfg.get("top_k", 5))
    if cfg["variant"] == "bm25":
        ranked = baselines.bm25_rank(
            inst.question,
            inst.passages,
            k1=float(cfg.get("bm25_k1", 1.2)),
            b=float(cfg.get("bm25_b", 0.75)),
        )
        return [p.index for p in baselines.top_k(ranked, k)]
    assert rankings is not None
    if inst.id not in rankings:
        raise ConfigError(f"no precomputed ranking for instance {inst.id!r}")
    return rankings[inst.id][:k]


def _run_baseline_instance(
    inst: MultiHopInstance,
    cfg: dict[str, Any],
    gateway: LlmGateway,
    shot_bank,
    rankings: Optional[dict[str, list[int]]],
) -> tuple[dict[str, Any], AnswerRecord]:
    selected = _baseline_selection(inst, cfg, rankings)
    shots = int(cfg.get("shots", DEFAULT_SHOTS[inst.dataset]))
    temperature = float(cfg.get("temperature", 0.0))
    prompt = render_answer_prompt(
        inst.question,
        [inst.passage_by_index(i) for i in selected],
        tuple(shot_bank)[:shots],
    )
    answer = gateway.generate(
        GeneratorRequest(
            prompt=prompt.text,
            temperature=temperature,
            max_output_tokens=int(cfg.get("max_answer_tokens", 64)),
            stop_sequences=("\n",),
        ),
        purpose="answer",
    ).strip()
    trace = {
        "instance_id": inst.id,
        "variant": cfg["variant"],
        "levels": [],
        "stop_reason": None,
        "selected_sequence": selected,
    }
    record = AnswerRecord(
        instance_id=inst.id,
        predicted_answer=answer,
        context_order=tuple(selected),
        generator_params=GeneratorParams(
            model_id=gateway.generator.backend_id,
            temperature=temperature,
            shots=shots,
        ),
    )
    return trace, record


def run_batch(cfg: dict[str, Any], run_dir) -> int:
    """Execute (or resume) one run; returns the process exit code."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dataset = Dataset(cfg["dataset"])
    dataset_path = Path(cfg["dataset_path"])
    instances = datasets.load(
        datasets.DatasetConfig(
            dataset=dataset, path=str(dataset_path), limit=cfg.get("limit")
        )
    )
    if cfg.get("shot_bank"):
        shot_bank = load_shots_file(cfg["shot_bank"])
    else:
        shot_bank = load_shots(dataset)
    gateway = _build_gateway(cfg)

    is_baseline = cfg["variant"] in BASELINE_METHODS
    rankings = None
    if cfg["variant"] == "precomputed":
        if not cfg.get("rankings_file"):
            raise ConfigError("precomputed variant requires rankings_file")
        rankings = baselines.load_rankings(cfg["rankings_file"])
    pipe_cfg = None if is_baseline else _pipeline_config(cfg, dataset)

    traces_path = run_dir / "traces.jsonl"
    answers_path = run_dir / "answers.jsonl"
    instances_path = run_dir / "instances.jsonl"
    failures_path = run_dir / "failures.jsonl"
    done: set[str] = set()
    if traces_path.exists():
        done = {rec["instance_id"] for rec in read_jsonl(traces_path)}
    todo = [inst for inst in instances if inst.id not in done]

    started = time.time()

    def process(inst: MultiHopInstance):
        try:
            if is_baseline:
                trace_dict, record = _run_baseline_instance(
                    inst, cfg, gateway, shot_bank, rankings
                )
            else:
                trace, record = run_instance(inst, pipe_cfg, gateway, shot_bank)
                trace_dict = trace.to_dict()
            return inst, trace_dict, record.to_dict(), None
        except Exception as exc:  # noqa: BLE001 - batch isolation boundary
            return inst, None, None, f"{type(exc).__name__}: {exc}"

    failures = 0
    concurrency = max(1, int(cfg.get("concurrency", 1)))
    with open(traces_path, "a", encoding="utf-8") as tf, open(
        answers_path, "a", encoding="utf-8"
    ) as af, open(instances_path, "a", encoding="utf-8") as inf, open(
        failures_path, "a", encoding="utf-8"
    ) as ff:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            # executor.map preserves submission order, so completed records
            # land in the files in instance order regardless of timing.
            for inst, trace_dict, answer_dict, error in pool.map(process, todo):
                if error is not None:
                    failures += 1
                    append_jsonl(ff, {"instance_id": inst.id, "error": error})
                    continue
                append_jsonl(inf, inst.to_dict())
                append_jsonl(tf, trace_dict)
                append_jsonl(af, answer_dict)
    if failures == 0 and failures_path.stat().st_size == 0:
        failures_path.unlink()

    manifest = {
        "run_id": run_dir.name,
        "config": cfg,
        "dataset_digest": hashlib.sha256(dataset_path.read_bytes()).hexdigest(),
        "backends": {
            "generator": gateway.generator.backend_id,
            "scorer": gateway.scorer.backend_id,
        },
        "started": started,
        "finished": time.time(),
        "instances_total": len(instances),
        "instances_skipped": len(instances) - len(todo),
        "instances_failed": failures,
        "llm_calls": gateway.stats(),
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return 1 if failures else 0


def evaluate_run(run_dir) -> metrics.EvalReport:
    """Recompute the metric report for a finished run, offline."""
    run_dir = Path(run_dir)
    traces_path = run_dir / "traces.jsonl"
    answers_path = run_dir / "answers.jsonl"
    instances_path = run_dir / "instances.jsonl"
    for path in (traces_path, answers_path, instances_path):
        if not path.exists():
            raise CorruptTrace(f"{path}: missing")
    try:
        instances = {
            rec["id"]: MultiHopInstance.from_dict(rec)
            for rec in read_jsonl(instances_path)
        }
        traces = {rec["instance_id"]: rec for rec in read_jsonl(traces_path)}
        answers = [AnswerRecord.from_dict(rec) for rec in read_jsonl(answers_path)]
    except (ValueError, KeyError) as exc:
        raise CorruptTrace(str(exc)) from exc
    if not answers:
        raise CorruptTrace(f"{answers_path}: no answer records")

    rows: list[metrics.InstanceEval] = []
    for answer in answers:
        inst = instances.get(answer.instance_id)
        trace = traces.get(answer.instance_id)
        if inst is None or trace is None:
            raise CorruptTrace(
                f"answer for {answer.instance_id!r} has no matching instance/trace"
            )
        am = metrics.answer_metrics(answer.predicted_answer, inst.gold_answer)
        passages = [inst.passage_by_index(i).body for i in answer.context_order]
        kp = metrics.k_precision(answer.predicted_answer, passages)
        retrieval = None
        supporting_count = None
        if inst.supporting_indices is not None:
            retrieval = metrics.retrieval_metrics(
                trace["selected_sequence"], set(inst.supporting_indices)
            )
            supporting_count = len(inst.supporting_indices)
        rows.append(
            metrics.InstanceEval(
                instance_id=answer.instance_id,
                answer=am,
                k_precision=kp,
                retrieval=retrieval,
                supporting_count=supporting_count,
            )
        )

    report = metrics.aggregate(rows)
    payload = {
        "count": report.count,
        "means": report.means,
        "percents": report.percents,
        "delta_hops_hist": {
            str(k): {str(d): n for d, n in sorted(v.items())}
            for k, v in sorted(report.delta_hops_hist.items())
        },
        "per_instance": [_row_dict(r) for r in rows],
    }
    (run_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with open(run_dir / "report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow(_row_dict(r))
    return report


_CSV_FIELDS = [
    "instance_id",
    "em",
    "f1",
    "precision",
    "recall",
    "k_precision",
    "retrieval_precision",
    "retrieval_recall",
    "retrieval_f1",
    "delta_hops",
    "supporting_count",
]


def _row_dict(r: metrics.InstanceEval) -> dict[str, Any]:
    row: dict[str, Any] = {
        "instance_id": r.instance_id,
        "em": r.answer.em,
        "f1": r.answer.f1,
        "precision": r.answer.precision,
        "recall": r.answer.recall,
        "k_precision": r.k_precision,
        "retrieval_precision": None,
        "retrieval_recall": None,
        "retrieval_f1": None,
        "delta_hops": None,
        "supporting_count": r.supporting_count,
    }
    if r.retrieval is not None:
        row.update(
            retrieval_precision=r.retrieval.precision,
            retrieval_recall=r.retrieval.recall,
            retrieval_f1=r.retrieval.f1,
            delta_hops=r.retrieval.delta_hops,
        )
    return row


def emit_plotdata(run_dirs, out_dir, subset_sizes=(), seed: int = 0) -> None:
    """Write scatter, delta-hops histogram and subset tables for the runs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scatter_rows = []
    hist_rows = []
    subset_rows = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        report_path = run_dir / "report.json"
        if not report_path.exists():
            raise CorruptTrace(f"{report_path}: run not evaluated yet")
        report = json.loads(report_path.read_text(encoding="utf-8"))
        run_id = run_dir.name
        rows = report["per_instance"]
        kp = [r["k_precision"] for r in rows]
        f1 = [r["f1"] for r in rows]
        try:
            r_value = metrics.pearson(kp, f1) if len(rows) >= 2 else ""
        except metrics.DegenerateVariance:
            r_value = ""
        for r in rows:
            scatter_rows.append(
                {
                    "run_id": run_id,
                    "instance_id": r["instance_id"],
                    "k_precision": r["k_precision"],
                    "f1": r["f1"],
                    "pearson": r_value,
                }
            )
        for support, buckets in report["delta_hops_hist"].items():
            for delta, n in buckets.items():
                hist_rows.append(
                    {
                        "run_id": run_id,
                        "supporting_count": support,
                        "delta_hops": delta,
                        "count": n,
                    }
                )
        if subset_sizes:
            import random

            shuffled = list(rows)
            random.Random(seed).shuffle(shuffled)
            for size in subset_sizes:
                subset = shuffled[:size]
                if not subset:
                    continue
                n = len(subset)
                subset_rows.append(
                    {
                        "run_id": run_id,
                        "size": n,
                        "em": 100.0 * sum(r["em"] for r in subset) / n,
                        "f1": 100.0 * sum(r["f1"] for r in subset) / n,
                        "precision": 100.0 * sum(r["precision"] for r in subset) / n,
                        "recall": 100.0 * sum(r["recall"] for r in subset) / n,
                    }
                )

    def write_csv(name, fieldnames, rows):
        with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)

    write_csv(
        "scatter.csv",
        ["run_id", "instance_id", "k_precision", "f1", "pearson"],
        scatter_rows,
    )
    write_csv(
        "delta_hops.csv",
        ["run_id", "supporting_count", "delta_hops", "count"],
        hist_rows,
    )
    if subset_sizes:
        write_csv(
            "subsets.csv",
            ["run_id", "size", "em", "f1", "precision", "recall"],
            subset_rows,
        )


@click.group()
def main() -> None:
    """Greedy passage-sequence selection for multi-hop QA."""


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path())
@click.option("--dataset", default=None)
@click.option("--variant", default=None)
@click.option("--limit", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--concurrency", default=None, type=int)
@click.option("--cache-dir", default=None, type=click.Path())
@click.option("--backend-generator-url", "generator_url", default=None)
@click.option("--backend-scorer-url", "scorer_url", default=None)
def cmd_run(config_path, run_dir, **overrides) -> None:
    """Run a pipeline or baseline over a dataset (resumable)."""
    try:
        cfg = load_config(config_path, overrides)
        code = run_batch(cfg, run_dir)
    except (ConfigError, datasets.ParseError, datasets.SchemaError) as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(2)
    sys.exit(code)


@main.command("eval")
@click.argument("run_dir", type=click.Path(exists=True))
def cmd_eval(run_dir) -> None:
    """Compute metric reports for a finished run."""
    try:
        report = evaluate_run(run_dir)
    except CorruptTrace as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(2)
    for name, value in sorted(report.percents.items()):
        click.echo(f"{name}: {value:.2f}")
    sys.exit(0)


@main.command("plotdata")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--subset-sizes", default="", help="comma-separated subset sizes")
@click.option("--seed", default=0, type=int)
def cmd_plotdata(run_dirs, out_dir, subset_sizes, seed) -> None:
    """Emit scatter/histogram/subset tables for evaluated runs."""
    sizes = tuple(int(s) for s in subset_sizes.split(",") if s.strip())
    try:
        emit_plotdata(run_dirs, out_dir, sizes, seed)
    except CorruptTrace as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
