"""Command-line entry point.

Subcommands:
  validate   schema and path check of a run config, no side effects
  run        execute the configured evaluation tasks, write artifacts
  report     re-render tables from a metric report dump
  agreement  judge-vs-human analysis from a verdict dump and score file

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import re
import sys
from pathlib import Path

from . import agreement as agreement_mod
from . import corpus, judge, ngrams, report, retrieval
from .config import ConfigError, RunConfig, load_config, validate_config

_TABLE_FORMATS = (("csv", "csv"), ("markdown", "md"), ("structured", "json"))


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _slug(text: str) -> str:
    return re.sub(r"[^\w.-]+", "_", text)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _RunState:
    def __init__(self):
        self.metric_reports: list[report.MetricReport] = []
        self.verdicts: dict[tuple[str, str, str], list[judge.JudgeVerdict]] = {}
        self.results: list[dict] = []
        self.items_cache: dict[str, tuple[list, corpus.LabelSet | None]] = {}
        self.predictions_cache: dict[str, dict[str, list[corpus.PredictionRecord]]] = {}
        self.hashed_outputs: list[Path] = []


def _load_items(state: _RunState, ds):
    if ds.dataset_id not in state.items_cache:
        labels = None
        if ds.kind == "action":
            label_sets = corpus.load_dataset(ds.labels, "labels")
            labels = next((ls for ls in label_sets if ls.dataset_id == ds.dataset_id), None)
            if labels is None:
                available = [ls.dataset_id for ls in label_sets]
                raise corpus.CorpusError(
                    f"no label set for dataset '{ds.dataset_id}' in {ds.labels} (found {available})"
                )
        items = corpus.load_dataset(ds.path, ds.kind, labels=labels)
        state.items_cache[ds.dataset_id] = (items, labels)
    return state.items_cache[ds.dataset_id]


def _load_model_groups(state: _RunState, ds):
    if ds.dataset_id not in state.predictions_cache:
        records, _ = corpus.load_predictions(ds.predictions)
        groups: dict[str, list[corpus.PredictionRecord]] = {}
        for rec in records:
            groups.setdefault(rec.model_id, []).append(rec)
        state.predictions_cache[ds.dataset_id] = groups
    return state.predictions_cache[ds.dataset_id]


def _make_judge_provider(cfg: RunConfig):
    if cfg.judge.provider == "mock":
        return judge.MockJudgeProvider()
    return judge.HttpJudgeProvider(cfg.judge.endpoint)


def _make_embedding_provider(cfg: RunConfig):
    if not any(t in ("t2v", "v2t", "action") for t in cfg.tasks):
        return None
    if cfg.embeddings.provider == "file":
        return retrieval.FileEmbeddingProvider(cfg.embeddings.path)
    return retrieval.HttpEmbeddingProvider(cfg.embeddings.endpoint)


def _run_judge_task(cfg: RunConfig, state: _RunState, provider, task: str, out: Path) -> None:
    judge_task = "qa" if task == "qa-judge" else "caption"
    jconfig = judge.JudgeConfig(
        model_name=cfg.judge.model_name,
        provider_endpoint=cfg.judge.endpoint,
        temperature=cfg.judge.temperature,
        max_attempts=cfg.judge.max_attempts,
        parallelism=cfg.judge.parallelism,
        cache_dir=cfg.cache_dir,
    )
    template_version = (
        judge.QA_TEMPLATE_VERSION if judge_task == "qa" else judge.CAPTION_TEMPLATE_VERSION
    )
    for ds in (d for d in cfg.datasets if d.kind == judge_task):
        items, _ = _load_items(state, ds)
        groups = _load_model_groups(state, ds)
        for model_id in sorted(groups):
            pairs, summary = corpus.join(
                items, groups[model_id], policy=cfg.join_policy, dataset_id=ds.dataset_id
            )
            verdicts, jreport = judge.evaluate(pairs, jconfig, judge_task, provider)
            state.verdicts[(ds.dataset_id, model_id, judge_task)] = verdicts

            dump = out / "verdicts" / f"{judge_task}_{_slug(ds.dataset_id)}_{_slug(model_id)}.jsonl"
            judge.dump_verdicts(verdicts, dump)
            state.hashed_outputs.append(dump)

            metrics: dict[str, float] = {}
            if judge_task == "qa":
                if jreport.accuracy is not None:
                    metrics["acc"] = jreport.accuracy
                if jreport.mean_match is not None:
                    metrics["mat"] = jreport.mean_match
            else:
                if jreport.mean_precision is not None:
                    metrics["prec"] = jreport.mean_precision
                if jreport.mean_coverage is not None:
                    metrics["cov"] = jreport.mean_coverage
            state.metric_reports.append(
                report.MetricReport(
                    model_id=model_id,
                    task=judge_task,
                    dataset_id=ds.dataset_id,
                    metrics=metrics,
                    provenance={
                        "judge_model": cfg.judge.model_name,
                        "template_version": template_version,
                        "provider": cfg.judge.provider,
                        "temperature": cfg.judge.temperature,
                        "created_at": _now(),
                    },
                )
            )
            state.results.append(
                {
                    "task": task,
                    "dataset_id": ds.dataset_id,
                    "model_id": model_id,
                    "n_items": jreport.n_items,
                    "n_valid": jreport.n_valid,
                    "empty_responses": sum(
                        1 for p in pairs if not p.prediction.response.strip()
                    ),
                    "missing_ids": len(summary.missing_ids),
                    "extra_ids": len(summary.extra_ids),
                }
            )
            print(
                f"  {task} {ds.dataset_id} {model_id}: "
                f"{jreport.n_valid}/{jreport.n_items} valid verdicts"
            )


def _run_ngram_task(cfg: RunConfig, state: _RunState) -> None:
    for ds in (d for d in cfg.datasets if d.kind == "caption"):
        items, _ = _load_items(state, ds)
        groups = _load_model_groups(state, ds)
        for model_id in sorted(groups):
            pairs, summary = corpus.join(
                items, groups[model_id], policy=cfg.join_policy, dataset_id=ds.dataset_id
            )
            candidates = {
                p.ground_truth.item_id: ngrams.tokenize(p.prediction.response) for p in pairs
            }
            references = {
                p.ground_truth.item_id: [ngrams.tokenize(r) for r in p.ground_truth.references]
                for p in pairs
            }
            means, _per_item = ngrams.score_caption_corpus(candidates, references)
            state.metric_reports.append(
                report.MetricReport(
                    model_id=model_id,
                    task="ngram",
                    dataset_id=ds.dataset_id,
                    metrics=means,
                    provenance={"created_at": _now()},
                )
            )
            state.results.append(
                {
                    "task": "ngram",
                    "dataset_id": ds.dataset_id,
                    "model_id": model_id,
                    "n_items": len(pairs),
                    "missing_ids": len(summary.missing_ids),
                    "extra_ids": len(summary.extra_ids),
                }
            )
            print(f"  ngram {ds.dataset_id} {model_id}: {len(pairs)} items")


def _run_retrieval_task(cfg: RunConfig, state: _RunState, provider, task: str) -> None:
    kind = "action" if task == "action" else "caption"
    for ds in (d for d in cfg.datasets if d.kind == kind):
        items, labels = _load_items(state, ds)
        groups = _load_model_groups(state, ds)
        for model_id in sorted(groups):
            if task == "t2v":
                rep = retrieval.eval_t2v(
                    items,
                    groups[model_id],
                    provider,
                    policy=cfg.join_policy,
                    gallery_size=cfg.gallery_size,
                    gallery_seed=cfg.gallery_seed,
                )
            elif task == "v2t":
                rep = retrieval.eval_v2t(
                    items,
                    groups[model_id],
                    provider,
                    policy=cfg.join_policy,
                    gallery_size=cfg.gallery_size,
                    gallery_seed=cfg.gallery_seed,
                )
            else:
                rep = retrieval.eval_action(
                    items, groups[model_id], labels, provider, policy=cfg.join_policy
                )
            state.metric_reports.append(
                report.MetricReport(
                    model_id=model_id,
                    task=task,
                    dataset_id=ds.dataset_id,
                    metrics={"acc1": rep.top_k_accuracy[1], "acc5": rep.top_k_accuracy[5]},
                    provenance={
                        "embedding_provider": cfg.embeddings.provider,
                        "created_at": _now(),
                        **rep.metadata,
                    },
                )
            )
            state.results.append(
                {
                    "task": task,
                    "dataset_id": ds.dataset_id,
                    "model_id": model_id,
                    "n_queries": rep.n_queries,
                }
            )
            print(f"  {task} {ds.dataset_id} {model_id}: {rep.n_queries} queries")


def _run_agreement_task(cfg: RunConfig, state: _RunState, out: Path) -> None:
    metric_map = {"qa": ("correctness", "match"), "caption": ("precision", "coverage")}
    ran_any = False
    for ds in (d for d in cfg.datasets if d.human_scores is not None):
        if ds.kind not in metric_map:
            continue
        human = corpus.load_human_scores(ds.human_scores)
        for (dataset_id, model_id, judge_task), verdicts in sorted(state.verdicts.items()):
            if dataset_id != ds.dataset_id or judge_task != ds.kind:
                continue
            for metric in metric_map[ds.kind]:
                pairs, summary = agreement_mod.pair_scores(verdicts, human, metric)
                entry = {
                    "task": "agreement",
                    "dataset_id": ds.dataset_id,
                    "model_id": model_id,
                    "metric": metric,
                    "n_pairs": summary.n_pairs,
                    "judge_only": len(summary.judge_only),
                    "human_only": len(summary.human_only),
                }
                state.results.append(entry)
                if not pairs:
                    print(f"  agreement {ds.dataset_id} {model_id} {metric}: no pairs")
                    continue
                ran_any = True
                bins = (0, 1) if metric == "correctness" else (1, 2, 3, 4, 5)
                matrix = agreement_mod.confusion(pairs, bins)
                analysis = agreement_mod.analyze(pairs, metric)
                stem = f"{_slug(ds.dataset_id)}_{_slug(model_id)}_{metric}"
                payload = {
                    "report": analysis.to_dict(),
                    "confusion": {"bins": list(matrix.bins), "counts": [list(r) for r in matrix.counts]},
                    "pair_summary": {
                        "n_pairs": summary.n_pairs,
                        "judge_only": list(summary.judge_only),
                        "human_only": list(summary.human_only),
                    },
                }
                json_path = out / "agreement" / f"{stem}.json"
                json_path.write_text(
                    json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8",
                )
                text_path = out / "agreement" / f"{stem}.txt"
                text_path.write_text(agreement_mod.format_confusion(matrix), encoding="utf-8")
                state.hashed_outputs.extend([json_path, text_path])
                print(
                    f"  agreement {ds.dataset_id} {model_id} {metric}: "
                    f"{summary.n_pairs} pairs, exact {analysis.exact_agreement_rate:.1f}%"
                )
    if not ran_any:
        raise RuntimeError("agreement task produced no pairs (did a judge task run first?)")


def _write_tables(cfg: RunConfig, state: _RunState, out: Path) -> None:
    tables = report.aggregate(state.metric_reports, dataset_order=cfg.dataset_order)
    for model_id, table in tables.items():
        for fmt, ext in _TABLE_FORMATS:
            path = out / "tables" / f"{_slug(model_id)}.{ext}"
            path.write_text(report.render(table, fmt), encoding="utf-8")
            state.hashed_outputs.append(path)


def _write_manifest(cfg: RunConfig, state: _RunState, providers, out: Path) -> Path:
    base = cfg.config_path.parent

    def input_key(path: Path) -> str:
        try:
            return str(Path(path).resolve().relative_to(base.resolve()))
        except ValueError:
            return str(path)

    inputs = {}
    seen_inputs = {cfg.config_path}
    for ds in cfg.datasets:
        for p in (ds.path, ds.predictions, ds.labels, ds.human_scores):
            if p is not None:
                seen_inputs.add(p)
    if cfg.embeddings.path is not None and cfg.embeddings.provider == "file":
        seen_inputs.add(cfg.embeddings.path)
    for p in sorted(seen_inputs):
        inputs[input_key(p)] = _sha256_file(Path(p))

    outputs = {
        str(p.relative_to(out)): _sha256_file(p) for p in sorted(set(state.hashed_outputs))
    }

    stable = {
        "config_sha256": _sha256_file(cfg.config_path),
        "inputs": inputs,
        "join_policy": cfg.join_policy,
        "tasks": list(cfg.tasks),
        "providers": {
            "judge": {
                "provider": cfg.judge.provider,
                "endpoint": cfg.judge.endpoint,
                "model_name": cfg.judge.model_name,
                "temperature": cfg.judge.temperature,
                "templates": {
                    "qa": judge.QA_TEMPLATE_VERSION,
                    "caption": judge.CAPTION_TEMPLATE_VERSION,
                },
            },
            "embeddings": {
                "provider": cfg.embeddings.provider,
                "endpoint": cfg.embeddings.endpoint,
            },
        },
        "results": state.results,
        "outputs": outputs,
    }
    manifest_sha = hashlib.sha256(
        json.dumps(stable, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    manifest = {
        **stable,
        "manifest_sha256": manifest_sha,
        # excluded from the hash: varies between cold and warm-cache runs
        "runtime": {
            "judge_provider_calls": getattr(providers["judge"], "calls", 0) if providers["judge"] else 0,
            "embedding_provider_calls": getattr(providers["embeddings"], "calls", 0)
            if providers["embeddings"]
            else 0,
        },
    }
    path = out / "manifest.json"
    path.write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return path


def cmd_validate(args) -> int:
    diagnostics = validate_config(args.config)
    if diagnostics:
        for diag in diagnostics:
            print(f"config: {diag}", file=sys.stderr)
        return 1
    print("configuration valid")
    return 0


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(f"config: {diag}", file=sys.stderr)
        return 1

    if args.output_dir is not None:
        cfg.output_dir = Path(args.output_dir)
    if args.cache_dir is not None:
        cfg.cache_dir = Path(args.cache_dir)
    if args.join_policy is not None:
        cfg.join_policy = args.join_policy
    if args.gallery_seed is not None:
        cfg.gallery_seed = args.gallery_seed
    if args.gallery_size is not None:
        cfg.gallery_size = args.gallery_size

    state = _RunState()
    current_task = None
    try:
        judge_provider = _make_judge_provider(cfg)
        embedding_provider = _make_embedding_provider(cfg)
        providers = {"judge": judge_provider, "embeddings": embedding_provider}

        out = cfg.output_dir
        for sub in ("verdicts", "reports", "tables", "agreement"):
            (out / sub).mkdir(parents=True, exist_ok=True)

        for task in cfg.tasks:
            current_task = task
            print(f"task: {task}")
            if task in ("qa-judge", "caption-judge"):
                _run_judge_task(cfg, state, judge_provider, task, out)
            elif task == "ngram":
                _run_ngram_task(cfg, state)
            elif task in ("t2v", "v2t", "action"):
                _run_retrieval_task(cfg, state, embedding_provider, task)
            elif task == "agreement":
                _run_agreement_task(cfg, state, out)

        report.dump_metric_reports(state.metric_reports, out / "reports" / "metric_reports.jsonl")
        _write_tables(cfg, state, out)
        manifest_path = _write_manifest(cfg, state, providers, out)
        print(f"wrote {manifest_path}")
        return 0
    except Exception as exc:  # prior task outputs stay on disk
        where = f" during task '{current_task}'" if current_task else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 2


def cmd_report(args) -> int:
    try:
        reports = report.load_metric_reports(args.dump)
        dataset_order = args.dataset_order.split(",") if args.dataset_order else None
        tables = report.aggregate(reports, dataset_order=dataset_order)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for model_id, table in tables.items():
            for fmt, ext in _TABLE_FORMATS:
                (out / f"{_slug(model_id)}.{ext}").write_text(
                    report.render(table, fmt), encoding="utf-8"
                )
        print(f"rendered {len(tables)} model table(s) to {out}")
        return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def cmd_agreement(args) -> int:
    try:
        verdicts = judge.load_verdicts(args.verdicts)
        human = corpus.load_human_scores(args.human)
        pairs, summary = agreement_mod.pair_scores(verdicts, human, args.metric)
        if not pairs:
            print("error: no overlapping items between verdicts and human scores", file=sys.stderr)
            return 2
        bins = (0, 1) if args.metric == "correctness" else (1, 2, 3, 4, 5)
        matrix = agreement_mod.confusion(pairs, bins)
        analysis = agreement_mod.analyze(pairs, args.metric)
        payload = {
            "report": analysis.to_dict(),
            "confusion": {"bins": list(matrix.bins), "counts": [list(r) for r in matrix.counts]},
            "pair_summary": {
                "n_pairs": summary.n_pairs,
                "judge_only": list(summary.judge_only),
                "human_only": list(summary.human_only),
            },
        }
        text = json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            print(f"wrote {args.out}")
        else:
            print(text, end="")
        return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videval", description="Batch evaluation harness for video language models"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a run configuration")
    p_validate.add_argument("config")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="execute the configured evaluation tasks")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None, help="override output_dir")
    p_run.add_argument("--cache-dir", default=None, help="override cache_dir")
    p_run.add_argument(
        "--join-policy", default=None, choices=("strict", "intersect"), help="override join_policy"
    )
    p_run.add_argument("--gallery-seed", type=int, default=None, help="override gallery_seed")
    p_run.add_argument("--gallery-size", type=int, default=None, help="override gallery_size")
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="re-render tables from a metric report dump")
    p_report.add_argument("dump")
    p_report.add_argument("--out", required=True)
    p_report.add_argument("--dataset-order", default=None, help="comma-separated dataset ids")
    p_report.set_defaults(func=cmd_report)

    p_agree = sub.add_parser("agreement", help="judge-vs-human agreement analysis")
    p_agree.add_argument("--verdicts", required=True)
    p_agree.add_argument("--human", required=True)
    p_agree.add_argument(
        "--metric", required=True, choices=("correctness", "match", "precision", "coverage")
    )
    p_agree.add_argument("--out", default=None)
    p_agree.set_defaults(func=cmd_agreement)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
