"""Ground-truth corpora, model prediction files, and evaluation joins.

All on-disk formats are UTF-8 JSON Lines: one self-contained record per
line. Unknown fields are ignored so files may carry extra annotations;
a missing required field is an error. Loaders report the offending line
number for every violation. Text fields are stored verbatim; any
normalization is left to consumers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

__all__ = [
    "ActionItem",
    "CaptionItem",
    "CorpusError",
    "EvalPair",
    "GroundTruthItem",
    "HumanScoreRecord",
    "JoinSummary",
    "LabelSet",
    "PredictionRecord",
    "PredictionWarnings",
    "QaItem",
    "dump_records",
    "join",
    "load_dataset",
    "load_human_scores",
    "load_predictions",
]

DATASET_KINDS = ("qa", "caption", "action", "labels")
HUMAN_METRICS = ("correctness", "match", "precision", "coverage")


class CorpusError(ValueError):
    """Malformed file, schema violation, or inconsistent join input."""


@dataclass(frozen=True, slots=True)
class QaItem:
    item_id: str
    video_id: str
    question: str
    answer: str


@dataclass(frozen=True, slots=True)
class CaptionItem:
    item_id: str
    video_id: str
    references: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class ActionItem:
    item_id: str
    video_id: str
    label: str


@dataclass(frozen=True, slots=True)
class LabelSet:
    dataset_id: str
    labels: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class PredictionRecord:
    model_id: str
    dataset_id: str
    item_id: str
    response: str


@dataclass(frozen=True, slots=True)
class HumanScoreRecord:
    item_id: str
    metric: str
    human_value: int


GroundTruthItem = Union[QaItem, CaptionItem, ActionItem]


@dataclass(frozen=True, slots=True)
class EvalPair:
    ground_truth: GroundTruthItem
    prediction: PredictionRecord


@dataclass(frozen=True, slots=True)
class PredictionWarnings:
    empty: int


@dataclass(frozen=True, slots=True)
class JoinSummary:
    n_pairs: int
    missing_ids: tuple[str, ...]
    extra_ids: tuple[str, ...]


def _iter_records(path):
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: record must be a JSON object")
            yield lineno, obj


def _text_field(obj, key, path, lineno, *, allow_empty=False):
    if key not in obj:
        raise CorpusError(f"{path}:{lineno}: missing field '{key}'")
    value = obj[key]
    if not isinstance(value, str):
        raise CorpusError(f"{path}:{lineno}: field '{key}' must be a string")
    if not allow_empty and not value.strip():
        raise CorpusError(f"{path}:{lineno}: field '{key}' must be non-empty")
    return value


def _string_list_field(obj, key, path, lineno):
    if key not in obj:
        raise CorpusError(f"{path}:{lineno}: missing field '{key}'")
    value = obj[key]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorpusError(f"{path}:{lineno}: field '{key}' must be a list of strings")
    return value


def load_dataset(path, kind, labels=None):
    """Load one ground-truth file of the given kind.

    kind is one of ``qa``, ``caption``, ``action``, or ``labels``. For
    ``action``, pass the dataset's :class:`LabelSet` to validate label
    membership. Returns a list of typed records in file order.
    """
    path = Path(path)
    if kind not in DATASET_KINDS:
        raise CorpusError(f"unknown dataset kind '{kind}' (expected one of {DATASET_KINDS})")
    if kind == "labels":
        return _load_label_sets(path)

    items: list[GroundTruthItem] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_records(path):
        item_id = _text_field(obj, "item_id", path, lineno)
        if item_id in seen:
            raise CorpusError(
                f"{path}: duplicate item_id '{item_id}' (lines {seen[item_id]} and {lineno})"
            )
        seen[item_id] = lineno
        video_id = _text_field(obj, "video_id", path, lineno)
        if kind == "qa":
            items.append(
                QaItem(
                    item_id=item_id,
                    video_id=video_id,
                    question=_text_field(obj, "question", path, lineno),
                    answer=_text_field(obj, "answer", path, lineno),
                )
            )
        elif kind == "caption":
            references = _string_list_field(obj, "references", path, lineno)
            if not references:
                raise CorpusError(f"{path}:{lineno}: 'references' must contain at least one caption")
            for i, ref in enumerate(references):
                if not ref.strip():
                    raise CorpusError(f"{path}:{lineno}: reference {i} is empty")
            items.append(CaptionItem(item_id=item_id, video_id=video_id, references=tuple(references)))
        else:
            label = _text_field(obj, "label", path, lineno)
            if labels is not None and label not in labels.labels:
                raise CorpusError(
                    f"{path}:{lineno}: item '{item_id}' has label '{label}' "
                    f"not in label set '{labels.dataset_id}'"
                )
            items.append(ActionItem(item_id=item_id, video_id=video_id, label=label))
    return items


def _load_label_sets(path):
    sets: list[LabelSet] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_records(path):
        dataset_id = _text_field(obj, "dataset_id", path, lineno)
        if dataset_id in seen:
            raise CorpusError(
                f"{path}: duplicate label set '{dataset_id}' (lines {seen[dataset_id]} and {lineno})"
            )
        seen[dataset_id] = lineno
        labels = _string_list_field(obj, "labels", path, lineno)
        if not labels:
            raise CorpusError(f"{path}:{lineno}: 'labels' must be non-empty")
        if len(set(labels)) != len(labels):
            dupes = sorted({x for x in labels if labels.count(x) > 1})
            raise CorpusError(f"{path}:{lineno}: labels are not distinct: {dupes}")
        sets.append(LabelSet(dataset_id=dataset_id, labels=tuple(labels)))
    return sets


def load_predictions(path):
    """Load a prediction file.

    Returns (records, warnings). Empty responses are kept and counted in
    the warnings; a duplicate (model_id, dataset_id, item_id) triple is
    an error.
    """
    path = Path(path)
    records: list[PredictionRecord] = []
    seen: dict[tuple[str, str, str], int] = {}
    empty = 0
    for lineno, obj in _iter_records(path):
        rec = PredictionRecord(
            model_id=_text_field(obj, "model_id", path, lineno),
            dataset_id=_text_field(obj, "dataset_id", path, lineno),
            item_id=_text_field(obj, "item_id", path, lineno),
            response=_text_field(obj, "response", path, lineno, allow_empty=True),
        )
        key = (rec.model_id, rec.dataset_id, rec.item_id)
        if key in seen:
            raise CorpusError(
                f"{path}: duplicate prediction {key} (lines {seen[key]} and {lineno})"
            )
        seen[key] = lineno
        if not rec.response.strip():
            empty += 1
        records.append(rec)
    return records, PredictionWarnings(empty=empty)


def load_human_scores(path):
    """Load human score records, validating the metric-specific value range."""
    path = Path(path)
    records: list[HumanScoreRecord] = []
    for lineno, obj in _iter_records(path):
        metric = _text_field(obj, "metric", path, lineno)
        if metric not in HUMAN_METRICS:
            raise CorpusError(
                f"{path}:{lineno}: unknown metric '{metric}' (expected one of {HUMAN_METRICS})"
            )
        if "human_value" not in obj:
            raise CorpusError(f"{path}:{lineno}: missing field 'human_value'")
        value = obj["human_value"]
        if isinstance(value, bool) or not isinstance(value, int):
            raise CorpusError(f"{path}:{lineno}: 'human_value' must be an integer")
        lo, hi = (0, 1) if metric == "correctness" else (1, 5)
        if not lo <= value <= hi:
            raise CorpusError(
                f"{path}:{lineno}: '{metric}' value {value} outside [{lo}, {hi}]"
            )
        records.append(
            HumanScoreRecord(
                item_id=_text_field(obj, "item_id", path, lineno),
                metric=metric,
                human_value=value,
            )
        )
    return records


def record_to_dict(record):
    """External-interface dict for any corpus record type."""
    if isinstance(record, QaItem):
        return {
            "item_id": record.item_id,
            "video_id": record.video_id,
            "question": record.question,
            "answer": record.answer,
        }
    if isinstance(record, CaptionItem):
        return {
            "item_id": record.item_id,
            "video_id": record.video_id,
            "references": list(record.references),
        }
    if isinstance(record, ActionItem):
        return {"item_id": record.item_id, "video_id": record.video_id, "label": record.label}
    if isinstance(record, LabelSet):
        return {"dataset_id": record.dataset_id, "labels": list(record.labels)}
    if isinstance(record, PredictionRecord):
        return {
            "model_id": record.model_id,
            "dataset_id": record.dataset_id,
            "item_id": record.item_id,
            "response": record.response,
        }
    if isinstance(record, HumanScoreRecord):
        return {
            "item_id": record.item_id,
            "metric": record.metric,
            "human_value": record.human_value,
        }
    raise TypeError(f"unsupported record type: {type(record).__name__}")


def dump_records(records, path):
    """Write records as JSON Lines in the external-interface schema."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def join(ground_truth, predictions, policy="strict", dataset_id=None):
    """Pair ground-truth items with predictions by item_id.

    ``strict`` errors if any ground-truth item lacks a prediction;
    ``intersect`` evaluates the overlap and reports missing/extra ids.
    Output pairs follow ground-truth order. All predictions must share a
    single (model_id, dataset_id); pass ``dataset_id`` to additionally pin
    the expected dataset.
    """
    if policy not in ("strict", "intersect"):
        raise CorpusError(f"unknown join policy '{policy}'")

    model_ids = {p.model_id for p in predictions}
    if len(model_ids) > 1:
        raise CorpusError(
            f"predictions mix model_ids {sorted(model_ids)}; join one model at a time"
        )
    dataset_ids = {p.dataset_id for p in predictions}
    if dataset_id is not None:
        dataset_ids.add(dataset_id)
    if len(dataset_ids) > 1:
        raise CorpusError(f"mismatched dataset_id: {sorted(dataset_ids)}")

    by_id: dict[str, PredictionRecord] = {}
    for pred in predictions:
        if pred.item_id in by_id:
            raise CorpusError(f"duplicate prediction for item_id '{pred.item_id}'")
        by_id[pred.item_id] = pred

    gt_ids = set()
    for item in ground_truth:
        if item.item_id in gt_ids:
            raise CorpusError(f"duplicate ground-truth item_id '{item.item_id}'")
        gt_ids.add(item.item_id)

    missing = tuple(sorted(gt_ids - by_id.keys()))
    extra = tuple(sorted(by_id.keys() - gt_ids))
    if policy == "strict" and missing:
        raise CorpusError(
            f"strict join: {len(missing)} ground-truth item(s) lack predictions: {list(missing)}"
        )

    pairs = [
        EvalPair(ground_truth=item, prediction=by_id[item.item_id])
        for item in ground_truth
        if item.item_id in by_id
    ]
    return pairs, JoinSummary(n_pairs=len(pairs), missing_ids=missing, extra_ids=extra)
