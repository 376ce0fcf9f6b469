"""Declarative run configuration: schema, validation, loading.

Configs are YAML (JSON also parses). Relative paths resolve against the
config file's directory. Validation checks the schema and that every
referenced input file exists, and never creates or modifies anything.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

__all__ = [
    "ConfigError",
    "DatasetConfig",
    "EmbeddingSettings",
    "JudgeSettings",
    "RunConfig",
    "TASK_NAMES",
    "load_config",
    "validate_config",
]

TASK_NAMES = ("qa-judge", "caption-judge", "ngram", "t2v", "v2t", "action", "agreement")
_KINDS = ("qa", "caption", "action")
_TASK_KIND = {
    "qa-judge": "qa",
    "caption-judge": "caption",
    "ngram": "caption",
    "t2v": "caption",
    "v2t": "caption",
    "action": "action",
}


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(slots=True)
class DatasetConfig:
    dataset_id: str
    kind: str
    path: Path
    predictions: Path
    labels: Path | None = None
    human_scores: Path | None = None


@dataclass(slots=True)
class JudgeSettings:
    provider: str = "mock"
    endpoint: str | None = None
    model_name: str = "judge-v1"
    temperature: float = 0.0
    max_attempts: int = 3
    parallelism: int = 1


@dataclass(slots=True)
class EmbeddingSettings:
    provider: str = "file"
    path: Path | None = None
    endpoint: str | None = None


@dataclass(slots=True)
class RunConfig:
    config_path: Path
    tasks: tuple[str, ...]
    datasets: list[DatasetConfig]
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    embeddings: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    output_dir: Path = Path("out")
    cache_dir: Path = Path("judge-cache")
    join_policy: str = "strict"
    gallery_size: int | None = None
    gallery_seed: int = 0

    @property
    def dataset_order(self) -> tuple[str, ...]:
        return tuple(d.dataset_id for d in self.datasets)


def _suggest(name: str, options) -> str:
    close = difflib.get_close_matches(name, options, n=1)
    return f" (did you mean '{close[0]}'?)" if close else ""


def _check_file(path: Path, location: str, diagnostics: list[str]) -> None:
    if not path.is_file():
        diagnostics.append(f"{location}: file not found: {path}")


def _parse(path) -> tuple[RunConfig | None, list[str]]:
    path = Path(path)
    diagnostics: list[str] = []
    if not path.is_file():
        return None, [f"config file not found: {path}"]
    try:
        raw = yaml.safe_load(path.read_text("utf-8"))
    except yaml.YAMLError as exc:
        return None, [f"config is not valid YAML: {exc}"]
    if not isinstance(raw, dict):
        return None, ["config must be a mapping"]

    base = path.parent

    def resolve(value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    known_top = {
        "tasks",
        "datasets",
        "judge",
        "embeddings",
        "output_dir",
        "cache_dir",
        "join_policy",
        "gallery_size",
        "gallery_seed",
    }
    for key in raw:
        if key not in known_top:
            diagnostics.append(f"{key}: unknown configuration key{_suggest(key, known_top)}")

    tasks_raw = raw.get("tasks")
    tasks: list[str] = []
    if not isinstance(tasks_raw, list) or not tasks_raw:
        diagnostics.append("tasks: must be a non-empty list")
    else:
        for i, task in enumerate(tasks_raw):
            if task not in TASK_NAMES:
                diagnostics.append(f"tasks[{i}]: unknown task '{task}'{_suggest(str(task), TASK_NAMES)}")
            else:
                tasks.append(task)

    join_policy = raw.get("join_policy", "strict")
    if join_policy not in ("strict", "intersect"):
        diagnostics.append(f"join_policy: must be 'strict' or 'intersect', got '{join_policy}'")

    gallery_size = raw.get("gallery_size")
    if gallery_size is not None and (not isinstance(gallery_size, int) or gallery_size < 1):
        diagnostics.append(f"gallery_size: must be a positive integer or null, got {gallery_size!r}")
    gallery_seed = raw.get("gallery_seed", 0)
    if not isinstance(gallery_seed, int):
        diagnostics.append(f"gallery_seed: must be an integer, got {gallery_seed!r}")
        gallery_seed = 0

    judge = JudgeSettings()
    judge_raw = raw.get("judge", {})
    if not isinstance(judge_raw, dict):
        diagnostics.append("judge: must be a mapping")
    else:
        judge.provider = judge_raw.get("provider", judge.provider)
        if judge.provider not in ("mock", "http"):
            diagnostics.append(f"judge.provider: must be 'mock' or 'http', got '{judge.provider}'")
        judge.endpoint = judge_raw.get("endpoint")
        if judge.provider == "http" and not judge.endpoint:
            diagnostics.append("judge.endpoint: required when judge.provider is 'http'")
        judge.model_name = str(judge_raw.get("model_name", judge.model_name))
        temperature = judge_raw.get("temperature", judge.temperature)
        if not isinstance(temperature, (int, float)) or temperature < 0:
            diagnostics.append(f"judge.temperature: must be >= 0, got {temperature!r}")
        else:
            judge.temperature = float(temperature)
        max_attempts = judge_raw.get("max_attempts", judge.max_attempts)
        if not isinstance(max_attempts, int) or max_attempts < 1:
            diagnostics.append(f"judge.max_attempts: must be >= 1, got {max_attempts!r}")
        else:
            judge.max_attempts = max_attempts
        parallelism = judge_raw.get("parallelism", judge.parallelism)
        if not isinstance(parallelism, int) or parallelism < 1:
            diagnostics.append(f"judge.parallelism: must be >= 1, got {parallelism!r}")
        else:
            judge.parallelism = parallelism

    embeddings = EmbeddingSettings()
    embeddings_raw = raw.get("embeddings", {})
    if not isinstance(embeddings_raw, dict):
        diagnostics.append("embeddings: must be a mapping")
    else:
        embeddings.provider = embeddings_raw.get("provider", embeddings.provider)
        if embeddings.provider not in ("file", "http"):
            diagnostics.append(
                f"embeddings.provider: must be 'file' or 'http', got '{embeddings.provider}'"
            )
        embeddings.endpoint = embeddings_raw.get("endpoint")
        if embeddings_raw.get("path") is not None:
            embeddings.path = resolve(embeddings_raw["path"])
        needs_embeddings = any(t in ("t2v", "v2t", "action") for t in tasks)
        if embeddings.provider == "file" and needs_embeddings:
            if embeddings.path is None:
                diagnostics.append("embeddings.path: required when embeddings.provider is 'file'")
            else:
                _check_file(embeddings.path, "embeddings.path", diagnostics)
        if embeddings.provider == "http" and needs_embeddings and not embeddings.endpoint:
            diagnostics.append("embeddings.endpoint: required when embeddings.provider is 'http'")

    datasets: list[DatasetConfig] = []
    datasets_raw = raw.get("datasets")
    if not isinstance(datasets_raw, list) or not datasets_raw:
        diagnostics.append("datasets: must be a non-empty list")
        datasets_raw = []
    seen_ids: set[str] = set()
    for i, entry in enumerate(datasets_raw):
        loc = f"datasets[{i}]"
        if not isinstance(entry, dict):
            diagnostics.append(f"{loc}: must be a mapping")
            continue
        dataset_id = entry.get("dataset_id")
        if not isinstance(dataset_id, str) or not dataset_id:
            diagnostics.append(f"{loc}.dataset_id: required")
            continue
        if dataset_id in seen_ids:
            diagnostics.append(f"{loc}.dataset_id: duplicate dataset '{dataset_id}'")
            continue
        seen_ids.add(dataset_id)
        kind = entry.get("kind")
        if kind not in _KINDS:
            diagnostics.append(f"{loc}.kind: must be one of {_KINDS}, got {kind!r}")
            continue
        missing = [f for f in ("path", "predictions") if not entry.get(f)]
        if missing:
            for f in missing:
                diagnostics.append(f"{loc}.{f}: required")
            continue
        ds = DatasetConfig(
            dataset_id=dataset_id,
            kind=kind,
            path=resolve(entry["path"]),
            predictions=resolve(entry["predictions"]),
        )
        _check_file(ds.path, f"{loc}.path", diagnostics)
        _check_file(ds.predictions, f"{loc}.predictions", diagnostics)
        if kind == "action":
            if not entry.get("labels"):
                diagnostics.append(f"{loc}.labels: required for action datasets")
            else:
                ds.labels = resolve(entry["labels"])
                _check_file(ds.labels, f"{loc}.labels", diagnostics)
        if entry.get("human_scores"):
            ds.human_scores = resolve(entry["human_scores"])
            _check_file(ds.human_scores, f"{loc}.human_scores", diagnostics)
        datasets.append(ds)

    for task in tasks:
        kind = _TASK_KIND.get(task)
        if kind and not any(d.kind == kind for d in datasets):
            diagnostics.append(f"tasks: '{task}' requires at least one dataset of kind '{kind}'")
    if "agreement" in tasks:
        judge_positions = [i for i, t in enumerate(tasks) if t in ("qa-judge", "caption-judge")]
        if not judge_positions:
            diagnostics.append("tasks: 'agreement' requires 'qa-judge' or 'caption-judge' in the same run")
        elif min(judge_positions) > tasks.index("agreement"):
            diagnostics.append("tasks: 'agreement' must come after the judge task that produces its verdicts")
        if not any(d.human_scores for d in datasets):
            diagnostics.append("tasks: 'agreement' requires at least one dataset with human_scores")

    if diagnostics:
        return None, diagnostics

    return (
        RunConfig(
            config_path=path,
            tasks=tuple(tasks),
            datasets=datasets,
            judge=judge,
            embeddings=embeddings,
            output_dir=resolve(raw.get("output_dir", "out")),
            cache_dir=resolve(raw.get("cache_dir", "judge-cache")),
            join_policy=join_policy,
            gallery_size=gallery_size,
            gallery_seed=gallery_seed,
        ),
        [],
    )


def validate_config(path) -> list[str]:
    """Full schema and path-existence check; returns diagnostics (empty
    when valid) and has no side effects."""
    _, diagnostics = _parse(path)
    return diagnostics


def load_config(path) -> RunConfig:
    config, diagnostics = _parse(path)
    if diagnostics:
        raise ConfigError(diagnostics)
    return config
