"""Judge-model scoring of open-ended responses.

Builds grading prompts from versioned templates, calls a chat-completion
style provider, parses the machine-readable verdict out of the reply
(with format-reminder retries), caches replies on disk keyed by prompt
content, and aggregates per-task reports: accuracy and mean match score
for QA, mean precision and coverage for captions.
"""

from __future__ import annotations

import hashlib
import json
import os
import string
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from .corpus import CaptionItem, EvalPair, QaItem

__all__ = [
    "HttpJudgeProvider",
    "JudgeConfig",
    "JudgeError",
    "JudgePrompt",
    "JudgeReport",
    "JudgeVerdict",
    "MockJudgeProvider",
    "build_caption_prompt",
    "build_qa_prompt",
    "dump_verdicts",
    "evaluate",
    "load_verdicts",
    "parse_verdict",
]

JUDGE_TASKS = ("qa", "caption")

QA_TEMPLATE_VERSION = "qa_v1"
CAPTION_TEMPLATE_VERSION = "caption_v1"

_FORMAT_REMINDERS = {
    "qa": (
        "Reminder: your previous reply could not be parsed. Reply with exactly one "
        'line of JSON of the form {"correct": "yes", "score": 3} and no other text.'
    ),
    "caption": (
        "Reminder: your previous reply could not be parsed. Reply with exactly one "
        'line of JSON of the form {"precision": 3, "coverage": 3} and no other text.'
    ),
}


class JudgeError(RuntimeError):
    """Provider failure or invalid judge configuration."""


@dataclass(frozen=True, slots=True)
class JudgePrompt:
    task: str
    system_text: str
    user_text: str
    item_id: str


@dataclass(slots=True)
class JudgeVerdict:
    item_id: str
    correct: bool | None = None
    match: int | None = None
    precision: int | None = None
    coverage: int | None = None
    raw_reply: str = ""
    attempts: int = 1
    valid: bool = False


@dataclass(slots=True)
class JudgeConfig:
    model_name: str
    provider_endpoint: str | None = None
    temperature: float = 0.0
    max_attempts: int = 3
    parallelism: int = 1
    cache_dir: str | Path | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise JudgeError("temperature must be >= 0")
        if self.max_attempts < 1:
            raise JudgeError("max_attempts must be >= 1")
        if self.parallelism < 1:
            raise JudgeError("parallelism must be >= 1")


@dataclass(slots=True)
class JudgeReport:
    task: str
    n_items: int
    n_valid: int
    accuracy: float | None = None
    mean_match: float | None = None
    mean_precision: float | None = None
    mean_coverage: float | None = None


def _load_template(version: str) -> dict:
    data = resources.files("videval").joinpath(f"judge_templates/{version}.json").read_text("utf-8")
    return json.loads(data)


_TEMPLATE_CACHE: dict[str, dict] = {}


def _template(version: str) -> dict:
    if version not in _TEMPLATE_CACHE:
        _TEMPLATE_CACHE[version] = _load_template(version)
    return _TEMPLATE_CACHE[version]


def build_qa_prompt(item: QaItem, prediction) -> JudgePrompt:
    """QA grading prompt asking for {"correct": yes|no, "score": 1-5}.

    Question, ground-truth answer, and the raw predicted answer are
    embedded verbatim between data delimiters.
    """
    if item.item_id != prediction.item_id:
        raise JudgeError(f"item_id mismatch: {item.item_id!r} vs {prediction.item_id!r}")
    tpl = _template(QA_TEMPLATE_VERSION)
    user = string.Template(tpl["user"]).substitute(
        question=item.question, answer=item.answer, prediction=prediction.response
    )
    return JudgePrompt(task="qa", system_text=tpl["system"], user_text=user, item_id=item.item_id)


def build_caption_prompt(item: CaptionItem, prediction) -> JudgePrompt:
    """Caption grading prompt asking for {"precision": 1-5, "coverage": 1-5}."""
    if item.item_id != prediction.item_id:
        raise JudgeError(f"item_id mismatch: {item.item_id!r} vs {prediction.item_id!r}")
    tpl = _template(CAPTION_TEMPLATE_VERSION)
    references = "\n".join(f"- {ref}" for ref in item.references)
    user = string.Template(tpl["user"]).substitute(
        references=references, prediction=prediction.response
    )
    return JudgePrompt(task="caption", system_text=tpl["system"], user_text=user, item_id=item.item_id)


def _first_json_object(text: str):
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except ValueError:
            continue
        return obj
    return None


def _as_score(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        score = value
    elif isinstance(value, float) and value.is_integer():
        score = int(value)
    else:
        return None
    return score if 1 <= score <= 5 else None


def _as_flag(value) -> bool | None:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered == "yes":
            return True
        if lowered == "no":
            return False
    return None


def parse_verdict(raw_reply: str, task: str) -> dict | None:
    """Extract verdict fields from a judge reply, or None on failure.

    The first JSON object found in the reply decides the verdict;
    leading/trailing chatter is tolerated. Missing keys or out-of-range
    scores are parse failures (which drive retries upstream).
    """
    if task not in JUDGE_TASKS:
        raise JudgeError(f"unknown judge task '{task}'")
    obj = _first_json_object(raw_reply)
    if not isinstance(obj, dict):
        return None
    if task == "qa":
        correct = _as_flag(obj.get("correct"))
        match = _as_score(obj.get("score"))
        if correct is None or match is None:
            return None
        return {"correct": correct, "match": match}
    precision = _as_score(obj.get("precision"))
    coverage = _as_score(obj.get("coverage"))
    if precision is None or coverage is None:
        return None
    return {"precision": precision, "coverage": coverage}


class MockJudgeProvider:
    """Deterministic offline judge: the reply is a pure function of the
    prompt (a digest-derived verdict), so runs are reproducible without
    network access. Counts calls for cache-soundness checks."""

    def __init__(self, reply_fn=None):
        self.calls = 0
        self._lock = threading.Lock()
        self._reply_fn = reply_fn or _digest_reply

    def complete(self, messages, *, model, temperature):
        with self._lock:
            self.calls += 1
        return self._reply_fn(messages)


def _digest_reply(messages) -> str:
    user_text = next((m["content"] for m in messages if m.get("role") == "user"), "")
    digest = hashlib.sha256(user_text.encode("utf-8")).digest()
    if '"precision"' in user_text:
        return json.dumps(
            {"precision": 1 + digest[0] % 5, "coverage": 1 + digest[1] % 5}
        )
    return json.dumps(
        {"correct": "yes" if digest[0] % 2 == 0 else "no", "score": 1 + digest[1] % 5}
    )


class HttpJudgeProvider:
    """Chat-completion endpoint client.

    POSTs {"model", "temperature", "messages"} and reads the assistant
    text from choices[0].message.content. Credentials come from the
    environment (VIDEVAL_JUDGE_API_KEY) rather than configuration files.
    """

    def __init__(self, endpoint: str, *, timeout: float = 60.0, transport_retries: int = 3):
        self.endpoint = endpoint
        self.timeout = timeout
        self.transport_retries = transport_retries
        self.calls = 0

    def complete(self, messages, *, model, temperature):
        self.calls += 1
        payload = {"model": model, "temperature": temperature, "messages": messages}
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get("VIDEVAL_JUDGE_API_KEY")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error = None
        for _ in range(self.transport_retries):
            try:
                resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise JudgeError(
            f"judge provider unreachable after {self.transport_retries} attempts: {last_error}"
        ) from last_error


def _cache_key(model_name: str, prompt: JudgePrompt) -> str:
    payload = "\x00".join([model_name, prompt.task, prompt.system_text, prompt.user_text])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _cache_load(cache_dir: Path, key: str, item_id: str) -> JudgeVerdict | None:
    path = cache_dir / f"{key}.json"
    if not path.exists():
        return None
    try:
        entry = json.loads(path.read_text("utf-8"))
        verdict = JudgeVerdict(
            item_id=item_id,
            raw_reply=entry["raw_reply"],
            attempts=int(entry["attempts"]),
            valid=bool(entry["valid"]),
        )
        fields = entry["fields"]
        if verdict.valid:
            if not isinstance(fields, dict):
                raise ValueError("missing fields")
            verdict.correct = fields.get("correct")
            verdict.match = fields.get("match")
            verdict.precision = fields.get("precision")
            verdict.coverage = fields.get("coverage")
        return verdict
    except (ValueError, KeyError, TypeError):
        # corrupt entry: discard and recompute
        path.unlink(missing_ok=True)
        return None


def _cache_store(cache_dir: Path, key: str, verdict: JudgeVerdict) -> None:
    fields = None
    if verdict.valid:
        fields = {
            k: v
            for k, v in (
                ("correct", verdict.correct),
                ("match", verdict.match),
                ("precision", verdict.precision),
                ("coverage", verdict.coverage),
            )
            if v is not None
        }
    entry = {
        "raw_reply": verdict.raw_reply,
        "attempts": verdict.attempts,
        "valid": verdict.valid,
        "fields": fields,
    }
    # atomic write so concurrent evaluators on disjoint items are safe
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, cache_dir / f"{key}.json")
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _build_prompt(pair: EvalPair, task: str) -> JudgePrompt:
    if task == "qa":
        if not isinstance(pair.ground_truth, QaItem):
            raise JudgeError(f"qa task requires QaItem ground truth, got {type(pair.ground_truth).__name__}")
        return build_qa_prompt(pair.ground_truth, pair.prediction)
    if not isinstance(pair.ground_truth, CaptionItem):
        raise JudgeError(
            f"caption task requires CaptionItem ground truth, got {type(pair.ground_truth).__name__}"
        )
    return build_caption_prompt(pair.ground_truth, pair.prediction)


def _judge_one(prompt: JudgePrompt, config: JudgeConfig, provider, cache_dir: Path | None) -> JudgeVerdict:
    key = _cache_key(config.model_name, prompt)
    if cache_dir is not None:
        cached = _cache_load(cache_dir, key, prompt.item_id)
        if cached is not None:
            return cached

    user_text = prompt.user_text
    verdict = JudgeVerdict(item_id=prompt.item_id)
    for attempt in range(1, config.max_attempts + 1):
        messages = [
            {"role": "system", "content": prompt.system_text},
            {"role": "user", "content": user_text},
        ]
        raw = provider.complete(messages, model=config.model_name, temperature=config.temperature)
        verdict.raw_reply = raw
        verdict.attempts = attempt
        fields = parse_verdict(raw, prompt.task)
        if fields is not None:
            verdict.valid = True
            for name, value in fields.items():
                setattr(verdict, name, value)
            break
        user_text = prompt.user_text + "\n\n" + _FORMAT_REMINDERS[prompt.task]

    if cache_dir is not None:
        _cache_store(cache_dir, key, verdict)
    return verdict


def evaluate(pairs, config: JudgeConfig, task: str, provider) -> tuple[list[JudgeVerdict], JudgeReport]:
    """Judge every pair and aggregate a report.

    Cache lookups are keyed by hash(model_name, task, prompt text), so
    template or model changes invalidate stale entries. Parse failures
    retry with an appended format reminder up to max_attempts; items
    still failing are marked invalid and excluded from the report means
    (not scored 1). The verdict list follows input order regardless of
    parallelism; a provider transport failure aborts the run with the
    cache entries written so far intact.
    """
    if task not in JUDGE_TASKS:
        raise JudgeError(f"unknown judge task '{task}'")
    cache_dir = None
    if config.cache_dir is not None:
        cache_dir = Path(config.cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)

    prompts = [_build_prompt(pair, task) for pair in pairs]

    if config.parallelism == 1 or len(prompts) <= 1:
        verdicts = [_judge_one(p, config, provider, cache_dir) for p in prompts]
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            verdicts = list(pool.map(lambda p: _judge_one(p, config, provider, cache_dir), prompts))

    return verdicts, summarize(verdicts, task)


def summarize(verdicts, task: str) -> JudgeReport:
    """Aggregate valid verdicts; undefined means stay None, never 0."""
    valid = [v for v in verdicts if v.valid]
    report = JudgeReport(task=task, n_items=len(verdicts), n_valid=len(valid))
    if not valid:
        return report
    if task == "qa":
        report.accuracy = 100.0 * sum(1 for v in valid if v.correct) / len(valid)
        report.mean_match = sum(v.match for v in valid) / len(valid)
    else:
        report.mean_precision = sum(v.precision for v in valid) / len(valid)
        report.mean_coverage = sum(v.coverage for v in valid) / len(valid)
    return report


def verdict_to_dict(verdict: JudgeVerdict) -> dict:
    return {
        "item_id": verdict.item_id,
        "correct": verdict.correct,
        "match": verdict.match,
        "precision": verdict.precision,
        "coverage": verdict.coverage,
        "raw_reply": verdict.raw_reply,
        "attempts": verdict.attempts,
        "valid": verdict.valid,
    }


def dump_verdicts(verdicts, path) -> None:
    """Line-delimited verdict dump in input order (byte-stable)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for verdict in verdicts:
            fh.write(json.dumps(verdict_to_dict(verdict), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_verdicts(path) -> list[JudgeVerdict]:
    path = Path(path)
    verdicts = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                verdicts.append(
                    JudgeVerdict(
                        item_id=obj["item_id"],
                        correct=obj.get("correct"),
                        match=obj.get("match"),
                        precision=obj.get("precision"),
                        coverage=obj.get("coverage"),
                        raw_reply=obj.get("raw_reply", ""),
                        attempts=obj.get("attempts", 1),
                        valid=bool(obj.get("valid", False)),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise JudgeError(f"{path}:{lineno}: malformed verdict record: {exc}") from exc
    return verdicts
