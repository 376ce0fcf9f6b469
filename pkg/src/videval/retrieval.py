"""Embedding-similarity evaluation: caption retrieval in both directions
and closed-set action recognition.

Texts are embedded through a pluggable provider (a precomputed vector
file for offline/deterministic runs, or an HTTP endpoint), unit
normalized, ranked by cosine similarity, and scored as top-k accuracy
with a deterministic lower-index tie rule. Zero vectors (empty texts or
degenerate provider output) are flagged and poisoned with a -inf
sentinel so they always count as misses.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .corpus import LabelSet, join

__all__ = [
    "EmbeddingVector",
    "FileEmbeddingProvider",
    "HttpEmbeddingProvider",
    "RetrievalError",
    "RetrievalReport",
    "SimilarityMatrix",
    "embed_batch",
    "eval_action",
    "eval_t2v",
    "eval_v2t",
    "similarity_matrix",
    "text_key",
    "topk_accuracy",
]

NEG_INF = float("-inf")


class RetrievalError(ValueError):
    """Provider failure, schema violation, or shape mismatch."""


@dataclass(slots=True)
class EmbeddingVector:
    """Unit-normalized embedding, or a flagged all-zero vector."""

    values: np.ndarray
    is_zero: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(slots=True)
class SimilarityMatrix:
    """Pairwise cosine scores; rows are queries, columns candidates.
    Rows/columns involving a zero vector hold the -inf sentinel."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise RetrievalError("similarity matrix must be 2-D")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(slots=True)
class RetrievalReport:
    direction: str
    top_k_accuracy: dict[int, float]
    n_queries: int
    metadata: dict = field(default_factory=dict)


def text_key(text: str) -> str:
    """Lookup key for precomputed vector files: sha256 of the raw text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> list[Sequence[float]]: ...


class FileEmbeddingProvider:
    """Precomputed vectors from a JSON Lines file of
    {"text_sha256": hex, "vector": [...]} records. A pure lookup:
    deterministic and offline, used by all tests."""

    def __init__(self, path):
        self.path = Path(path)
        self._vectors: dict[str, list[float]] = {}
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = obj["text_sha256"]
                    vector = [float(x) for x in obj["vector"]]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise RetrievalError(f"{self.path}:{lineno}: malformed vector record: {exc}") from exc
                if key in self._vectors and self._vectors[key] != vector:
                    raise RetrievalError(f"{self.path}:{lineno}: conflicting vectors for key {key}")
                self._vectors[key] = vector

    def embed(self, texts):
        out = []
        for text in texts:
            key = text_key(text)
            if key not in self._vectors:
                preview = text if len(text) <= 60 else text[:57] + "..."
                raise RetrievalError(f"no precomputed vector for text {preview!r} (sha256 {key})")
            out.append(self._vectors[key])
        return out


class HttpEmbeddingProvider:
    """Embedding endpoint speaking {"input": [...]} ->
    {"data": [{"embedding": [...]}, ...]} in input order. Credentials
    come from the environment (VIDEVAL_EMBEDDING_API_KEY)."""

    def __init__(self, endpoint: str, *, timeout: float = 60.0, transport_retries: int = 3):
        self.endpoint = endpoint
        self.timeout = timeout
        self.transport_retries = transport_retries
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get("VIDEVAL_EMBEDDING_API_KEY")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error = None
        for _ in range(self.transport_retries):
            try:
                resp = requests.post(
                    self.endpoint, json={"input": list(texts)}, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                data = resp.json()["data"]
                if len(data) != len(texts):
                    raise RetrievalError(
                        f"embedding endpoint returned {len(data)} vectors for {len(texts)} texts"
                    )
                return [entry["embedding"] for entry in data]
            except RetrievalError:
                raise
            except (requests.RequestException, KeyError, TypeError, ValueError) as exc:
                last_error = exc
        raise RetrievalError(
            f"embedding provider unreachable after {self.transport_retries} attempts: {last_error}"
        ) from last_error


def embed_batch(texts: Sequence[str], provider) -> list[EmbeddingVector]:
    """Embed texts, preserving order and unit-normalizing each vector.

    Empty (or whitespace-only) texts never reach the provider; they
    become flagged zero vectors, as do vectors the provider returns with
    zero norm. A batch with no embeddable text has no defined dimension
    and is an error.
    """
    nonempty = [i for i, t in enumerate(texts) if t.strip()]
    if not nonempty:
        raise RetrievalError("cannot embed a batch with no non-empty texts")
    raw = provider.embed([texts[i] for i in nonempty])

    dim = len(raw[0])
    if dim < 1:
        raise RetrievalError("provider returned an empty vector")
    vectors: list[EmbeddingVector | None] = [None] * len(texts)
    for slot, i in enumerate(nonempty):
        values = np.asarray(raw[slot], dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != dim:
            raise RetrievalError(
                f"dimension mismatch within batch: expected {dim}, got {values.shape}"
            )
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            vectors[i] = EmbeddingVector(values=np.zeros(dim), is_zero=True)
        else:
            vectors[i] = EmbeddingVector(values=values / norm)
    zero = np.zeros(dim)
    for i in range(len(texts)):
        if vectors[i] is None:
            vectors[i] = EmbeddingVector(values=zero.copy(), is_zero=True)
    return vectors


def _stack(vectors: Sequence[EmbeddingVector], dim: int) -> tuple[np.ndarray, np.ndarray]:
    for v in vectors:
        if v.dim != dim:
            raise RetrievalError(f"dimension mismatch: expected {dim}, got {v.dim}")
    matrix = np.stack([v.values for v in vectors]) if vectors else np.zeros((0, dim))
    zero_mask = np.array([v.is_zero for v in vectors], dtype=bool)
    return matrix, zero_mask


def similarity_matrix(queries: Sequence[EmbeddingVector], candidates: Sequence[EmbeddingVector]) -> SimilarityMatrix:
    """Cosine similarity of unit vectors: entry (i, j) = q_i . c_j."""
    if not queries or not candidates:
        raise RetrievalError("similarity_matrix requires non-empty query and candidate lists")
    dim = queries[0].dim
    q, q_zero = _stack(queries, dim)
    c, c_zero = _stack(candidates, dim)
    values = q @ c.T
    values[q_zero, :] = NEG_INF
    values[:, c_zero] = NEG_INF
    return SimilarityMatrix(values=values)


def topk_accuracy(sim: SimilarityMatrix, truth, ks: Sequence[int], *, direction: str = "t2v") -> RetrievalReport:
    """Percent of queries whose correct candidate ranks within the top k.

    Ranking sorts candidates by similarity descending, breaking ties by
    lower candidate index. Rows whose correct entry is the -inf sentinel
    count as misses at every k.
    """
    values = sim.values
    n_queries, n_candidates = values.shape
    if n_queries == 0:
        raise RetrievalError("no queries to score")
    for k in ks:
        if not 1 <= k <= n_candidates:
            raise RetrievalError(f"k={k} outside [1, {n_candidates}]")

    ranks = np.empty(n_queries, dtype=np.int64)
    reachable = np.empty(n_queries, dtype=bool)
    for i in range(n_queries):
        try:
            t = truth[i]
        except (KeyError, IndexError) as exc:
            raise RetrievalError(f"truth not defined for query {i}") from exc
        if not 0 <= t < n_candidates:
            raise RetrievalError(f"truth index {t} for query {i} outside [0, {n_candidates})")
        row = values[i]
        target = row[t]
        if target == NEG_INF:
            reachable[i] = False
            ranks[i] = n_candidates
            continue
        reachable[i] = True
        ranks[i] = int(np.count_nonzero(row > target) + np.count_nonzero(row[:t] == target))

    accuracy = {
        int(k): 100.0 * float(np.count_nonzero(reachable & (ranks < k))) / n_queries for k in ks
    }
    return RetrievalReport(direction=direction, top_k_accuracy=accuracy, n_queries=n_queries)


def _clamped_topk(sim: SimilarityMatrix, truth, ks: Sequence[int], direction: str) -> RetrievalReport:
    # requested k beyond the candidate pool is scored at k = pool size,
    # keeping top-5 reportable for tiny galleries
    clamped = sorted({min(int(k), sim.cols) for k in ks})
    report = topk_accuracy(sim, truth, clamped, direction=direction)
    report.top_k_accuracy = {int(k): report.top_k_accuracy[min(int(k), sim.cols)] for k in ks}
    return report


def _sample_gallery(pairs, gallery_size, seed):
    if gallery_size is None or gallery_size >= len(pairs):
        return pairs
    if gallery_size < 1:
        raise RetrievalError("gallery_size must be >= 1")
    rng = random.Random(seed)
    keep = sorted(rng.sample(range(len(pairs)), gallery_size))
    return [pairs[i] for i in keep]


def eval_t2v(
    captions,
    predictions,
    provider,
    *,
    policy: str = "strict",
    ks: Sequence[int] = (1, 5),
    gallery_size: int | None = None,
    gallery_seed: int = 0,
) -> RetrievalReport:
    """Ground-truth text retrieves the predicted caption.

    Queries are each item's first reference; candidates are the joined
    predictions; each query's correct candidate is its own item.
    """
    pairs, summary = join(captions, predictions, policy=policy)
    pairs = _sample_gallery(pairs, gallery_size, gallery_seed)
    queries = embed_batch([p.ground_truth.references[0] for p in pairs], provider)
    candidates = embed_batch([p.prediction.response for p in pairs], provider)
    report = _clamped_topk(similarity_matrix(queries, candidates), range(len(pairs)), ks, "t2v")
    report.metadata.update(
        {"reference_policy": "first", "n_joined": summary.n_pairs, "gallery_size": len(pairs)}
    )
    return report


def eval_v2t(
    captions,
    predictions,
    provider,
    *,
    policy: str = "strict",
    ks: Sequence[int] = (1, 5),
    gallery_size: int | None = None,
    gallery_seed: int = 0,
) -> RetrievalReport:
    """Predicted caption retrieves the ground-truth text (mirror of
    :func:`eval_t2v` with query/candidate roles swapped)."""
    pairs, summary = join(captions, predictions, policy=policy)
    pairs = _sample_gallery(pairs, gallery_size, gallery_seed)
    queries = embed_batch([p.prediction.response for p in pairs], provider)
    candidates = embed_batch([p.ground_truth.references[0] for p in pairs], provider)
    report = _clamped_topk(similarity_matrix(queries, candidates), range(len(pairs)), ks, "v2t")
    report.metadata.update(
        {"reference_policy": "first", "n_joined": summary.n_pairs, "gallery_size": len(pairs)}
    )
    return report


def eval_action(
    items,
    predictions,
    labels: LabelSet,
    provider,
    *,
    policy: str = "strict",
    ks: Sequence[int] = (1, 5),
) -> RetrievalReport:
    """Closed-set action recognition by similarity ranking.

    Each predicted response is embedded and scored against every label
    embedding; the correct candidate is the index of the item's
    ground-truth label in the label set.
    """
    if not labels.labels:
        raise RetrievalError("label set is empty")
    pairs, summary = join(items, predictions, policy=policy)
    label_index = {label: i for i, label in enumerate(labels.labels)}
    truth = []
    for pair in pairs:
        if pair.ground_truth.label not in label_index:
            raise RetrievalError(
                f"item '{pair.ground_truth.item_id}' label {pair.ground_truth.label!r} "
                f"not in label set '{labels.dataset_id}'"
            )
        truth.append(label_index[pair.ground_truth.label])
    queries = embed_batch([p.prediction.response for p in pairs], provider)
    candidates = embed_batch(list(labels.labels), provider)
    report = _clamped_topk(similarity_matrix(queries, candidates), truth, ks, "action")
    report.metadata.update({"n_joined": summary.n_pairs, "n_labels": len(labels.labels)})
    return report
