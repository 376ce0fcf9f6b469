#!/usr/bin/env python3
"""Regenerate the bundled fixture corpus under fixtures/.

The embedding vector file uses a digest-derived recipe: 16 floats from
the sha256 of the text, shifted to be roughly zero-mean. Identical texts
get identical vectors and distinct texts get distinct ones, which is all
the offline retrieval fixtures rely on.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

MODEL = "demo-vlm"

QA_ITEMS = [
    ("q1", "v1", "who is riding the horse?", "man", "a man"),
    ("q2", "v1", "what color is the horse?", "brown", "brown"),
    ("q3", "v2", "how many dogs are playing?", "two", "three"),
    ("q4", "v2", "what are the dogs playing with?", "ball", "a red ball"),
    ("q5", "v3", "where is the woman cooking?", "kitchen", ""),
    ("q6", "v3", "what is the woman cutting?", "onion", "an onion on a cutting board"),
]

CAPTION_ITEMS = [
    (
        "c1",
        "v1",
        ["a man is riding a horse across a field", "a man rides a brown horse"],
        "a man is riding a horse across a field",
    ),
    (
        "c2",
        "v2",
        ["two dogs are playing with a ball in the yard"],
        "two dogs play with a ball outside",
    ),
    (
        "c3",
        "v3",
        ["a woman is chopping onions in a kitchen", "a woman cuts vegetables"],
        "a person is slicing an onion in a kitchen",
    ),
    (
        "c4",
        "v4",
        ["a group of children are playing soccer"],
        "children are playing football on a field",
    ),
    (
        "c5",
        "v5",
        ["a chef is frying rice in a large pan"],
        "someone is cooking food in a wok",
    ),
    (
        "c6",
        "v6",
        ["an old man is playing the guitar on stage"],
        "a man plays an acoustic guitar",
    ),
]

ACTION_LABELS = [
    "brushing hair",
    "cartwheel",
    "climbing stairs",
    "riding horse",
    "playing guitar",
    "cooking",
    "running",
    "swimming",
]

ACTION_ITEMS = [
    ("a1", "v1", "riding horse", "riding horse"),
    ("a2", "v6", "playing guitar", "playing guitar"),
    ("a3", "v5", "cooking", "running"),
    ("a4", "v7", "running", "running"),
    ("a5", "v8", "swimming", "the person is swimming in a pool"),
    ("a6", "v9", "cartwheel", "cartwheel"),
]

# plausible hand-entered human scores for the demo corpus
HUMAN_QA = {
    "q1": {"correctness": 1, "match": 5},
    "q2": {"correctness": 1, "match": 5},
    "q3": {"correctness": 0, "match": 2},
    "q4": {"correctness": 1, "match": 4},
    "q5": {"correctness": 0, "match": 1},
    "q6": {"correctness": 1, "match": 4},
}

HUMAN_CAPTION = {
    "c1": {"precision": 5, "coverage": 5},
    "c2": {"precision": 4, "coverage": 4},
    "c3": {"precision": 4, "coverage": 3},
    "c4": {"precision": 3, "coverage": 3},
    "c5": {"precision": 2, "coverage": 2},
    "c6": {"precision": 4, "coverage": 3},
}


def digest_vector(text: str, dim: int = 16) -> list[float]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [round((digest[i] - 127.5) / 127.5, 6) for i in range(dim)]


def write_jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {path}")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    write_jsonl(
        FIXTURES / "msvd_qa.jsonl",
        [
            {"item_id": i, "video_id": v, "question": q, "answer": a}
            for i, v, q, a, _ in QA_ITEMS
        ],
    )
    write_jsonl(
        FIXTURES / "predictions_msvd_qa.jsonl",
        [
            {"model_id": MODEL, "dataset_id": "msvd-qa", "item_id": i, "response": r}
            for i, _, _, _, r in QA_ITEMS
        ],
    )
    write_jsonl(
        FIXTURES / "msvd_caption.jsonl",
        [
            {"item_id": i, "video_id": v, "references": refs}
            for i, v, refs, _ in CAPTION_ITEMS
        ],
    )
    write_jsonl(
        FIXTURES / "predictions_msvd_caption.jsonl",
        [
            {"model_id": MODEL, "dataset_id": "msvd-cap", "item_id": i, "response": r}
            for i, _, _, r in CAPTION_ITEMS
        ],
    )
    write_jsonl(
        FIXTURES / "hmdb51_labels.jsonl",
        [{"dataset_id": "hmdb51", "labels": ACTION_LABELS}],
    )
    write_jsonl(
        FIXTURES / "hmdb51_actions.jsonl",
        [{"item_id": i, "video_id": v, "label": l} for i, v, l, _ in ACTION_ITEMS],
    )
    write_jsonl(
        FIXTURES / "predictions_hmdb51.jsonl",
        [
            {"model_id": MODEL, "dataset_id": "hmdb51", "item_id": i, "response": r}
            for i, _, _, r in ACTION_ITEMS
        ],
    )
    write_jsonl(
        FIXTURES / "human_msvd_qa.jsonl",
        [
            {"item_id": i, "metric": metric, "human_value": value}
            for i in sorted(HUMAN_QA)
            for metric, value in sorted(HUMAN_QA[i].items())
        ],
    )
    write_jsonl(
        FIXTURES / "human_msvd_caption.jsonl",
        [
            {"item_id": i, "metric": metric, "human_value": value}
            for i in sorted(HUMAN_CAPTION)
            for metric, value in sorted(HUMAN_CAPTION[i].items())
        ],
    )

    texts: set[str] = set(ACTION_LABELS)
    for _, _, refs, response in CAPTION_ITEMS:
        texts.update(refs)
        texts.add(response)
    for _, _, _, response in ACTION_ITEMS:
        if response.strip():
            texts.add(response)
    write_jsonl(
        FIXTURES / "vectors.jsonl",
        [
            {
                "text_sha256": hashlib.sha256(t.encode("utf-8")).hexdigest(),
                "vector": digest_vector(t),
            }
            for t in sorted(texts)
        ],
    )


if __name__ == "__main__":
    main()
