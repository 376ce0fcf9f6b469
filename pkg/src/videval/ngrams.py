"""Conventional caption metrics over a shared word tokenizer.

Self-contained sentence-level BLEU-4 and ROUGE-L, a stemming-free METEOR
variant (``meteor_lite``: exact matches only, no WordNet), and
corpus-level CIDEr-D with count clipping and a Gaussian length penalty.
BLEU/ROUGE/METEOR return scores in [0, 1]; CIDEr-D is on its usual
10-point scale.

All metrics consume token sequences produced by :func:`tokenize`; judge
prompts never go through this normalization.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = [
    "CorpusStats",
    "MetricError",
    "bleu4",
    "cider_d",
    "corpus_stats",
    "lcs_length",
    "meteor_lite",
    "modified_precision",
    "rouge_l",
    "score_caption_corpus",
    "tokenize",
]

TokenSequence = Sequence[str]


class MetricError(ValueError):
    """Invalid metric input (empty reference list, key mismatch)."""


def tokenize(text: str) -> list[str]:
    """Compatibility-normalize, lowercase, strip punctuation, split.

    Punctuation characters (Unicode category P*) become spaces, so
    "A man, RUNNING." -> [a, man, running]. Empty input yields an empty
    sequence. Idempotent on its own space-joined output.
    """
    text = unicodedata.normalize("NFKC", text).lower()
    cleaned = "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in text)
    return cleaned.split()


def _ngram_counts(tokens: TokenSequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def lcs_length(a: TokenSequence, b: TokenSequence) -> int:
    """Longest common subsequence length, O(len(a) * len(b))."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def _clipped_counts(candidate: TokenSequence, references: Sequence[TokenSequence], n: int) -> tuple[int, int]:
    cand = _ngram_counts(candidate, n)
    total = sum(cand.values())
    if total == 0:
        return 0, 0
    max_ref: Counter = Counter()
    for ref in references:
        for gram, count in _ngram_counts(ref, n).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    clipped = sum(min(count, max_ref.get(gram, 0)) for gram, count in cand.items())
    return clipped, total


def modified_precision(candidate: TokenSequence, references: Sequence[TokenSequence], n: int) -> float:
    """Clipped n-gram precision: candidate counts are capped by the
    maximum count of the same n-gram in any single reference."""
    clipped, total = _clipped_counts(candidate, references, n)
    return clipped / total if total else 0.0


def _closest_reference_length(c: int, references: Sequence[TokenSequence]) -> int:
    return min((abs(len(ref) - c), len(ref)) for ref in references)[1]


def bleu4(candidate: TokenSequence, references: Sequence[TokenSequence], *, smooth: bool = False) -> float:
    """Sentence BLEU-4.

    Geometric mean of clipped n-gram precisions for n = 1..4 with uniform
    weights, times the brevity penalty exp(1 - r/c) when the candidate
    (length c) is shorter than the closest reference length r (ties go to
    the shorter reference). With no smoothing (the default) any zero
    precision zeroes the score, so candidates under 4 tokens score 0.
    ``smooth=True`` applies add-one smoothing to orders n >= 2.
    """
    if not references:
        raise MetricError("bleu4 requires at least one reference")
    c = len(candidate)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        clipped, total = _clipped_counts(candidate, references, n)
        if smooth and n > 1:
            p = (clipped + 1) / (total + 1)
        else:
            p = clipped / total if total else 0.0
        if p == 0.0:
            return 0.0
        log_sum += math.log(p)
    r = _closest_reference_length(c, references)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / 4.0)


def rouge_l(candidate: TokenSequence, references: Sequence[TokenSequence]) -> float:
    """ROUGE-L F1 (beta = 1), maximized over references.

    For each reference with LCS length l: P = l/|c|, R = l/|r|,
    F1 = 2PR/(P+R), defined as 0 when P + R = 0.
    """
    if not references:
        raise MetricError("rouge_l requires at least one reference")
    best = 0.0
    for ref in references:
        ell = lcs_length(candidate, ref)
        p = ell / len(candidate) if candidate else 0.0
        r = ell / len(ref) if ref else 0.0
        f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        if f1 > best:
            best = f1
    return best


def _alignment_stats(candidate: TokenSequence, reference: TokenSequence, beam: int = 256) -> tuple[int, int]:
    """Exact-match unigram alignment: (matches, minimal chunk count).

    The match count is fixed at sum_w min(count_c(w), count_r(w)); among
    alignments achieving it we minimize the number of chunks (maximal
    runs contiguous on both sides). Minimizing chunks exactly is a
    combinatorial search over which occurrences of repeated tokens pair
    up; this beam search is exact for caption-length inputs and degrades
    gracefully on adversarially repetitive ones.
    """
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    quota = {w: min(c, ref_counts[w]) for w, c in cand_counts.items() if w in ref_counts}
    matches = sum(quota.values())
    if matches == 0:
        return 0, 0

    ref_positions: dict[str, list[int]] = {}
    token_mask: dict[str, int] = {}
    for j, w in enumerate(reference):
        if w in quota:
            ref_positions.setdefault(w, []).append(j)
            token_mask[w] = token_mask.get(w, 0) | (1 << j)

    # occurrences of candidate[i]'s token strictly after position i
    later = [0] * len(candidate)
    running: Counter = Counter()
    for i in range(len(candidate) - 1, -1, -1):
        later[i] = running[candidate[i]]
        running[candidate[i]] += 1

    # state: (mask of used reference positions, reference index matched at
    # the previous candidate position or None) -> minimal chunks so far
    states: dict[tuple[int, int | None], int] = {(0, None): 0}
    for i, w in enumerate(candidate):
        new_states: dict[tuple[int, int | None], int] = {}

        def offer(key, chunks):
            old = new_states.get(key)
            if old is None or chunks < old:
                new_states[key] = chunks

        q = quota.get(w, 0)
        for (mask, adj), chunks in states.items():
            used_w = (mask & token_mask[w]).bit_count() if q else 0
            if q - used_w <= later[i]:
                offer((mask, None), chunks)
            if used_w < q:
                for j in ref_positions[w]:
                    if mask >> j & 1:
                        continue
                    cont = adj is not None and j == adj + 1
                    offer((mask | (1 << j), j), chunks if cont else chunks + 1)
        if len(new_states) > beam:
            kept = sorted(new_states.items(), key=lambda kv: kv[1])[:beam]
            new_states = dict(kept)
        states = new_states

    return matches, min(states.values())


def meteor_lite(
    candidate: TokenSequence,
    references: Sequence[TokenSequence],
    *,
    alpha: float = 0.9,
    beta: float = 3.0,
    gamma: float = 0.5,
) -> float:
    """METEOR restricted to exact unigram matches (no stemming/synonymy).

    Per reference: Fmean = P*R / (alpha*P + (1-alpha)*R) over the aligned
    match count, with fragmentation penalty gamma * (chunks/matches)**beta;
    score = Fmean * (1 - penalty), 0 when nothing matches. The maximum
    over references is returned.
    """
    if not references:
        raise MetricError("meteor_lite requires at least one reference")
    best = 0.0
    for ref in references:
        matches, chunks = _alignment_stats(candidate, ref)
        if matches == 0:
            continue
        p = matches / len(candidate)
        r = matches / len(ref)
        fmean = p * r / (alpha * p + (1.0 - alpha) * r)
        penalty = gamma * (chunks / matches) ** beta
        score = fmean * (1.0 - penalty)
        if score > best:
            best = score
    return best


@dataclass(frozen=True, slots=True)
class CorpusStats:
    """Reference-set document frequencies backing the CIDEr-D IDF."""

    document_count: int
    document_frequency: dict


def corpus_stats(references_by_id: Mapping[str, Sequence[TokenSequence]], n_max: int = 4) -> CorpusStats:
    """Count, per n-gram, how many items' reference sets contain it."""
    df: dict = {}
    for refs in references_by_id.values():
        seen = set()
        for ref in refs:
            for n in range(1, n_max + 1):
                seen.update(_ngram_counts(ref, n))
        for gram in seen:
            df[gram] = df.get(gram, 0) + 1
    return CorpusStats(document_count=len(references_by_id), document_frequency=df)


def cider_d(
    candidates: Mapping[str, TokenSequence],
    references: Mapping[str, Sequence[TokenSequence]],
    *,
    sigma: float = 6.0,
    n_max: int = 4,
) -> tuple[dict[str, float], float]:
    """CIDEr-D over an evaluated corpus: per-item scores in [0, 10] and
    their mean.

    Per n in 1..n_max the candidate and each reference are mapped to
    TF-IDF vectors (IDF = log(N / df), df over reference sets, unseen
    n-grams use df = 1); similarity is the reference-clipped dot product
    min(c_g, r_g) * r_g over the norm product, times the length penalty
    exp(-(|c| - |r|)^2 / (2 sigma^2)); zero-norm vectors contribute 0.
    Averaged over references, then over n, scaled by 10. IDF is
    degenerate below 2 items (log 1 = 0 zeroes every vector).
    """
    if set(candidates) != set(references):
        only_c = sorted(set(candidates) - set(references))
        only_r = sorted(set(references) - set(candidates))
        raise MetricError(
            f"candidate/reference key mismatch (candidates only: {only_c}, references only: {only_r})"
        )
    if not candidates:
        raise MetricError("cider_d requires a non-empty corpus")

    stats = corpus_stats(references, n_max)
    log_docs = math.log(max(stats.document_count, 1))
    df = stats.document_frequency

    def tfidf(tokens: TokenSequence):
        vectors = []
        norms_sq = []
        for n in range(1, n_max + 1):
            vec = {}
            norm_sq = 0.0
            for gram, count in _ngram_counts(tokens, n).items():
                weight = count * (log_docs - math.log(max(df.get(gram, 1), 1)))
                vec[gram] = weight
                norm_sq += weight * weight
            vectors.append(vec)
            norms_sq.append(norm_sq)
        return vectors, norms_sq

    scores: dict[str, float] = {}
    for item_id in candidates:
        cand_vecs, cand_norms = tfidf(candidates[item_id])
        c_len = len(candidates[item_id])
        refs = references[item_id]
        acc = [0.0] * n_max
        for ref in refs:
            ref_vecs, ref_norms = tfidf(ref)
            penalty = math.exp(-((c_len - len(ref)) ** 2) / (2.0 * sigma * sigma))
            for n in range(n_max):
                denom_sq = cand_norms[n] * ref_norms[n]
                if denom_sq <= 0.0:
                    continue
                ref_vec = ref_vecs[n]
                num = 0.0
                for gram, weight in cand_vecs[n].items():
                    rw = ref_vec.get(gram, 0.0)
                    num += min(weight, rw) * rw
                acc[n] += (num / math.sqrt(denom_sq)) * penalty
        scores[item_id] = 10.0 * sum(a / len(refs) for a in acc) / n_max

    return scores, sum(scores.values()) / len(scores)


def score_caption_corpus(
    candidates: Mapping[str, TokenSequence],
    references: Mapping[str, Sequence[TokenSequence]],
) -> tuple[dict[str, float], dict[str, dict[str, float]]]:
    """All four metrics over a tokenized corpus.

    Returns (corpus means, per-item scores) keyed by the table column
    names: C (CIDEr-D, [0, 10]), B4, M, R (each [0, 1]).
    """
    if set(candidates) != set(references):
        raise MetricError("candidate/reference key mismatch")
    cider_scores, cider_mean = cider_d(candidates, references)
    per_item: dict[str, dict[str, float]] = {}
    for item_id, cand in candidates.items():
        refs = references[item_id]
        per_item[item_id] = {
            "C": cider_scores[item_id],
            "B4": bleu4(cand, refs),
            "M": meteor_lite(cand, refs),
            "R": rouge_l(cand, refs),
        }
    n = len(per_item)
    means = {
        "C": cider_mean,
        "B4": sum(s["B4"] for s in per_item.values()) / n,
        "M": sum(s["M"] for s in per_item.values()) / n,
        "R": sum(s["R"] for s in per_item.values()) / n,
    }
    return means, per_item
