"""Judge-versus-human score agreement.

Pairs judge verdicts with human score records per metric, tallies
confusion matrices, and checks the qualitative property that mean human
scores rise with the judge score (adjacent comparisons over the judge
scores actually present; gaps are skipped, not interpolated).
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "AgreementError",
    "AgreementReport",
    "ConfusionMatrix",
    "PairSummary",
    "analyze",
    "confusion",
    "format_confusion",
    "pair_scores",
]

PAIR_METRICS = ("correctness", "match", "precision", "coverage")


class AgreementError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ConfusionMatrix:
    """counts[j][h] tallies pairs with judge bin j and human bin h."""

    bins: tuple[int, ...]
    counts: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


@dataclass(frozen=True, slots=True)
class PairSummary:
    n_pairs: int
    judge_only: tuple[str, ...]
    human_only: tuple[str, ...]


@dataclass(slots=True)
class AgreementReport:
    metric: str
    n_pairs: int
    exact_agreement_rate: float
    within_one_rate: float
    mean_human_by_judge: dict[int, float]
    monotone: bool
    violations: list[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "n_pairs": self.n_pairs,
            "exact_agreement_rate": self.exact_agreement_rate,
            "within_one_rate": self.within_one_rate,
            "mean_human_by_judge": {str(k): v for k, v in sorted(self.mean_human_by_judge.items())},
            "monotone": self.monotone,
            "violations": [list(v) for v in self.violations],
        }


def _verdict_value(verdict, metric: str) -> int | None:
    if metric == "correctness":
        return None if verdict.correct is None else int(verdict.correct)
    return getattr(verdict, metric)


def pair_scores(verdicts, human_records, metric: str):
    """Inner-join judge and human values on item_id for one metric.

    Returns (pairs, summary): pairs are (judge_value, human_value)
    ordered by item_id; the summary lists ids present on only one side.
    Verdicts that carry no value for the metric (invalid or wrong task)
    count as judge-side absent.
    """
    if metric not in PAIR_METRICS:
        raise AgreementError(f"unknown metric '{metric}' (expected one of {PAIR_METRICS})")

    judge_values: dict[str, int] = {}
    for verdict in verdicts:
        value = _verdict_value(verdict, metric)
        if value is None:
            continue
        if verdict.item_id in judge_values:
            raise AgreementError(f"duplicate verdict for item_id '{verdict.item_id}'")
        judge_values[verdict.item_id] = value

    human_values: dict[str, int] = {}
    for record in human_records:
        if record.metric != metric:
            continue
        if record.item_id in human_values:
            raise AgreementError(f"duplicate human record for (item_id '{record.item_id}', {metric})")
        human_values[record.item_id] = record.human_value

    shared = sorted(judge_values.keys() & human_values.keys())
    pairs = [(judge_values[i], human_values[i]) for i in shared]
    summary = PairSummary(
        n_pairs=len(pairs),
        judge_only=tuple(sorted(judge_values.keys() - human_values.keys())),
        human_only=tuple(sorted(human_values.keys() - judge_values.keys())),
    )
    return pairs, summary


def confusion(pairs, bins) -> ConfusionMatrix:
    """Tally pairs into a square judge-by-human matrix."""
    bins = tuple(int(b) for b in bins)
    index = {b: i for i, b in enumerate(bins)}
    counts = [[0] * len(bins) for _ in bins]
    for judge_value, human_value in pairs:
        if judge_value not in index or human_value not in index:
            raise AgreementError(f"pair ({judge_value}, {human_value}) outside bins {bins}")
        counts[index[judge_value]][index[human_value]] += 1
    return ConfusionMatrix(bins=bins, counts=tuple(tuple(row) for row in counts))


def analyze(pairs, metric: str) -> AgreementReport:
    """Agreement rates plus the monotone mean-human-score check.

    within_one_rate counts |judge - human| <= 1 and is an extension
    beyond exact agreement (trivially 100 for the binary correctness
    metric). Monotonicity compares adjacent judge scores that occur.
    """
    if metric not in PAIR_METRICS:
        raise AgreementError(f"unknown metric '{metric}' (expected one of {PAIR_METRICS})")
    if not pairs:
        raise AgreementError("no pairs to analyze")

    n = len(pairs)
    exact = sum(1 for j, h in pairs if j == h)
    within = sum(1 for j, h in pairs if abs(j - h) <= 1)

    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for j, h in pairs:
        sums[j] = sums.get(j, 0.0) + h
        counts[j] = counts.get(j, 0) + 1
    means = {j: sums[j] / counts[j] for j in sums}

    violations = []
    ordered = sorted(means)
    for lo, hi in zip(ordered, ordered[1:]):
        if means[lo] > means[hi]:
            violations.append((lo, hi))

    return AgreementReport(
        metric=metric,
        n_pairs=n,
        exact_agreement_rate=100.0 * exact / n,
        within_one_rate=100.0 * within / n,
        mean_human_by_judge=means,
        monotone=not violations,
        violations=violations,
    )


def format_confusion(matrix: ConfusionMatrix) -> str:
    """Plain-text table, judge scores as rows and human scores as columns."""
    header = ["judge\\human"] + [str(b) for b in matrix.bins]
    rows = [header]
    for b, row in zip(matrix.bins, matrix.counts):
        rows.append([str(b)] + [str(c) for c in row])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"
