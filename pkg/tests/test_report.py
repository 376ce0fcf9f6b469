import random

import pytest

from videval.report import (
    MetricReport,
    ReportError,
    aggregate,
    dump_metric_reports,
    load_metric_reports,
    render,
)

QA_DATASETS = ("msvd-qa", "msrvtt-qa", "tgif-qa", "anet-qa")
QA_ACC = (62.8, 41.6, 61.1, 29.5)
QA_MAT = (3.55, 2.70, 3.47, 2.19)


def qa_reports(model_id="video-llm"):
    return [
        MetricReport(model_id, "qa", ds, {"acc": acc, "mat": mat})
        for ds, acc, mat in zip(QA_DATASETS, QA_ACC, QA_MAT)
    ]


def test_average_row_replicates_published_rounding():
    tables = aggregate(qa_reports(), dataset_order=QA_DATASETS)
    table = tables["video-llm"]
    markdown = render(table, "markdown")
    assert "| Average | 48.8 | 2.98 |" in markdown
    csv_text = render(table, "csv")
    assert "qa,Average,48.8,2.98" in csv_text.splitlines()


def test_dataset_rows_follow_canonical_order():
    reports = qa_reports()
    random.Random(3).shuffle(reports)
    table = aggregate(reports, dataset_order=QA_DATASETS)["video-llm"]
    assert [row[0] for row in table.blocks[0].rows] == list(QA_DATASETS)


def test_single_dataset_average_equals_row():
    table = aggregate([MetricReport("m", "qa", "msvd-qa", {"acc": 62.8, "mat": 3.55})])["m"]
    block = table.blocks[0]
    assert block.average == {"acc": 62.8, "mat": 3.55}


def test_half_up_rounding_at_render():
    table = aggregate([MetricReport("m", "qa", "d", {"acc": 48.75, "mat": 2.975})])["m"]
    markdown = render(table, "markdown")
    assert "| d | 48.8 | 2.98 |" in markdown


def test_render_deterministic_bytes():
    table = aggregate(qa_reports(), dataset_order=QA_DATASETS)["video-llm"]
    for fmt in ("csv", "markdown", "structured"):
        assert render(table, fmt) == render(table, fmt)


def test_aggregate_render_permutation_invariant():
    reports = qa_reports() + [
        MetricReport("video-llm", "ngram", "msvd-cap", {"C": 1.231, "B4": 0.352, "M": 0.397, "R": 0.784})
    ]
    shuffled = reports[:]
    random.Random(9).shuffle(shuffled)
    a = aggregate(reports, dataset_order=QA_DATASETS)["video-llm"]
    b = aggregate(shuffled, dataset_order=QA_DATASETS)["video-llm"]
    for fmt in ("csv", "markdown", "structured"):
        assert render(a, fmt) == render(b, fmt)


def test_ngram_percent_style_scaling():
    table = aggregate(
        [MetricReport("m", "ngram", "d", {"C": 1.231, "B4": 0.352, "M": 0.397, "R": 0.784})]
    )["m"]
    markdown = render(table, "markdown")
    assert "| d | 12.3 | 35.2 | 39.7 | 78.4 |" in markdown
    raw = render(table, "markdown", scale_ngram=False)
    assert "| d | 1.2 | 0.4 | 0.4 | 0.8 |" in raw


def test_absent_cells_render_and_average_excludes():
    reports = [
        MetricReport("m", "qa", "d1", {"acc": 50.0, "mat": 3.0}),
        MetricReport("m", "qa", "d2", {"acc": 70.0}),  # mat missing
    ]
    table = aggregate(reports, dataset_order=("d1", "d2"))["m"]
    markdown = render(table, "markdown")
    assert "| d2 | 70.0 | – |" in markdown
    assert "| Average | 60.0 | 3.00 |" in markdown
    assert "excluded from the Average row" in markdown
    csv_text = render(table, "csv")
    assert "qa,d2,70.0," in csv_text.splitlines()


def test_average_row_matches_independent_fold():
    rng = random.Random(21)
    reports = [
        MetricReport("m", "qa", f"d{i}", {"acc": rng.uniform(0, 100), "mat": rng.uniform(1, 5)})
        for i in range(6)
    ]
    table = aggregate(reports)["m"]
    block = table.blocks[0]
    for col in block.columns:
        refold = sum(cells[col] for _, cells in block.rows) / len(block.rows)
        assert block.average[col] == pytest.approx(refold, abs=1e-12)


def test_conflicting_duplicates_rejected_identical_merged():
    base = MetricReport("m", "qa", "d", {"acc": 50.0, "mat": 3.0})
    dup = MetricReport("m", "qa", "d", {"acc": 50.0, "mat": 3.0})
    assert aggregate([base, dup])["m"].blocks[0].rows[0][1]["acc"] == 50.0
    conflict = MetricReport("m", "qa", "d", {"acc": 51.0, "mat": 3.0})
    with pytest.raises(ReportError, match="conflicting duplicate"):
        aggregate([base, conflict])


def test_registry_enforced():
    with pytest.raises(ReportError, match="unknown task"):
        aggregate([MetricReport("m", "poetry", "d", {"acc": 1.0})])
    with pytest.raises(ReportError, match="not in the 'qa' registry"):
        aggregate([MetricReport("m", "qa", "d", {"bleu": 1.0})])


def test_unlisted_datasets_sort_after_canonical():
    reports = [
        MetricReport("m", "qa", "zeta", {"acc": 1.0, "mat": 1.0}),
        MetricReport("m", "qa", "known", {"acc": 1.0, "mat": 1.0}),
        MetricReport("m", "qa", "alpha", {"acc": 1.0, "mat": 1.0}),
    ]
    table = aggregate(reports, dataset_order=("known",))["m"]
    assert [row[0] for row in table.blocks[0].rows] == ["known", "alpha", "zeta"]


def test_dump_and_load_round_trip(tmp_path):
    reports = qa_reports()
    reports[0].provenance = {"judge_model": "judge-v1", "created_at": "2026-01-01T00:00:00+00:00"}
    path = tmp_path / "reports.jsonl"
    dump_metric_reports(reports, path)
    assert load_metric_reports(path) == reports


def test_multiple_models_one_table_each():
    reports = qa_reports("model-a") + qa_reports("model-b")
    tables = aggregate(reports, dataset_order=QA_DATASETS)
    assert sorted(tables) == ["model-a", "model-b"]
