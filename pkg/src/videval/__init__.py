"""Batch evaluation harness for video language models.

Scores model prediction files against ground-truth corpora along five
paths: judge-model grading of QA and captions, conventional n-gram
caption metrics, embedding-similarity retrieval in both directions, and
closed-set action recognition; plus judge-vs-human agreement analysis
and table-style aggregation of all results.
"""

from .agreement import AgreementReport, ConfusionMatrix, analyze, confusion, pair_scores
from .corpus import (
    ActionItem,
    CaptionItem,
    CorpusError,
    EvalPair,
    HumanScoreRecord,
    LabelSet,
    PredictionRecord,
    QaItem,
    join,
    load_dataset,
    load_human_scores,
    load_predictions,
)
from .judge import (
    HttpJudgeProvider,
    JudgeConfig,
    JudgeReport,
    JudgeVerdict,
    MockJudgeProvider,
    build_caption_prompt,
    build_qa_prompt,
    evaluate,
    parse_verdict,
)
from .ngrams import bleu4, cider_d, meteor_lite, rouge_l, score_caption_corpus, tokenize
from .report import MetricReport, ModelTable, aggregate, render
from .retrieval import (
    EmbeddingVector,
    FileEmbeddingProvider,
    HttpEmbeddingProvider,
    RetrievalReport,
    SimilarityMatrix,
    embed_batch,
    eval_action,
    eval_t2v,
    eval_v2t,
    similarity_matrix,
    topk_accuracy,
)

__version__ = "0.1.0"
