"""Hybrid BM25 + dense retrieval, fusion, evaluation metrics and judge utilities."""

from ._core import (
    ConfidenceInterval,
    Error,
    JudgeVerdict,
    KnowledgeBase,
    MetricReport,
    ProtocolHandler,
    RetrievedHit,
    SparseIndex,
    VectorStore,
    bootstrap_ci,
    build_judge_prompt,
    chunk_text,
    compute_metrics,
    fuse,
    hash_embed,
    normalize_answer,
    parse_verdict,
    tertile_quotas,
    tokenize,
    wilson_interval,
)

__all__ = [
    "ConfidenceInterval",
    "Error",
    "JudgeVerdict",
    "KnowledgeBase",
    "MetricReport",
    "ProtocolHandler",
    "RetrievedHit",
    "SparseIndex",
    "VectorStore",
    "bootstrap_ci",
    "build_judge_prompt",
    "chunk_text",
    "compute_metrics",
    "fuse",
    "hash_embed",
    "normalize_answer",
    "parse_verdict",
    "tertile_quotas",
    "tokenize",
    "wilson_interval",
]
