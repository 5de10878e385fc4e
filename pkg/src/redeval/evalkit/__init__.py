from .bm25 import BM25Index, bm25_tokenize
from .dense import EmbeddingIndex, dense_search
from .metrics import (
    DEFAULT_K,
    coverage_at_k,
    mrr,
    ndcg_at_k,
    perfrecall_at_k,
)
from .report import (
    GoldSpec,
    RetrievalRun,
    evaluate_item,
    evaluate_run,
    metric_report,
    render_table,
)

__all__ = [
    "BM25Index",
    "bm25_tokenize",
    "EmbeddingIndex",
    "dense_search",
    "coverage_at_k",
    "perfrecall_at_k",
    "ndcg_at_k",
    "mrr",
    "DEFAULT_K",
    "GoldSpec",
    "RetrievalRun",
    "evaluate_item",
    "evaluate_run",
    "metric_report",
    "render_table",
]
