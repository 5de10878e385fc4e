from .core import (
    Gateway,
    extract_json,
    render_candidate_lines,
    render_evidence_lines,
)
from .mock import MockBackend
from .provider import HttpProviderBackend
from .templates import PromptTemplate, TemplateRegistry
from .types import (
    FAIL,
    PASS,
    STAGES,
    CostLedgerEntry,
    CriterionRanking,
    EmbeddingVector,
    PriceTable,
    Verdict,
)

__all__ = [
    "Gateway",
    "MockBackend",
    "HttpProviderBackend",
    "PromptTemplate",
    "TemplateRegistry",
    "Verdict",
    "CriterionRanking",
    "EmbeddingVector",
    "CostLedgerEntry",
    "PriceTable",
    "PASS",
    "FAIL",
    "STAGES",
    "extract_json",
    "render_candidate_lines",
    "render_evidence_lines",
]
