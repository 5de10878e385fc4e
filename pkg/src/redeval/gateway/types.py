"""Shared gateway value types."""

from __future__ import annotations

from dataclasses import dataclass, field

PASS = "Pass"
FAIL = "Fail"

# Ledger stages, matching the per-stage cost accounting rows.
STAGES = (
    "atomic_extraction",
    "valid_selection",
    "embedding",
    "redundancy_tracking",
    "question_generation",
    "e2e",
)


@dataclass(frozen=True)
class Verdict:
    """One binary judgment with its stated reason."""

    outcome: str  # PASS or FAIL
    rationale: str
    criterion_id: str

    @property
    def passed(self) -> bool:
        return self.outcome == PASS


@dataclass(frozen=True)
class CriterionRanking:
    """A full ordering of candidates under a single criterion.

    `order` is a permutation of the candidate identifiers, best first.
    `raw_scores` carries the judge's per-candidate scores when the backend
    reports them; rank-only backends may leave it empty.
    """

    criterion_id: str
    order: tuple[str, ...]
    raw_scores: dict[str, float] = field(default_factory=dict)

    def rank_of(self, candidate_id: str) -> int:
        """1-based rank of a candidate."""
        return self.order.index(candidate_id) + 1


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_id: str


@dataclass(frozen=True)
class CostLedgerEntry:
    stage: str
    prompt_tokens: int
    completion_tokens: int
    cost_usd: float


@dataclass(frozen=True)
class PriceTable:
    """Unit prices in USD per 1000 tokens. Config-supplied, never hardcoded."""

    prompt_per_1k: float = 0.0
    completion_per_1k: float = 0.0
    embed_per_1k: float = 0.0

    def cost(self, prompt_tokens: int, completion_tokens: int, embedding: bool = False) -> float:
        if embedding:
            return prompt_tokens / 1000.0 * self.embed_per_1k
        return (
            prompt_tokens / 1000.0 * self.prompt_per_1k
            + completion_tokens / 1000.0 * self.completion_per_1k
        )
