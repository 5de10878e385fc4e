"""End-to-end answering and the retrieval/parametric decomposition.

Every item is answered twice: once with the retrieved context, once from
the model's own knowledge. A correctness judge grades both against the
reference answer. Crossing parametric correctness with retrieval perfect
recall splits the benchmark into four cells that show where retrieval
actually pays: items only retrieval gets right, items the model already
knew, and items neither side can carry.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .corpus import count_tokens, truncate_tokens
from .errors import ParseError, TransportError, ValidationError
from .gateway.core import Gateway
from .qgen import BenchmarkItem

logger = logging.getLogger(__name__)

MODE_WITH_RETRIEVAL = "with_retrieval"
MODE_PARAMETRIC = "parametric_only"

CELL_INTERSECTION = "Intersection"
CELL_RETRIEVAL_ONLY = "RetrievalOnly"
CELL_PARAMETRIC_ONLY = "ParametricOnly"
CELL_COMPLEMENTARY = "Complementary"
CELLS = (
    CELL_INTERSECTION,
    CELL_RETRIEVAL_ONLY,
    CELL_PARAMETRIC_ONLY,
    CELL_COMPLEMENTARY,
)

DEFAULT_CONTEXT_BUDGET = 4096


@dataclass(frozen=True)
class E2EJudgment:
    item_id: str
    mode: str
    retriever_id: str | None
    answer: str
    correct: bool
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "mode": self.mode,
            "retriever_id": self.retriever_id,
            "answer": self.answer,
            "correct": self.correct,
            "error": self.error,
        }


def render_context(context_chunks, budget: int = DEFAULT_CONTEXT_BUDGET) -> str:
    """Join ranked chunks into a provenance-tagged context block.

    Chunks are (chunk_id, doc_id, text) in rank order. When the block would
    exceed the token budget, the lowest-ranked chunks are dropped first; if
    even the top chunk is over budget its text is cut at the budget.
    """
    if budget < 1:
        raise ValidationError("context budget must be at least 1")
    blocks = []
    used = 0
    for rank, (chunk_id, doc_id, text) in enumerate(context_chunks, start=1):
        block = f"[{rank}] chunk {chunk_id} (doc {doc_id})\n{text}"
        tokens = count_tokens(block)
        if used + tokens > budget:
            if rank == 1:
                blocks.append(truncate_tokens(block, budget))
            break
        blocks.append(block)
        used += tokens
    return "\n\n".join(blocks)


def answer_item(
    item: BenchmarkItem,
    gateway: Gateway,
    context: str | None,
) -> str:
    if context is None:
        return gateway.answer("e2e_answer_parametric", {"question": item.question})
    return gateway.answer(
        "e2e_answer_context", {"question": item.question, "context": context}
    )


def judge_answer_correct(item: BenchmarkItem, answer: str, gateway: Gateway) -> bool:
    verdict = gateway.judge(
        "e2e_correctness",
        {"question": item.question, "reference": item.answer, "answer": answer},
        "correctness",
    )
    return verdict.passed


def run_mode(
    items: list[BenchmarkItem],
    gateway: Gateway,
    mode: str,
    retriever_id: str | None = None,
    rankings: dict[str, list[str]] | None = None,
    chunk_lookup: dict[str, tuple[str, str]] | None = None,
    k: int = 10,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> list[E2EJudgment]:
    """Answer and judge every item in one mode.

    With retrieval, rankings map item_id to ranked chunk ids and
    chunk_lookup maps chunk_id -> (doc_id, text). A gateway failure marks
    that judgment incorrect with the error recorded; the run continues.
    """
    if mode not in (MODE_WITH_RETRIEVAL, MODE_PARAMETRIC):
        raise ValidationError(f"unknown e2e mode {mode!r}")
    if mode == MODE_WITH_RETRIEVAL and (rankings is None or chunk_lookup is None):
        raise ValidationError("with-retrieval mode needs rankings and chunks")

    def judge_one(item: BenchmarkItem) -> E2EJudgment:
        context = None
        if mode == MODE_WITH_RETRIEVAL:
            context_chunks = [
                (cid, chunk_lookup[cid][0], chunk_lookup[cid][1])
                for cid in rankings.get(item.item_id, [])[:k]
                if cid in chunk_lookup
            ]
            context = render_context(context_chunks, context_budget)
        try:
            answer = answer_item(item, gateway, context)
            correct = judge_answer_correct(item, answer, gateway)
            error = None
        except (ParseError, TransportError) as exc:
            logger.warning("e2e failed for %s (%s): %s", item.item_id, mode, exc)
            answer, correct, error = "", False, str(exc)
        return E2EJudgment(
            item_id=item.item_id,
            mode=mode,
            retriever_id=retriever_id if mode == MODE_WITH_RETRIEVAL else None,
            answer=answer,
            correct=correct,
            error=error,
        )

    return gateway.map_ordered(judge_one, items)


def run_e2e(
    items: list[BenchmarkItem],
    rankings: dict[str, list[str]],
    chunk_lookup: dict[str, tuple[str, str]],
    gateway: Gateway,
    retriever_id: str,
    k: int = 10,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> list[E2EJudgment]:
    """Both modes for one retriever, interleaved per item."""
    with_retrieval = run_mode(
        items, gateway, MODE_WITH_RETRIEVAL,
        retriever_id=retriever_id, rankings=rankings,
        chunk_lookup=chunk_lookup, k=k, context_budget=context_budget,
    )
    parametric = run_mode(items, gateway, MODE_PARAMETRIC)
    return with_retrieval + parametric


def _shares(counts: dict[str, int], total: int) -> dict[str, float]:
    """Percent shares that sum to exactly 100.0 in float arithmetic.

    Raw count*100/total shares can miss 100.0 by an ulp; the residual is
    folded into the largest cell (display-grade correction, well under any
    reporting precision).
    """
    shares = {cell: counts[cell] * 100.0 / total for cell in counts}
    residual = 100.0 - math.fsum(shares.values())
    if residual != 0.0:
        largest = max(shares, key=lambda cell: (shares[cell], cell))
        shares[largest] += residual
    return shares


def decompose(
    retrieval_judgments: dict[str, bool],
    parametric_judgments: dict[str, bool],
    perfrecall: dict[str, int],
) -> dict:
    """Cross parametric correctness with retrieval perfect recall.

    All three maps are keyed by item_id; only items present in all three
    enter the decomposition. Returns cell counts, shares (percent, summing
    to exactly 100), per-cell with-retrieval accuracy, overall accuracies,
    and the two gains:

        rag gain        = end-to-end accuracy - parametric-only accuracy
        parametric gain = end-to-end accuracy - mean perfect recall
    """
    ids = sorted(
        set(retrieval_judgments) & set(parametric_judgments) & set(perfrecall)
    )
    if not ids:
        raise ValidationError("decomposition needs at least one shared item")
    counts = {cell: 0 for cell in CELLS}
    correct_in_cell = {cell: 0 for cell in CELLS}
    for item_id in ids:
        knew = parametric_judgments[item_id]
        recalled = perfrecall[item_id] == 1
        if knew and recalled:
            cell = CELL_INTERSECTION
        elif recalled:
            cell = CELL_RETRIEVAL_ONLY
        elif knew:
            cell = CELL_PARAMETRIC_ONLY
        else:
            cell = CELL_COMPLEMENTARY
        counts[cell] += 1
        if retrieval_judgments[item_id]:
            correct_in_cell[cell] += 1
    total = len(ids)
    e2e_accuracy = 100.0 * sum(retrieval_judgments[i] for i in ids) / total
    param_accuracy = 100.0 * sum(parametric_judgments[i] for i in ids) / total
    mean_perfrecall = 100.0 * sum(perfrecall[i] for i in ids) / total
    shares = _shares(counts, total)
    cells = {
        cell: {
            "count": counts[cell],
            "share": shares[cell],
            "accuracy_with_retrieval": (
                100.0 * correct_in_cell[cell] / counts[cell] if counts[cell] else 0.0
            ),
        }
        for cell in CELLS
    }
    return {
        "items": total,
        "e2e_accuracy": e2e_accuracy,
        "parametric_accuracy": param_accuracy,
        "mean_perfrecall": mean_perfrecall,
        "rag_gain": e2e_accuracy - param_accuracy,
        "parametric_gain": e2e_accuracy - mean_perfrecall,
        "cells": cells,
    }
