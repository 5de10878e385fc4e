"""Multi-criteria rank fusion.

The primary combiner is reciprocal rank fusion over per-criterion rankings:

    score(x) = sum over criteria i of 1 / rank_i(x)

with 1-based ranks and no smoothing constant. Because only ranks enter the
sum, the fused order is invariant under any strictly increasing transform of
a criterion's raw scores. Two score-based baselines are included for
comparison: the arithmetic mean of raw scores (Base) and the mean of
per-criterion min-max normalized scores (MinMax); both are sensitive to
score scale, which `base_transform_counterexample` demonstrates.

Ties in fused score break by lexicographic candidate id, so every fuse is a
total deterministic order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError
from .gateway.types import CriterionRanking

METHOD_RRF = "RRF"
METHOD_BASE = "Base"
METHOD_MINMAX = "MinMax"


@dataclass(frozen=True)
class RankingSet:
    """Per-criterion rankings over one shared candidate pool.

    Every CriterionRanking must cover exactly the candidate set; anything
    else is an upstream bug, so construction fails loudly.
    """

    candidates: tuple[str, ...]
    per_criterion: tuple[CriterionRanking, ...]

    def __post_init__(self):
        pool = set(self.candidates)
        if len(pool) != len(self.candidates):
            raise ValidationError("duplicate candidate ids in RankingSet")
        if not self.per_criterion:
            raise ValidationError("RankingSet needs at least one criterion ranking")
        for ranking in self.per_criterion:
            covered = set(ranking.order)
            if covered != pool or len(ranking.order) != len(self.candidates):
                raise ValidationError(
                    f"criterion {ranking.criterion_id!r} does not rank the "
                    f"candidate set exactly"
                )


@dataclass(frozen=True)
class FusedRanking:
    order: tuple[str, ...]
    scores: dict[str, float] = field(default_factory=dict)
    method: str = METHOD_RRF

    def top(self) -> str:
        if not self.order:
            raise ValidationError("fused ranking is empty")
        return self.order[0]


def _sorted_order(scores: dict[str, float]) -> tuple[str, ...]:
    return tuple(sorted(scores, key=lambda cid: (-scores[cid], cid)))


def rrf_fuse(ranking_set: RankingSet) -> FusedRanking:
    """Fuse by summing reciprocal ranks across criteria."""
    scores = {cid: 0.0 for cid in ranking_set.candidates}
    for ranking in ranking_set.per_criterion:
        for position, cid in enumerate(ranking.order):
            scores[cid] += 1.0 / (position + 1)
    return FusedRanking(order=_sorted_order(scores), scores=scores, method=METHOD_RRF)


def _require_raw_scores(ranking_set: RankingSet, method: str) -> None:
    for ranking in ranking_set.per_criterion:
        missing = set(ranking_set.candidates) - set(ranking.raw_scores)
        if missing:
            raise ValidationError(
                f"{method} fusion needs raw scores; criterion "
                f"{ranking.criterion_id!r} lacks {sorted(missing)}"
            )


def base_fuse(ranking_set: RankingSet) -> FusedRanking:
    """Arithmetic mean of raw criterion scores (scale-sensitive baseline)."""
    _require_raw_scores(ranking_set, METHOD_BASE)
    n = len(ranking_set.per_criterion)
    scores = {
        cid: sum(r.raw_scores[cid] for r in ranking_set.per_criterion) / n
        for cid in ranking_set.candidates
    }
    return FusedRanking(order=_sorted_order(scores), scores=scores, method=METHOD_BASE)


def minmax_fuse(ranking_set: RankingSet) -> FusedRanking:
    """Mean of per-criterion min-max normalized scores.

    A criterion whose scores are all equal carries no ordering information;
    it contributes 0.5 for every candidate.
    """
    _require_raw_scores(ranking_set, METHOD_MINMAX)
    n = len(ranking_set.per_criterion)
    scores = {cid: 0.0 for cid in ranking_set.candidates}
    for ranking in ranking_set.per_criterion:
        values = [ranking.raw_scores[cid] for cid in ranking_set.candidates]
        low, high = min(values), max(values)
        span = high - low
        for cid in ranking_set.candidates:
            if span == 0.0:
                scores[cid] += 0.5
            else:
                scores[cid] += (ranking.raw_scores[cid] - low) / span
    scores = {cid: total / n for cid, total in scores.items()}
    return FusedRanking(order=_sorted_order(scores), scores=scores, method=METHOD_MINMAX)


def base_transform_counterexample() -> tuple[RankingSet, RankingSet]:
    """Two RankingSets with identical per-criterion orders whose Base-mean
    orders differ.

    The second applies x -> x**10 (strictly increasing on [0, 1]) to the
    first criterion's raw scores. Ranks are untouched, so RRF is unaffected,
    but the mean of raw scores flips: a scale change on one criterion alone
    reverses the Base winner.
    """
    raw_a = {"A": 0.9, "B": 0.8}
    raw_b = {"A": 0.1, "B": 0.3}
    original = RankingSet(
        candidates=("A", "B"),
        per_criterion=(
            CriterionRanking("c1", ("A", "B"), raw_a),
            CriterionRanking("c2", ("B", "A"), raw_b),
        ),
    )
    transformed = RankingSet(
        candidates=("A", "B"),
        per_criterion=(
            CriterionRanking("c1", ("A", "B"), {k: v**10 for k, v in raw_a.items()}),
            CriterionRanking("c2", ("B", "A"), raw_b),
        ),
    )
    return original, transformed
