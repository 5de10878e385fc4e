"""Group-aware retrieval metrics.

Gold is a list of chunk groups, one group per evidence fact; any chunk in a
group supplies that fact. Coverage is the fraction of groups hit in the
top-K, perfect recall requires every group hit, NDCG uses binary gains with
group deduplication (a rank earns gain only for a group no other rank is
already credited with), and MRR is the unbounded reciprocal rank of the
first hit.

Group credit for NDCG is assigned by a small augmenting-path matching
rather than naive first-fit: when groups overlap, first-fit can waste a
chunk on a group another rank could cover, which would make expanded gold
score *below* singleton gold. With the matching, supersets can only help,
which is the whole point of redundancy-aware gold.
"""

from __future__ import annotations

import math
from typing import Sequence

from ..errors import ValidationError

DEFAULT_K = 10


def _check(ranking: Sequence[str], gold_groups) -> list[frozenset]:
    groups = [frozenset(g) for g in gold_groups]
    if not groups:
        raise ValidationError("metrics need at least one gold group")
    if any(not g for g in groups):
        raise ValidationError("empty gold group")
    if len(set(ranking)) != len(ranking):
        raise ValidationError("ranking contains duplicate chunk ids")
    return groups


def coverage_at_k(ranking: Sequence[str], gold_groups, k: int = DEFAULT_K) -> float:
    """Fraction of gold groups with at least one member in the top-k."""
    groups = _check(ranking, gold_groups)
    top = set(ranking[:k])
    hit = sum(1 for g in groups if g & top)
    return hit / len(groups)


def perfrecall_at_k(ranking: Sequence[str], gold_groups, k: int = DEFAULT_K) -> int:
    """1 iff every gold group has a member in the top-k, else 0."""
    return int(coverage_at_k(ranking, gold_groups, k) == 1.0)


def _credited_positions(top: Sequence[str], groups: list[frozenset]) -> set[int]:
    """0-based rank positions earning gain 1 under group deduplication.

    Ranks are processed best-first; each tries to claim an unclaimed group
    containing its chunk, reassigning earlier claims along an augmenting
    path when that frees a group. Earlier ranks never lose a claim, so this
    maximizes DCG for binary gains.
    """
    owner: dict[int, int] = {}  # group index -> position currently crediting it

    def claim(position: int, visited: set[int]) -> bool:
        for gi, group in enumerate(groups):
            if gi in visited or top[position] not in group:
                continue
            visited.add(gi)
            if gi not in owner or claim(owner[gi], visited):
                owner[gi] = position
                return True
        return False

    credited: set[int] = set()
    for position in range(len(top)):
        if claim(position, set()):
            credited.add(position)
    return credited


def ndcg_at_k(ranking: Sequence[str], gold_groups, k: int = DEFAULT_K) -> float:
    """Binary-gain NDCG with group deduplication.

    Ideal places one hit per group at ranks 1..len(groups) (truncated at k),
    so a retriever that covers every group as early as possible scores 1.
    """
    groups = _check(ranking, gold_groups)
    top = list(ranking[:k])
    credited = _credited_positions(top, groups)
    dcg = sum(1.0 / math.log2(position + 2) for position in credited)
    ideal_hits = min(len(groups), k)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(ideal_hits))
    return dcg / idcg


def mrr(ranking: Sequence[str], gold_groups) -> float:
    """Reciprocal rank of the first chunk belonging to any gold group.

    Scans the entire ranking (not truncated at k); 0 when nothing hits.
    """
    groups = _check(ranking, gold_groups)
    members = frozenset().union(*groups)
    for position, chunk_id in enumerate(ranking):
        if chunk_id in members:
            return 1.0 / (position + 1)
    return 0.0
