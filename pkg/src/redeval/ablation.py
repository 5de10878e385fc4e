"""Ranking-strategy ablation harness.

Crosses prompting modes with aggregation methods over a labeled dataset of
candidate lists. Separate prompting issues one ranking call per quality
criterion; Vanilla (one holistic call) and Combined (one call weighing all
criteria jointly) each yield a single effective ranking. Aggregations fuse
whatever rankings came back: raw-score mean (Base), min-max normalized mean
(MinMax), or reciprocal rank (RRF).

Candidate-list metrics here are binary-relevance NDCG@3, MRR, and Top-1
accuracy against per-instance gold ids; run-to-run dispersion is reported
as a coefficient of variation (100 * std / mean over runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .atomics import ATOM_RANK_CRITERIA
from .errors import ValidationError
from .fusion import (
    METHOD_BASE,
    METHOD_MINMAX,
    METHOD_RRF,
    FusedRanking,
    RankingSet,
    base_fuse,
    minmax_fuse,
    rrf_fuse,
)
from .util import derive_seed

PROMPT_VANILLA = "Vanilla"
PROMPT_COMBINED = "Combined"
PROMPT_SEPARATE = "Separate"
PROMPTINGS = (PROMPT_VANILLA, PROMPT_COMBINED, PROMPT_SEPARATE)
AGGREGATIONS = (METHOD_BASE, METHOD_MINMAX, METHOD_RRF)

# The default grid mirrors the usual comparison: the holistic baseline plus
# every aggregation over combined and per-criterion prompting.
DEFAULT_STRATEGIES = (
    (PROMPT_VANILLA, METHOD_BASE),
    (PROMPT_COMBINED, METHOD_BASE),
    (PROMPT_COMBINED, METHOD_MINMAX),
    (PROMPT_COMBINED, METHOD_RRF),
    (PROMPT_SEPARATE, METHOD_BASE),
    (PROMPT_SEPARATE, METHOD_MINMAX),
    (PROMPT_SEPARATE, METHOD_RRF),
)

_FUSERS = {
    METHOD_BASE: base_fuse,
    METHOD_MINMAX: minmax_fuse,
    METHOD_RRF: rrf_fuse,
}


@dataclass(frozen=True)
class AblationInstance:
    instance_id: str
    candidates: tuple[tuple[str, str], ...]  # (id, text)
    gold_ids: frozenset[str]

    def __post_init__(self):
        ids = [cid for cid, _ in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"{self.instance_id}: duplicate candidate ids")
        if not self.gold_ids:
            raise ValidationError(f"{self.instance_id}: no gold ids")
        if not self.gold_ids <= set(ids):
            raise ValidationError(
                f"{self.instance_id}: gold ids outside the candidate list"
            )


def load_instances(records) -> list[AblationInstance]:
    instances = []
    for record in records:
        try:
            instances.append(
                AblationInstance(
                    instance_id=record["instance_id"],
                    candidates=tuple(
                        (c["id"], c["text"]) for c in record["candidates"]
                    ),
                    gold_ids=frozenset(record["gold_ids"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(
                f"malformed ablation record {len(instances)}: {exc!r}; expected "
                "instance_id, candidates (list of {id, text}), gold_ids"
            ) from exc
    if not instances:
        raise ValidationError("ablation dataset is empty")
    return instances


def ndcg_at_3(order, gold_ids) -> float:
    dcg = sum(
        1.0 / math.log2(position + 2)
        for position, cid in enumerate(order[:3])
        if cid in gold_ids
    )
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(3, len(gold_ids))))
    return dcg / idcg


def mrr_ids(order, gold_ids) -> float:
    for position, cid in enumerate(order):
        if cid in gold_ids:
            return 1.0 / (position + 1)
    return 0.0


def top1(order, gold_ids) -> float:
    return 1.0 if order and order[0] in gold_ids else 0.0


def rank_instance(
    instance: AblationInstance, prompting: str, gateway
) -> RankingSet:
    """Collect the per-criterion rankings one prompting mode produces."""
    pairs = list(instance.candidates)
    if prompting == PROMPT_SEPARATE:
        rankings = tuple(
            gateway.rank_by_criterion(f"atom_rank_{criterion}", criterion, pairs)
            for criterion in ATOM_RANK_CRITERIA
        )
    elif prompting == PROMPT_VANILLA:
        rankings = (
            gateway.rank_by_criterion("ablation_rank_vanilla", "vanilla", pairs),
        )
    elif prompting == PROMPT_COMBINED:
        rankings = (
            gateway.rank_by_criterion("ablation_rank_combined", "combined", pairs),
        )
    else:
        raise ValidationError(f"unknown prompting mode {prompting!r}")
    return RankingSet(
        candidates=tuple(cid for cid, _ in pairs), per_criterion=rankings
    )


def _cv(values: list[float]) -> float:
    """Coefficient of variation in percent; 0 for a single run or zero mean."""
    if len(values) < 2:
        return 0.0
    mean = sum(values) / len(values)
    if mean == 0.0:
        return 0.0
    variance = sum((v - mean) ** 2 for v in values) / len(values)
    return 100.0 * math.sqrt(variance) / mean


def run_ablation(
    instances: list[AblationInstance],
    gateway_factory,
    strategies=DEFAULT_STRATEGIES,
    runs: int = 1,
    seed: int = 42,
) -> dict:
    """Evaluate every (prompting, aggregation) strategy over repeated runs.

    gateway_factory(seed) builds the gateway for one run; each run gets a
    seed derived from the root seed so backends that honor seeding produce
    run-to-run variation and the CV is meaningful.
    """
    if not instances:
        raise ValidationError("ablation needs at least one instance")
    if runs < 1:
        raise ValidationError("runs must be at least 1")
    for prompting, aggregation in strategies:
        if prompting not in PROMPTINGS or aggregation not in AGGREGATIONS:
            raise ValidationError(
                f"unknown strategy ({prompting!r}, {aggregation!r})"
            )

    promptings_needed = sorted({p for p, _ in strategies})
    per_strategy_runs: dict[tuple[str, str], dict[str, list[float]]] = {
        strategy: {"ndcg_at_3": [], "mrr": [], "top1": []}
        for strategy in strategies
    }
    for run_index in range(runs):
        gateway = gateway_factory(derive_seed(seed, "ablation", str(run_index)))
        ranking_sets = {
            (prompting, instance.instance_id): rank_instance(
                instance, prompting, gateway
            )
            for prompting in promptings_needed
            for instance in instances
        }
        for strategy in strategies:
            prompting, aggregation = strategy
            fuse = _FUSERS[aggregation]
            ndcgs, mrrs, tops = [], [], []
            for instance in instances:
                fused: FusedRanking = fuse(
                    ranking_sets[(prompting, instance.instance_id)]
                )
                ndcgs.append(ndcg_at_3(fused.order, instance.gold_ids))
                mrrs.append(mrr_ids(fused.order, instance.gold_ids))
                tops.append(top1(fused.order, instance.gold_ids))
            n = len(instances)
            per_strategy_runs[strategy]["ndcg_at_3"].append(sum(ndcgs) / n)
            per_strategy_runs[strategy]["mrr"].append(sum(mrrs) / n)
            per_strategy_runs[strategy]["top1"].append(100.0 * sum(tops) / n)

    rows = []
    for strategy in strategies:
        prompting, aggregation = strategy
        values = per_strategy_runs[strategy]
        rows.append(
            {
                "prompting": prompting,
                "aggregation": aggregation,
                "ndcg_at_3": sum(values["ndcg_at_3"]) / runs,
                "mrr": sum(values["mrr"]) / runs,
                "top1": sum(values["top1"]) / runs,
                "cv_ndcg": _cv(values["ndcg_at_3"]),
                "cv_mrr": _cv(values["mrr"]),
                "runs": runs,
            }
        )
    return {"rows": rows, "instances": len(instances), "seed": seed}
