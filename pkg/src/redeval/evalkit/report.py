"""Run evaluation: per-item metrics, sliced aggregates, and table rendering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..errors import ValidationError
from ..qgen import BenchmarkItem
from .metrics import coverage_at_k, mrr, ndcg_at_k, perfrecall_at_k

logger = logging.getLogger(__name__)

METRIC_KEYS = ("coverage_at_k", "perfrecall_at_k", "ndcg_at_k", "mrr")


@dataclass
class GoldSpec:
    """Evaluation view of the benchmark: gold groups plus slicing labels."""

    gold: dict[str, tuple[frozenset[str], ...]]
    hop: dict[str, int]
    domain: dict[str, str]

    @classmethod
    def from_items(cls, items: list[BenchmarkItem]) -> "GoldSpec":
        gold, hop, domain = {}, {}, {}
        for item in items:
            if item.item_id in gold:
                raise ValidationError(f"duplicate item id {item.item_id}")
            gold[item.item_id] = item.gold_groups
            hop[item.item_id] = item.hop
            domain[item.item_id] = item.domain_tag
        if not gold:
            raise ValidationError("no benchmark items to evaluate")
        return cls(gold=gold, hop=hop, domain=domain)

    def item_ids(self) -> list[str]:
        return list(self.gold)


@dataclass
class RetrievalRun:
    """One retriever's rankings over the benchmark items."""

    retriever_id: str
    rankings: dict[str, list[str]]
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        for item_id, ranking in self.rankings.items():
            if len(set(ranking)) != len(ranking):
                raise ValidationError(
                    f"run {self.retriever_id}: duplicate chunks for {item_id}"
                )

    def to_records(self) -> list[dict]:
        return [
            {
                "item_id": item_id,
                "retriever_id": self.retriever_id,
                "ranking": list(ranking),
                "parameters": dict(self.parameters),
            }
            for item_id, ranking in self.rankings.items()
        ]

    @classmethod
    def from_records(cls, records) -> list["RetrievalRun"]:
        by_retriever: dict[str, dict] = {}
        params: dict[str, dict] = {}
        for record in records:
            rid = record["retriever_id"]
            by_retriever.setdefault(rid, {})[record["item_id"]] = list(
                record["ranking"]
            )
            params.setdefault(rid, dict(record.get("parameters", {})))
        return [
            cls(retriever_id=rid, rankings=rankings, parameters=params[rid])
            for rid, rankings in sorted(by_retriever.items())
        ]


def evaluate_item(ranking: list[str], gold_groups, k: int) -> dict:
    return {
        "coverage_at_k": coverage_at_k(ranking, gold_groups, k),
        "perfrecall_at_k": perfrecall_at_k(ranking, gold_groups, k),
        "ndcg_at_k": ndcg_at_k(ranking, gold_groups, k),
        "mrr": mrr(ranking, gold_groups),
    }


def evaluate_run(run: RetrievalRun, gold: GoldSpec, k: int) -> list[dict]:
    """Per-item metric records for one run.

    An item the run never ranked scores zero everywhere and is flagged, with
    a warning; silent holes would otherwise inflate a lazy retriever.
    """
    records = []
    for item_id in gold.item_ids():
        ranking = run.rankings.get(item_id)
        missing = ranking is None
        if missing:
            logger.warning(
                "run %s has no ranking for item %s; scoring zeros",
                run.retriever_id,
                item_id,
            )
            metrics = {key: 0.0 for key in METRIC_KEYS}
        else:
            metrics = evaluate_item(ranking, gold.gold[item_id], k)
        records.append(
            {
                "item_id": item_id,
                "retriever_id": run.retriever_id,
                "hop": gold.hop[item_id],
                "domain_tag": gold.domain[item_id],
                "missing": missing,
                **metrics,
            }
        )
    return records


def _mean(records: list[dict], key: str) -> float:
    return sum(r[key] for r in records) / len(records)


def metric_report(runs: list[RetrievalRun], gold: GoldSpec, k: int) -> dict:
    """Macro-averaged metrics per (retriever, domain, hop) and overall."""
    if not runs:
        raise ValidationError("no retrieval runs to evaluate")
    item_records: list[dict] = []
    slices: list[dict] = []
    overall: list[dict] = []
    for run in runs:
        records = evaluate_run(run, gold, k)
        item_records.extend(records)
        keys = sorted(
            {(r["domain_tag"], r["hop"]) for r in records},
            key=lambda pair: (pair[0], pair[1]),
        )
        for domain_tag, hop in keys:
            subset = [
                r
                for r in records
                if r["domain_tag"] == domain_tag and r["hop"] == hop
            ]
            slices.append(
                {
                    "retriever_id": run.retriever_id,
                    "domain_tag": domain_tag,
                    "hop": hop,
                    "items": len(subset),
                    **{key: _mean(subset, key) for key in METRIC_KEYS},
                }
            )
        overall.append(
            {
                "retriever_id": run.retriever_id,
                "items": len(records),
                **{key: _mean(records, key) for key in METRIC_KEYS},
            }
        )
    return {"k": k, "slices": slices, "overall": overall}


def render_table(report: dict) -> str:
    """Plain aligned text table of the sliced report."""
    k = report["k"]
    headers = (
        "retriever",
        "domain",
        "hop",
        "items",
        f"Coverage@{k}",
        f"PerfRecall@{k}",
        f"NDCG@{k}",
        "MRR",
    )
    rows = [headers]
    for row in report["slices"]:
        rows.append(
            (
                row["retriever_id"],
                row["domain_tag"],
                str(row["hop"]),
                str(row["items"]),
                f"{row['coverage_at_k']:.4f}",
                f"{row['perfrecall_at_k']:.4f}",
                f"{row['ndcg_at_k']:.4f}",
                f"{row['mrr']:.4f}",
            )
        )
    for row in report["overall"]:
        rows.append(
            (
                row["retriever_id"],
                "ALL",
                "-",
                str(row["items"]),
                f"{row['coverage_at_k']:.4f}",
                f"{row['perfrecall_at_k']:.4f}",
                f"{row['ndcg_at_k']:.4f}",
                f"{row['mrr']:.4f}",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    ]
    return "\n".join(lines) + "\n"
