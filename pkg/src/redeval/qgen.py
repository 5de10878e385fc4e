"""Multi-hop question generation with zero-tolerance logical filtering.

Per sample: draw a seeded subset of the pool, have the model pick a
connected evidence set of the requested hop count, generate several
candidate phrasings, judge every candidate on five logical criteria (one
failure disqualifies, no exceptions), rank the survivors under four
criteria fused by reciprocal rank, and assemble the winner into a benchmark
item whose gold is one redundancy-aware chunk group per evidence atom.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace

from .atomics import AtomicUnit, ValidInformationPool
from .errors import ParseError, SampleSkipped, TransportError, ValidationError
from .fusion import RankingSet, rrf_fuse
from .gateway.core import Gateway, render_candidate_lines, render_evidence_lines
from .redundancy import EquivalenceMap, gold_group
from .util import derive_seed

logger = logging.getLogger(__name__)

FILTER_CRITERIA = (
    "contextual_independence",
    "answer_exclusion",
    "information_equivalence",
    "question_clarity",
    "answerability",
)
QUESTION_RANK_CRITERIA = ("connectivity", "fluency", "essentiality", "validity")

DEFAULT_POOL_SAMPLE = 100
DEFAULT_CANDIDATES = 10
DEFAULT_HOPS = (1, 2, 3, 4)


@dataclass(frozen=True)
class QuestionCandidate:
    cand_id: str
    sample_id: str
    hop: int
    question: str
    evidence_atom_ids: tuple[str, ...]
    verdicts: dict[str, str] = field(default_factory=dict)
    answer: str | None = None
    passed_all: bool = False
    criterion_ranks: dict[str, int] = field(default_factory=dict)
    fused_score: float | None = None

    def to_record(self) -> dict:
        return {
            "cand_id": self.cand_id,
            "sample_id": self.sample_id,
            "hop": self.hop,
            "question": self.question,
            "evidence_atom_ids": list(self.evidence_atom_ids),
            "verdicts": dict(self.verdicts),
            "answer": self.answer,
            "passed_all": self.passed_all,
            "criterion_ranks": dict(self.criterion_ranks),
            "fused_score": self.fused_score,
        }


@dataclass(frozen=True)
class BenchmarkItem:
    item_id: str
    question: str
    answer: str
    hop: int
    evidence_atom_ids: tuple[str, ...]
    gold_groups: tuple[frozenset[str], ...]
    domain_tag: str

    def __post_init__(self):
        if self.hop != len(self.evidence_atom_ids):
            raise ValidationError(
                f"item {self.item_id}: hop {self.hop} != "
                f"{len(self.evidence_atom_ids)} evidence atoms"
            )
        if len(self.gold_groups) != len(self.evidence_atom_ids):
            raise ValidationError(
                f"item {self.item_id}: gold groups not aligned with evidence"
            )
        if any(not group for group in self.gold_groups):
            raise ValidationError(f"item {self.item_id}: empty gold group")

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "question": self.question,
            "answer": self.answer,
            "hop": self.hop,
            "evidence_atom_ids": list(self.evidence_atom_ids),
            "gold_groups": [sorted(group) for group in self.gold_groups],
            "domain_tag": self.domain_tag,
        }

    @classmethod
    def from_record(cls, record: dict) -> "BenchmarkItem":
        return cls(
            item_id=record["item_id"],
            question=record["question"],
            answer=record["answer"],
            hop=int(record["hop"]),
            evidence_atom_ids=tuple(record["evidence_atom_ids"]),
            gold_groups=tuple(
                frozenset(group) for group in record["gold_groups"]
            ),
            domain_tag=record["domain_tag"],
        )


def sample_pool(
    atoms: list[AtomicUnit], n: int, seed: int
) -> list[AtomicUnit]:
    """Seeded draw of up to n atoms without replacement.

    Implemented as a hash order (sort by digest of seed and atom id, take
    the first n), which is platform- and insertion-order-independent: the
    same seed always reproduces the same sample, different seeds diverge.
    """
    if n < 1:
        raise ValidationError("pool sample size must be at least 1")

    def key(atom: AtomicUnit) -> str:
        return hashlib.blake2b(
            f"{seed}\x1f{atom.atom_id}".encode("utf-8"), digest_size=16
        ).hexdigest()

    return sorted(atoms, key=key)[:n]


def select_connected(
    sampled: list[AtomicUnit],
    m: int,
    gateway: Gateway,
    sample_id: str,
) -> list[AtomicUnit]:
    """Ask the model for m connected evidence atoms out of the sample.

    A reply with the wrong count, duplicates, or ids outside the sample is
    re-asked once; a second violation skips the sample.
    """
    if m < 1:
        raise ValidationError("evidence size must be at least 1")
    if len(sampled) < m:
        raise SampleSkipped(
            f"{sample_id}: pool sample has {len(sampled)} atoms, need {m}"
        )
    by_id = {atom.atom_id: atom for atom in sampled}
    payload = {
        "candidates": render_candidate_lines(
            [(atom.atom_id, atom.text) for atom in sampled]
        ),
        "count": m,
    }

    def valid(ids: list[str]) -> bool:
        return len(ids) == m and len(set(ids)) == m and all(i in by_id for i in ids)

    ids = gateway.select_ids("evidence_selection", payload)
    if not valid(ids):
        logger.warning("%s: bad evidence selection %s, re-asking", sample_id, ids)
        ids = gateway.select_ids("evidence_selection", payload)
        if not valid(ids):
            raise SampleSkipped(
                f"{sample_id}: evidence selection invalid after re-ask: {ids}"
            )
    return [by_id[i] for i in ids]


def generate_candidates(
    evidence: list[AtomicUnit],
    s: int,
    gateway: Gateway,
    sample_id: str,
) -> list[QuestionCandidate]:
    """Generate s distinct question phrasings over one evidence set."""
    if s < 1:
        raise ValidationError("candidate count must be at least 1")
    payload = {
        "evidence": render_evidence_lines(a.text for a in evidence),
        "count": s,
    }
    texts = gateway.generate("question_generation", payload, s)
    hop = len(evidence)
    return [
        QuestionCandidate(
            cand_id=f"{sample_id}:q{i:02d}",
            sample_id=sample_id,
            hop=hop,
            question=text,
            evidence_atom_ids=tuple(a.atom_id for a in evidence),
        )
        for i, text in enumerate(texts)
    ]


def logical_filter(
    candidate: QuestionCandidate,
    evidence_texts: list[str],
    chunk_texts: list[str],
    gateway: Gateway,
) -> QuestionCandidate:
    """Judge one candidate on all five logical criteria.

    Zero tolerance: the candidate survives only with five passes. All five
    are always judged so per-criterion pass rates stay comparable.
    Answerability doubles as answer generation; a pass without a usable
    answer is downgraded to a failure.
    """
    evidence_block = render_evidence_lines(evidence_texts)
    verdicts: dict[str, str] = {}
    for criterion in FILTER_CRITERIA[:4]:
        verdict = gateway.judge(
            f"filter_{criterion}",
            {"question": candidate.question, "evidence": evidence_block},
            criterion,
        )
        verdicts[criterion] = verdict.outcome
    answer_verdict, answer = gateway.judge_answer(
        "filter_answerability",
        {
            "question": candidate.question,
            "evidence": evidence_block,
            "chunks": "\n\n".join(chunk_texts),
        },
        "answerability",
    )
    outcome = answer_verdict.outcome
    if answer_verdict.passed and answer is None:
        logger.warning(
            "%s: answerability passed without an answer, downgrading",
            candidate.cand_id,
        )
        outcome = "Fail"
    verdicts["answerability"] = outcome
    passed_all = all(verdicts[c] == "Pass" for c in FILTER_CRITERIA)
    return replace(
        candidate,
        verdicts=verdicts,
        answer=answer if passed_all else None,
        passed_all=passed_all,
    )


def rank_questions(
    candidates: list[QuestionCandidate],
    evidence_texts: list[str],
    gateway: Gateway,
) -> tuple[QuestionCandidate | None, list[QuestionCandidate]]:
    """Four-criteria fused ranking over the surviving candidates.

    Returns (winner, candidates with ranks attached). No survivors means no
    item; a single survivor wins without ranking calls.
    """
    if not candidates:
        return None, []
    if any(not c.passed_all for c in candidates):
        raise ValidationError("rank_questions received a filtered-out candidate")
    if len(candidates) == 1:
        return candidates[0], list(candidates)
    pairs = [(c.cand_id, c.question) for c in candidates]
    extra = {"evidence": render_evidence_lines(evidence_texts)}
    per_criterion = tuple(
        gateway.rank_by_criterion(
            f"question_rank_{criterion}", criterion, pairs, extra_payload=extra
        )
        for criterion in QUESTION_RANK_CRITERIA
    )
    fused = rrf_fuse(
        RankingSet(
            candidates=tuple(c.cand_id for c in candidates),
            per_criterion=per_criterion,
        )
    )
    enriched = [
        replace(
            c,
            criterion_ranks={
                r.criterion_id: r.rank_of(c.cand_id) for r in per_criterion
            },
            fused_score=fused.scores[c.cand_id],
        )
        for c in candidates
    ]
    winner = next(c for c in enriched if c.cand_id == fused.order[0])
    return winner, enriched


def assemble_item(
    winner: QuestionCandidate,
    eqmap: EquivalenceMap,
    domain_tag: str,
) -> BenchmarkItem:
    """Turn the winning candidate into a benchmark item with expanded gold."""
    if winner.answer is None:
        raise ValidationError(f"{winner.cand_id}: winner has no reference answer")
    return BenchmarkItem(
        item_id=winner.sample_id,
        question=winner.question,
        answer=winner.answer,
        hop=winner.hop,
        evidence_atom_ids=winner.evidence_atom_ids,
        gold_groups=tuple(
            gold_group(atom_id, eqmap) for atom_id in winner.evidence_atom_ids
        ),
        domain_tag=domain_tag,
    )


@dataclass
class SampleOutcome:
    sample_id: str
    hop: int
    status: str  # item | no_winner | skipped | error
    reason: str = ""

    def to_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "hop": self.hop,
            "status": self.status,
            "reason": self.reason,
        }


def generate_benchmark(
    pool: ValidInformationPool,
    eqmap: EquivalenceMap,
    chunk_text_of: dict[str, str],
    gateway: Gateway,
    seed: int,
    hops=DEFAULT_HOPS,
    samples_per_hop: int = 25,
    pool_sample_size: int = DEFAULT_POOL_SAMPLE,
    candidates_per_sample: int = DEFAULT_CANDIDATES,
    domain_tag: str = "general",
    domain_of_chunk: dict[str, str] | None = None,
):
    """Drive the full generation loop.

    Returns (items, all candidates, per-sample outcomes, genstats). Gateway
    failures mark the sample failed and the loop continues.
    """
    bad_hops = [h for h in hops if h not in (1, 2, 3, 4)]
    if bad_hops:
        raise ValidationError(f"unsupported hop counts {bad_hops}")
    if not pool.atoms:
        raise ValidationError("cannot generate from an empty pool")
    items: list[BenchmarkItem] = []
    all_candidates: list[QuestionCandidate] = []
    outcomes: list[SampleOutcome] = []

    for hop in hops:
        for j in range(samples_per_hop):
            sample_id = f"h{hop}-s{j:04d}"
            sample_seed = derive_seed(seed, "sample", sample_id)
            sampled = sample_pool(pool.atoms, pool_sample_size, sample_seed)
            try:
                evidence = select_connected(sampled, hop, gateway, sample_id)
                candidates = generate_candidates(
                    evidence, candidates_per_sample, gateway, sample_id
                )
                evidence_texts = [a.text for a in evidence]
                chunk_ids = sorted({a.chunk_id for a in evidence})
                chunk_texts = [chunk_text_of[cid] for cid in chunk_ids]
                filtered = gateway.map_ordered(
                    lambda c: logical_filter(c, evidence_texts, chunk_texts, gateway),
                    candidates,
                )
                survivors = [c for c in filtered if c.passed_all]
                winner, ranked = rank_questions(survivors, evidence_texts, gateway)
                ranked_by_id = {c.cand_id: c for c in ranked}
                all_candidates.extend(
                    ranked_by_id.get(c.cand_id, c) for c in filtered
                )
                if winner is None:
                    outcomes.append(
                        SampleOutcome(sample_id, hop, "no_winner", "all candidates filtered out")
                    )
                    continue
                item_domain = domain_tag
                if domain_of_chunk is not None:
                    item_domain = domain_of_chunk.get(
                        evidence[0].chunk_id, domain_tag
                    )
                item = assemble_item(winner, eqmap, item_domain)
                items.append(item)
                outcomes.append(SampleOutcome(sample_id, hop, "item"))
            except SampleSkipped as exc:
                outcomes.append(SampleOutcome(sample_id, hop, "skipped", str(exc)))
            except (ParseError, TransportError) as exc:
                logger.warning("sample %s failed: %s", sample_id, exc)
                outcomes.append(SampleOutcome(sample_id, hop, "error", str(exc)))
    stats = generation_stats(all_candidates, outcomes)
    return items, all_candidates, outcomes, stats


def generation_stats(
    candidates: list[QuestionCandidate],
    outcomes: list[SampleOutcome],
) -> dict:
    """Per-hop and overall filter pass rates plus sample success rates.

    A sample succeeds when at least one candidate passes all five criteria
    (and a winner is assembled); rates are percentages.
    """

    def rates(cands: list[QuestionCandidate]) -> dict:
        out = {}
        for criterion in FILTER_CRITERIA:
            judged = [c for c in cands if criterion in c.verdicts]
            passed = sum(1 for c in judged if c.verdicts[criterion] == "Pass")
            out[criterion] = 100.0 * passed / len(judged) if judged else 0.0
        out["all_pass"] = (
            100.0 * sum(1 for c in cands if c.passed_all) / len(cands)
            if cands
            else 0.0
        )
        return out

    hops = sorted({o.hop for o in outcomes})
    per_hop = {}
    for hop in hops:
        hop_outcomes = [o for o in outcomes if o.hop == hop]
        hop_cands = [c for c in candidates if c.hop == hop]
        attempted = len(hop_outcomes)
        succeeded = sum(1 for o in hop_outcomes if o.status == "item")
        per_hop[str(hop)] = {
            "attempted": attempted,
            "items": succeeded,
            "success_rate": 100.0 * succeeded / attempted if attempted else 0.0,
            "filter_pass_rates": rates(hop_cands),
        }
    attempted = len(outcomes)
    succeeded = sum(1 for o in outcomes if o.status == "item")
    return {
        "per_hop": per_hop,
        "overall": {
            "attempted": attempted,
            "items": succeeded,
            "success_rate": 100.0 * succeeded / attempted if attempted else 0.0,
            "filter_pass_rates": rates(candidates),
        },
    }
