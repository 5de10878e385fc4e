"""Atomic unit extraction, validity filtering, and top-k selection.

Each chunk is decomposed into atomic statements, every statement is screened
by a three-criteria validity judge, and survivors are ranked under five
quality criteria whose per-criterion rankings are fused by reciprocal rank.
The top-k fused atoms per chunk form the valid information pool that drives
redundancy tracking and question generation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .errors import ParseError, TransportError, ValidationError
from .fusion import RankingSet, rrf_fuse
from .gateway.core import Gateway
from .gateway.mock import VALIDITY_CRITERIA

logger = logging.getLogger(__name__)

ATOM_RANK_CRITERIA = (
    "validity",
    "completeness",
    "specificity",
    "clarity",
    "questionability",
)
DEFAULT_TOP_K = 3


@dataclass(frozen=True)
class AtomicUnit:
    atom_id: str
    chunk_id: str
    text: str
    validity_verdicts: dict[str, str] = field(default_factory=dict)
    valid: bool | None = None
    criterion_ranks: dict[str, int] = field(default_factory=dict)
    fused_score: float | None = None
    selected: bool = False

    def to_record(self) -> dict:
        return {
            "atom_id": self.atom_id,
            "chunk_id": self.chunk_id,
            "text": self.text,
            "validity_verdicts": dict(self.validity_verdicts),
            "valid": self.valid,
            "criterion_ranks": dict(self.criterion_ranks),
            "fused_score": self.fused_score,
            "selected": self.selected,
        }

    @classmethod
    def from_record(cls, record: dict) -> "AtomicUnit":
        return cls(
            atom_id=record["atom_id"],
            chunk_id=record["chunk_id"],
            text=record["text"],
            validity_verdicts=dict(record.get("validity_verdicts", {})),
            valid=record.get("valid"),
            criterion_ranks=dict(record.get("criterion_ranks", {})),
            fused_score=record.get("fused_score"),
            selected=bool(record.get("selected", False)),
        )


@dataclass(frozen=True)
class ChunkSkip:
    chunk_id: str
    reason: str


@dataclass
class ValidInformationPool:
    """Selected atoms plus lookup indexes, in deterministic pipeline order."""

    atoms: list[AtomicUnit]

    def __post_init__(self):
        self.by_id = {a.atom_id: a for a in self.atoms}
        if len(self.by_id) != len(self.atoms):
            raise ValidationError("duplicate atom ids in pool")
        self.by_chunk: dict[str, list[AtomicUnit]] = {}
        for atom in self.atoms:
            self.by_chunk.setdefault(atom.chunk_id, []).append(atom)

    def __len__(self) -> int:
        return len(self.atoms)

    def chunk_of(self, atom_id: str) -> str:
        return self.by_id[atom_id].chunk_id


def extract_atoms(chunk, gateway: Gateway) -> list[AtomicUnit]:
    """Decompose one chunk into atomic units with stable per-chunk ids.

    Byte-identical texts within a chunk collapse to the first occurrence.
    """
    texts = gateway.extract("atomic_extraction", {"chunk_text": chunk.text})
    seen: set[str] = set()
    atoms = []
    for text in texts:
        if text in seen:
            continue
        seen.add(text)
        atoms.append(
            AtomicUnit(
                atom_id=f"{chunk.chunk_id}:a{len(atoms):03d}",
                chunk_id=chunk.chunk_id,
                text=text,
            )
        )
    return atoms


def _judge_validity(atom: AtomicUnit, gateway: Gateway) -> AtomicUnit:
    verdicts = gateway.judge_batch(
        "validity_filter", {"atom_text": atom.text}, VALIDITY_CRITERIA
    )
    return replace(
        atom,
        validity_verdicts={c: verdicts[c].outcome for c in VALIDITY_CRITERIA},
        valid=all(verdicts[c].passed for c in VALIDITY_CRITERIA),
    )


def filter_validity(atoms: list[AtomicUnit], gateway: Gateway) -> list[AtomicUnit]:
    """Judge every atom on the three validity criteria in one call each.

    Returns all atoms with verdicts recorded and `valid` set; an atom is
    valid only if all three criteria pass.
    """
    return gateway.map_ordered(lambda atom: _judge_validity(atom, gateway), atoms)


def rank_and_select(
    atoms: list[AtomicUnit], gateway: Gateway, k: int = DEFAULT_TOP_K
) -> list[AtomicUnit]:
    """Five-criteria fused ranking; keeps the top-k atoms of one chunk.

    Fewer than two atoms are selected outright with no ranking calls.
    """
    if k < 1:
        raise ValidationError("top-k must be at least 1")
    if not atoms:
        return []
    if len(atoms) < 2:
        return [replace(atoms[0], selected=True, fused_score=None)]
    pairs = [(atom.atom_id, atom.text) for atom in atoms]
    per_criterion = tuple(
        gateway.rank_by_criterion(f"atom_rank_{criterion}", criterion, pairs)
        for criterion in ATOM_RANK_CRITERIA
    )
    fused = rrf_fuse(
        RankingSet(
            candidates=tuple(atom.atom_id for atom in atoms),
            per_criterion=per_criterion,
        )
    )
    keep = set(fused.order[:k])
    ranked = []
    for atom in atoms:
        ranks = {r.criterion_id: r.rank_of(atom.atom_id) for r in per_criterion}
        ranked.append(
            replace(
                atom,
                criterion_ranks=ranks,
                fused_score=fused.scores[atom.atom_id],
                selected=atom.atom_id in keep,
            )
        )
    return ranked


def build_pool(
    chunks,
    gateway: Gateway,
    k: int = DEFAULT_TOP_K,
) -> tuple[ValidInformationPool, list[AtomicUnit], list[ChunkSkip]]:
    """Run extract -> validity -> rank/select over a chunk list.

    Gateway failures skip the offending chunk and are reported, never
    silently swallowed. Returns (pool of selected atoms, all atoms with
    their verdicts, skip records).
    """

    def process(chunk):
        try:
            extracted = extract_atoms(chunk, gateway)
            with_verdicts = [_judge_validity(a, gateway) for a in extracted]
            valid = [a for a in with_verdicts if a.valid]
            ranked = rank_and_select(valid, gateway, k)
            ranked_by_id = {a.atom_id: a for a in ranked}
            merged = [ranked_by_id.get(a.atom_id, a) for a in with_verdicts]
            return merged, None
        except (ParseError, TransportError) as exc:
            logger.warning("skipping chunk %s: %s", chunk.chunk_id, exc)
            return None, ChunkSkip(chunk_id=chunk.chunk_id, reason=str(exc))

    results = gateway.map_ordered(process, list(chunks))
    all_atoms: list[AtomicUnit] = []
    skips: list[ChunkSkip] = []
    for merged, skip in results:
        if skip is not None:
            skips.append(skip)
        else:
            all_atoms.extend(merged)
    pool = ValidInformationPool([a for a in all_atoms if a.selected])
    return pool, all_atoms, skips


def pool_stats(
    all_atoms: list[AtomicUnit],
    chunks,
    skips: list[ChunkSkip] | None = None,
) -> dict:
    """Corpus-construction statistics: chunk count, atom counts, validity
    pass rate (percent), and selected pool size."""
    chunk_list = list(chunks)
    total = len(all_atoms)
    valid = sum(1 for a in all_atoms if a.valid)
    selected = sum(1 for a in all_atoms if a.selected)
    return {
        "chunks": len(chunk_list),
        "total_atoms": total,
        "valid_atoms": valid,
        "valid_pass_rate": (100.0 * valid / total) if total else 0.0,
        "selected_atoms": selected,
        "skipped_chunks": [
            {"chunk_id": s.chunk_id, "reason": s.reason} for s in (skips or [])
        ],
    }
