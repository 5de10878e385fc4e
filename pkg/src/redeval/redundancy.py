"""Two-stage redundancy detection and corpus overlap statistics.

Stage one is an embedding sweep: for each target atom, every atom from a
*different* chunk whose cosine similarity clears the threshold becomes a
candidate. Stage two sends the candidates to the equivalence judge, and only
judged-equivalent atoms enter the target's redundancy set. Gold groups are
the origin chunk of an atom plus the chunks housing its equivalents; the
evaluation layer treats retrieving any chunk of a group as recovering that
fact.

Candidates are drawn from all extracted atoms, not just pool members: a
fact can be restated in a chunk whose own best atoms are different.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .atomics import AtomicUnit
from .errors import (
    DegenerateInputError,
    ParseError,
    StageOrderError,
    TransportError,
    ValidationError,
)
from .gateway.core import Gateway, render_candidate_lines

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.5
JUDGE_BATCH_SIZE = 16


@dataclass
class EquivalenceMap:
    """target atom_id -> ids judged equivalent, plus chunk lookup for both."""

    entries: dict[str, set[str]] = field(default_factory=dict)
    chunk_of: dict[str, str] = field(default_factory=dict)

    def equivalents(self, atom_id: str) -> set[str]:
        return self.entries.get(atom_id, set())

    def targets(self) -> list[str]:
        return list(self.entries)

    def to_records(self) -> list[dict]:
        return [
            {
                "target_atom_id": target,
                "target_chunk_id": self.chunk_of[target],
                "equivalents": [
                    {"atom_id": eq, "chunk_id": self.chunk_of[eq]}
                    for eq in sorted(ids)
                ],
            }
            for target, ids in self.entries.items()
        ]

    @classmethod
    def from_records(cls, records) -> "EquivalenceMap":
        eqmap = cls()
        for record in records:
            target = record["target_atom_id"]
            eqmap.chunk_of[target] = record["target_chunk_id"]
            ids = set()
            for eq in record.get("equivalents", []):
                ids.add(eq["atom_id"])
                eqmap.chunk_of[eq["atom_id"]] = eq["chunk_id"]
            eqmap.entries[target] = ids
        return eqmap


def embedding_matrix(ids, vectors) -> tuple[list[str], np.ndarray]:
    """Stack embeddings into a row-normalized matrix aligned with ids."""
    matrix = np.asarray([list(v.values) if hasattr(v, "values") else v for v in vectors], dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValidationError("embedding matrix shape does not match ids")
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm embedding vector")
    return list(ids), matrix / norms


def candidate_search(
    target: AtomicUnit,
    atoms: list[AtomicUnit],
    embeddings: dict[str, np.ndarray],
    tau: float = DEFAULT_TAU,
) -> list[tuple[str, float]]:
    """Brute-force cosine sweep for redundancy candidates.

    Returns (atom_id, cosine) pairs from chunks other than the target's,
    with cosine >= tau, ordered by descending cosine then atom id. A missing
    embedding means the embedding stage never ran for that atom: fatal.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must be in [0, 1], got {tau}")
    if target.atom_id not in embeddings:
        raise StageOrderError(
            f"no embedding for target atom {target.atom_id}",
            missing_artifact="atom_embeddings.jsonl",
        )
    query = np.asarray(embeddings[target.atom_id], dtype=float)
    query = query / np.linalg.norm(query)
    hits = []
    for atom in atoms:
        if atom.chunk_id == target.chunk_id:
            continue
        if atom.atom_id not in embeddings:
            raise StageOrderError(
                f"no embedding for atom {atom.atom_id}",
                missing_artifact="atom_embeddings.jsonl",
            )
        vec = np.asarray(embeddings[atom.atom_id], dtype=float)
        cosine = float(query @ (vec / np.linalg.norm(vec)))
        if cosine >= tau:
            hits.append((atom.atom_id, cosine))
    hits.sort(key=lambda pair: (-pair[1], pair[0]))
    return hits


def verify_equivalence(
    target: AtomicUnit,
    candidates: list[AtomicUnit],
    gateway: Gateway,
    batch_size: int = JUDGE_BATCH_SIZE,
) -> tuple[set[str], list[dict]]:
    """LLM-verify embedding candidates; returns (equivalent ids, pair log).

    No candidates means no calls. The pair log keeps every verdict so the
    equivalence artifact can be audited.
    """
    equivalents: set[str] = set()
    pair_log: list[dict] = []
    for start in range(0, len(candidates), batch_size):
        batch = candidates[start : start + batch_size]
        payload = {
            "target_text": target.text,
            "candidates": render_candidate_lines(
                [(a.atom_id, a.text) for a in batch]
            ),
        }
        verdicts = gateway.judge_batch(
            "equivalence_check", payload, [a.atom_id for a in batch]
        )
        for atom in batch:
            verdict = verdicts[atom.atom_id]
            pair_log.append(
                {
                    "atom_id": atom.atom_id,
                    "chunk_id": atom.chunk_id,
                    "outcome": verdict.outcome,
                    "rationale": verdict.rationale,
                }
            )
            if verdict.passed:
                equivalents.add(atom.atom_id)
    return equivalents, pair_log


def build_equivalence_map(
    targets: list[AtomicUnit],
    all_atoms: list[AtomicUnit],
    embeddings: dict[str, np.ndarray],
    gateway: Gateway,
    tau: float = DEFAULT_TAU,
) -> tuple[EquivalenceMap, list[dict]]:
    """Run both stages for every target; every target gets an entry (possibly
    empty), so the redundancy denominator is well defined."""
    atoms_by_id = {a.atom_id: a for a in all_atoms}
    eqmap = EquivalenceMap()
    for atom in all_atoms:
        eqmap.chunk_of[atom.atom_id] = atom.chunk_id
    records = []

    def process(target: AtomicUnit):
        hits = candidate_search(target, all_atoms, embeddings, tau)
        candidates = [atoms_by_id[atom_id] for atom_id, _ in hits]
        try:
            equivalents, pair_log = verify_equivalence(target, candidates, gateway)
        except (ParseError, TransportError) as exc:
            logger.warning(
                "equivalence verification failed for %s: %s", target.atom_id, exc
            )
            equivalents, pair_log = set(), [{"error": str(exc)}]
        cosines = dict(hits)
        for entry in pair_log:
            if "atom_id" in entry:
                entry["cosine"] = cosines[entry["atom_id"]]
        return target, equivalents, pair_log

    for target, equivalents, pair_log in gateway.map_ordered(process, targets):
        eqmap.entries[target.atom_id] = equivalents
        records.append(
            {
                "target_atom_id": target.atom_id,
                "target_chunk_id": target.chunk_id,
                "equivalents": [
                    {"atom_id": eq, "chunk_id": eqmap.chunk_of[eq]}
                    for eq in sorted(equivalents)
                ],
                "checked": pair_log,
            }
        )
    return eqmap, records


def similarity_stat(embeddings) -> float:
    """100 x mean cosine over all distinct pairs of the given embeddings.

    Full pairwise computation, no sampling. Fewer than two vectors leave
    the mean undefined.
    """
    matrix = np.asarray(
        [list(v.values) if hasattr(v, "values") else v for v in embeddings],
        dtype=float,
    )
    n = matrix.shape[0] if matrix.ndim == 2 else 0
    if n < 2:
        raise DegenerateInputError("similarity needs at least two embeddings")
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm embedding vector")
    unit = matrix / norms
    gram = unit @ unit.T
    upper = gram[np.triu_indices(n, k=1)]
    return 100.0 * float(upper.mean())


def redundancy_stat(eqmap: EquivalenceMap, symmetrize: bool = False) -> float:
    """Percent of targets with at least one judged-equivalent atom elsewhere.

    Directional by default: a target counts only via its own entry. With
    symmetrize=True, a target also counts when some other target claims it
    as an equivalent.
    """
    targets = eqmap.targets()
    if not targets:
        raise DegenerateInputError("redundancy needs a non-empty target set")
    entries = {t: set(ids) for t, ids in eqmap.entries.items()}
    if symmetrize:
        for target, ids in eqmap.entries.items():
            for eq in ids:
                if eq in entries:
                    entries[eq].add(target)
    redundant = sum(1 for t in targets if entries[t])
    return 100.0 * redundant / len(targets)


def gold_group(atom_id: str, eqmap: EquivalenceMap) -> frozenset[str]:
    """Chunks that can supply this atom's fact: its origin chunk plus every
    chunk housing a judged-equivalent atom."""
    if atom_id not in eqmap.chunk_of:
        raise ValidationError(f"unknown atom {atom_id} in gold group lookup")
    chunks = {eqmap.chunk_of[atom_id]}
    for eq in eqmap.equivalents(atom_id):
        chunks.add(eqmap.chunk_of[eq])
    return frozenset(chunks)
