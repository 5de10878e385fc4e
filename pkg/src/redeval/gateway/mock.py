"""Seeded deterministic mock backend.

Every output is a pure function of (seed, template_id, payload); no wall
clock, no global RNG state. The rule table below is a contract the test
suite recomputes independently, so keep it stable:

- atomic_extraction: returns the chunk's sentences (rule-based splitter),
  deduplicated in order.
- validity_filter: each of the three criteria fails iff the statement has
  fewer than 3 tokens (fragments fail) or carries the marker
  ``!fail:<criterion_id>``; otherwise Pass.
- equivalence_check: a candidate passes iff its whitespace-normalized text
  equals the whitespace-normalized target text (exact-text-match rule).
- rank templates (atom_rank_*, question_rank_*, ablation_rank_*): candidate
  score = unit_interval_hash(str(seed), template_id, candidate_text); ranking
  is by descending score, ties by input position; scores are reported.
- evidence_selection: embeds candidate texts, takes the ``count`` candidates
  with highest cosine to the centroid (ties by candidate id), and returns
  them in input order.
- question_generation: ``count`` distinct question strings stamped with a
  digest of (seed, evidence).
- filter_* criteria: Fail iff the question text carries the marker
  ``!fail:<criterion_id>``; otherwise Pass. filter_answerability, when it
  passes, answers with the first designated evidence line.
- e2e_answer_context: echoes the provided context. e2e_answer_parametric:
  echoes the question. e2e_correctness: Pass iff the normalized reference is
  a substring of the normalized answer.
- embeddings: unit vectors drawn from a PRNG seeded by digest(model_id,
  text); identical texts embed identically, independent of the run seed.

Markers let tests force any single criterion to fail for a chosen input
without touching the others.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from ..corpus import count_tokens, normalize_whitespace, split_sentences
from ..util import short_digest, unit_interval_hash
from .templates import PromptTemplate

VALIDITY_CRITERIA = ("self_contained", "substantive", "factual")
MIN_VALID_TOKENS = 3
FAIL_MARKER = "!fail:"

_RANK_PREFIXES = ("atom_rank_", "question_rank_", "ablation_rank_")
_FILTER_CRITERIA = {
    "filter_contextual_independence": "contextual_independence",
    "filter_answer_exclusion": "answer_exclusion",
    "filter_information_equivalence": "information_equivalence",
    "filter_question_clarity": "question_clarity",
    "filter_answerability": "answerability",
}


def parse_candidate_lines(block: str) -> list[tuple[str, str]]:
    """Parse the ``id: text`` lines the gateway renders for candidates."""
    pairs = []
    for line in block.splitlines():
        line = line.strip()
        if not line:
            continue
        cand_id, _, text = line.partition(": ")
        pairs.append((cand_id, text))
    return pairs


def parse_evidence_lines(block: str) -> list[str]:
    lines = []
    for line in block.splitlines():
        line = line.strip()
        if line.startswith("- "):
            line = line[2:]
        if line:
            lines.append(line)
    return lines


def _normalize_answer(text: str) -> str:
    return " ".join(text.lower().split())


def mock_embedding(text: str, model_id: str, dim: int) -> list[float]:
    digest = hashlib.blake2b(
        f"{model_id}\x1f{text}".encode("utf-8"), digest_size=8
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return [float(x) for x in vec]


def has_fail_marker(text: str, criterion_id: str) -> bool:
    return f"{FAIL_MARKER}{criterion_id}" in text


class MockBackend:
    """Offline stand-in for the model provider. See module docstring."""

    kind = "mock"

    def __init__(self, seed: int = 42, embed_dim: int = 64):
        self.seed = seed
        self.embed_dim = embed_dim
        self.default_embed_model = f"mock-embed-{embed_dim}"

    # -- completions -----------------------------------------------------

    def complete(self, template: PromptTemplate, payload: dict, prompt: str):
        """Return (raw_text, prompt_tokens, completion_tokens).

        Token counts are None: the gateway falls back to counting rendered
        prompt and output tokens itself.
        """
        handler = self._handler_for(template.template_id)
        return handler(payload), None, None

    def _handler_for(self, template_id: str):
        if template_id == "atomic_extraction":
            return self._extract
        if template_id == "validity_filter":
            return self._validity
        if template_id == "equivalence_check":
            return self._equivalence
        if any(template_id.startswith(p) for p in _RANK_PREFIXES):
            return lambda payload: self._rank(template_id, payload)
        if template_id == "evidence_selection":
            return self._select
        if template_id == "question_generation":
            return self._questions
        if template_id == "filter_answerability":
            return self._answerability
        if template_id in _FILTER_CRITERIA:
            return lambda payload: self._filter(template_id, payload)
        if template_id == "e2e_answer_context":
            return lambda payload: str(payload["context"])
        if template_id == "e2e_answer_parametric":
            return lambda payload: str(payload["question"])
        if template_id == "e2e_correctness":
            return self._correctness
        raise KeyError(f"mock backend has no rule for template {template_id!r}")

    def _extract(self, payload: dict) -> str:
        sentences = split_sentences(str(payload["chunk_text"]))
        seen, atoms = set(), []
        for sentence in sentences:
            if sentence not in seen:
                seen.add(sentence)
                atoms.append(sentence)
        return json.dumps({"atoms": atoms}, ensure_ascii=False)

    def _validity(self, payload: dict) -> str:
        text = str(payload["atom_text"])
        fragment = count_tokens(text) < MIN_VALID_TOKENS
        verdicts = {}
        for criterion in VALIDITY_CRITERIA:
            failed = fragment or has_fail_marker(text, criterion)
            verdicts[criterion] = {
                "outcome": "Fail" if failed else "Pass",
                "rationale": "fragment or marked" if failed else "ok",
            }
        return json.dumps({"verdicts": verdicts}, ensure_ascii=False)

    def _equivalence(self, payload: dict) -> str:
        target = normalize_whitespace(str(payload["target_text"]))
        verdicts = {}
        for cand_id, text in parse_candidate_lines(str(payload["candidates"])):
            same = normalize_whitespace(text) == target
            verdicts[cand_id] = {
                "outcome": "Pass" if same else "Fail",
                "rationale": "exact text match" if same else "texts differ",
            }
        return json.dumps({"verdicts": verdicts}, ensure_ascii=False)

    def _rank(self, template_id: str, payload: dict) -> str:
        pairs = parse_candidate_lines(str(payload["candidates"]))
        scored = []
        for position, (cand_id, text) in enumerate(pairs):
            score = unit_interval_hash(str(self.seed), template_id, text)
            scored.append((-score, position, cand_id, score))
        scored.sort()
        return json.dumps(
            {
                "ranking": [cand_id for _, _, cand_id, _ in scored],
                "scores": {cand_id: score for _, _, cand_id, score in scored},
            },
            ensure_ascii=False,
        )

    def _select(self, payload: dict) -> str:
        pairs = parse_candidate_lines(str(payload["candidates"]))
        count = int(payload["count"])
        vectors = np.array(
            [mock_embedding(text, self.default_embed_model, self.embed_dim) for _, text in pairs]
        )
        centroid = vectors.mean(axis=0)
        norm = np.linalg.norm(centroid)
        if norm == 0.0:
            order = sorted(range(len(pairs)), key=lambda i: pairs[i][0])
        else:
            centroid = centroid / norm
            sims = vectors @ centroid
            order = sorted(range(len(pairs)), key=lambda i: (-sims[i], pairs[i][0]))
        chosen = set(order[:count])
        selected = [pairs[i][0] for i in range(len(pairs)) if i in chosen]
        return json.dumps({"selected": selected}, ensure_ascii=False)

    def _questions(self, payload: dict) -> str:
        count = int(payload["count"])
        stamp = short_digest(str(self.seed), str(payload["evidence"]))
        questions = [
            f"Which connected records explain case {stamp}, considered from angle {i + 1}?"
            for i in range(count)
        ]
        return json.dumps({"questions": questions}, ensure_ascii=False)

    def _filter(self, template_id: str, payload: dict) -> str:
        criterion = _FILTER_CRITERIA[template_id]
        failed = has_fail_marker(str(payload["question"]), criterion)
        return json.dumps(
            {
                "outcome": "Fail" if failed else "Pass",
                "rationale": "marked to fail" if failed else "ok",
            },
            ensure_ascii=False,
        )

    def _answerability(self, payload: dict) -> str:
        criterion = _FILTER_CRITERIA["filter_answerability"]
        failed = has_fail_marker(str(payload["question"]), criterion)
        evidence = parse_evidence_lines(str(payload["evidence"]))
        answer = None if failed or not evidence else evidence[0]
        return json.dumps(
            {
                "outcome": "Fail" if failed else "Pass",
                "rationale": "marked to fail" if failed else "ok",
                "answer": answer,
            },
            ensure_ascii=False,
        )

    def _correctness(self, payload: dict) -> str:
        reference = _normalize_answer(str(payload["reference"]))
        answer = _normalize_answer(str(payload["answer"]))
        correct = bool(reference) and reference in answer
        return json.dumps(
            {
                "outcome": "Pass" if correct else "Fail",
                "rationale": "reference contained" if correct else "reference missing",
            },
            ensure_ascii=False,
        )

    # -- embeddings ------------------------------------------------------

    def embed(self, texts: list[str], model_id: str | None = None):
        model = model_id or self.default_embed_model
        return [mock_embedding(text, model, self.embed_dim) for text in texts], model, None
