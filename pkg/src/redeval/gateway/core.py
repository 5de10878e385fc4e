"""Gateway: the single choke-point for model judgments, generations, and
embeddings.

Every pipeline module calls through here, so retry/backoff, malformed-output
handling, cost accounting, and transcript capture live in exactly one place.
Malformed output gets one corrective re-ask; if the second reply still does
not parse, a typed ParseError carries the raw transcript. Rankings that come
back as a broken permutation (duplicates, unknown ids, missing ids) are
repaired deterministically and counted as warnings rather than failures.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

from ..corpus import count_tokens, normalize_whitespace
from ..errors import ParseError, ValidationError
from .templates import PromptTemplate, TemplateRegistry
from .types import (
    FAIL,
    PASS,
    CostLedgerEntry,
    CriterionRanking,
    EmbeddingVector,
    PriceTable,
    Verdict,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_IN_FLIGHT = 8

_REASK_SUFFIX = (
    "\n\nYour previous reply could not be parsed. "
    "Respond again with exactly the JSON shape requested and nothing else."
)


class _Malformed(Exception):
    """Internal: one parse attempt failed; the gateway may re-ask once."""


def extract_json(text: str) -> dict:
    """Pull the first JSON object out of a model reply.

    Tolerates markdown fences and prose around the object; anything without
    a parseable object is malformed.
    """
    text = text.strip()
    fenced = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fenced:
        text = fenced.group(1).strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        match = re.search(r"\{.*\}", text, re.DOTALL)
        if not match:
            raise _Malformed("no JSON object in reply")
        try:
            obj = json.loads(match.group(0))
        except json.JSONDecodeError as exc:
            raise _Malformed(f"invalid JSON: {exc}")
    if not isinstance(obj, dict):
        raise _Malformed("top-level JSON value is not an object")
    return obj


def _parse_outcome(value) -> str:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered == "pass":
            return PASS
        if lowered == "fail":
            return FAIL
    raise _Malformed(f"outcome {value!r} is neither Pass nor Fail")


def render_candidate_lines(candidates: Sequence[tuple[str, str]]) -> str:
    return "\n".join(
        f"{cand_id}: {normalize_whitespace(text)}" for cand_id, text in candidates
    )


def render_evidence_lines(texts: Iterable[str]) -> str:
    return "\n".join(f"- {normalize_whitespace(text)}" for text in texts)


class Gateway:
    def __init__(
        self,
        backend,
        prices: PriceTable | None = None,
        registry: TemplateRegistry | None = None,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transcript_path=None,
    ):
        if max_in_flight < 1:
            raise ValidationError("max_in_flight must be at least 1")
        self.backend = backend
        self.prices = prices or PriceTable()
        self.registry = registry or TemplateRegistry()
        self.max_in_flight = max_in_flight
        self.transcript_path = transcript_path
        self.warning_count = 0
        self.ledger: list[CostLedgerEntry] = []
        self._lock = threading.Lock()
        self._slots = threading.Semaphore(max_in_flight)

    # -- plumbing ---------------------------------------------------------

    def _record(self, stage: str, prompt_tokens: int, completion_tokens: int) -> None:
        embedding = stage == "embedding"
        entry = CostLedgerEntry(
            stage=stage,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            cost_usd=self.prices.cost(prompt_tokens, completion_tokens, embedding),
        )
        with self._lock:
            self.ledger.append(entry)

    def _warn(self, message: str) -> None:
        with self._lock:
            self.warning_count += 1
        logger.warning(message)

    def _transcribe(self, record: dict) -> None:
        if self.transcript_path is None:
            return
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            with open(self.transcript_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def _complete(self, template: PromptTemplate, payload: dict, prompt: str) -> str:
        with self._slots:
            text, prompt_tokens, completion_tokens = self.backend.complete(
                template, payload, prompt
            )
        if prompt_tokens is None:
            prompt_tokens = count_tokens(prompt)
        if completion_tokens is None:
            completion_tokens = count_tokens(text)
        self._record(template.stage, prompt_tokens, completion_tokens)
        self._transcribe(
            {"template_id": template.template_id, "prompt": prompt, "response": text}
        )
        return text

    def _call(self, template_id: str, payload: dict, parse: Callable[[str], object]):
        """One templated call with a single re-ask on malformed output."""
        template = self.registry.get(template_id)
        prompt = template.render(payload)
        transcript = []
        raw = self._complete(template, payload, prompt)
        transcript.append({"prompt": prompt, "response": raw})
        try:
            return parse(raw)
        except _Malformed as first:
            self._warn(f"{template_id}: malformed reply ({first}), re-asking once")
            raw = self._complete(template, payload, prompt + _REASK_SUFFIX)
            transcript.append({"prompt": prompt + _REASK_SUFFIX, "response": raw})
            try:
                return parse(raw)
            except _Malformed as second:
                raise ParseError(
                    f"{template_id}: output unusable after re-ask: {second}",
                    transcript=transcript,
                ) from second

    def map_ordered(self, fn: Callable, items: Sequence) -> list:
        """Apply fn over items with bounded parallelism, preserving order."""
        if len(items) <= 1 or self.max_in_flight == 1:
            return [fn(item) for item in items]
        workers = min(self.max_in_flight, len(items))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    # -- operations --------------------------------------------------------

    def judge(self, template_id: str, payload: dict, criterion_id: str) -> Verdict:
        def parse(raw: str) -> Verdict:
            obj = extract_json(raw)
            return Verdict(
                outcome=_parse_outcome(obj.get("outcome")),
                rationale=str(obj.get("rationale", "")),
                criterion_id=criterion_id,
            )

        return self._call(template_id, payload, parse)

    def judge_batch(
        self, template_id: str, payload: dict, keys: Sequence[str]
    ) -> dict[str, Verdict]:
        """One call, one verdict per key (criteria or candidate ids)."""

        def parse(raw: str) -> dict[str, Verdict]:
            obj = extract_json(raw)
            verdicts = obj.get("verdicts")
            if not isinstance(verdicts, dict):
                raise _Malformed("missing verdicts object")
            out: dict[str, Verdict] = {}
            for key in keys:
                entry = verdicts.get(key)
                if not isinstance(entry, dict):
                    raise _Malformed(f"no verdict for key {key!r}")
                out[key] = Verdict(
                    outcome=_parse_outcome(entry.get("outcome")),
                    rationale=str(entry.get("rationale", "")),
                    criterion_id=key,
                )
            extras = set(verdicts) - set(keys)
            if extras:
                self._warn(
                    f"{template_id}: dropped verdicts for unknown keys {sorted(extras)}"
                )
            return out

        return self._call(template_id, payload, parse)

    def judge_answer(
        self, template_id: str, payload: dict, criterion_id: str
    ) -> tuple[Verdict, str | None]:
        """A judgment that may also carry a generated answer (answerability)."""

        def parse(raw: str):
            obj = extract_json(raw)
            verdict = Verdict(
                outcome=_parse_outcome(obj.get("outcome")),
                rationale=str(obj.get("rationale", "")),
                criterion_id=criterion_id,
            )
            answer = obj.get("answer")
            if verdict.passed and isinstance(answer, str) and answer.strip():
                return verdict, answer.strip()
            return verdict, None

        return self._call(template_id, payload, parse)

    def rank_by_criterion(
        self,
        template_id: str,
        criterion_id: str,
        candidates: Sequence[tuple[str, str]] | Sequence[str],
        extra_payload: dict | None = None,
    ) -> CriterionRanking:
        """Rank candidates under one criterion; repairs broken permutations.

        Candidates are (id, text) pairs; bare strings get positional ids.
        """
        if candidates and isinstance(candidates[0], str):
            pairs = [(f"c{i:03d}", text) for i, text in enumerate(candidates)]
        else:
            pairs = [(str(cid), str(text)) for cid, text in candidates]
        if not pairs:
            raise ValidationError("rank_by_criterion needs at least one candidate")
        ids = [cid for cid, _ in pairs]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate candidate ids in ranking request")
        payload = {"candidates": render_candidate_lines(pairs)}
        if extra_payload:
            payload.update(extra_payload)

        def parse(raw: str) -> CriterionRanking:
            obj = extract_json(raw)
            ranking = obj.get("ranking")
            if not isinstance(ranking, list):
                raise _Malformed("missing ranking list")
            known = set(ids)
            seen: set[str] = set()
            order: list[str] = []
            repaired = False
            for item in ranking:
                cid = str(item)
                if cid not in known or cid in seen:
                    repaired = True
                    continue
                seen.add(cid)
                order.append(cid)
            for cid in ids:  # append anything the model dropped, input order
                if cid not in seen:
                    repaired = True
                    order.append(cid)
            if repaired:
                self._warn(f"{template_id}: repaired ranking permutation")
            raw_scores: dict[str, float] = {}
            scores = obj.get("scores")
            if isinstance(scores, dict):
                for cid, value in scores.items():
                    if cid in known and isinstance(value, (int, float)):
                        raw_scores[cid] = float(value)
            return CriterionRanking(
                criterion_id=criterion_id,
                order=tuple(order),
                raw_scores=raw_scores,
            )

        return self._call(template_id, payload, parse)

    def select_ids(self, template_id: str, payload: dict) -> list[str]:
        def parse(raw: str) -> list[str]:
            obj = extract_json(raw)
            selected = obj.get("selected")
            if not isinstance(selected, list):
                raise _Malformed("missing selected list")
            return [str(s).strip() for s in selected]

        return self._call(template_id, payload, parse)

    def extract(self, template_id: str, payload: dict) -> list[str]:
        def parse(raw: str) -> list[str]:
            obj = extract_json(raw)
            atoms = obj.get("atoms")
            if not isinstance(atoms, list):
                raise _Malformed("missing atoms list")
            return [str(a).strip() for a in atoms if str(a).strip()]

        return self._call(template_id, payload, parse)

    def generate(self, template_id: str, payload: dict, n: int) -> list[str]:
        """Generate exactly n distinct texts; anything else is malformed."""
        if n < 1:
            raise ValidationError("generate needs n >= 1")

        def parse(raw: str) -> list[str]:
            obj = extract_json(raw)
            questions = obj.get("questions")
            if not isinstance(questions, list):
                raise _Malformed("missing questions list")
            texts = [str(q).strip() for q in questions if str(q).strip()]
            if len(texts) != n or len(set(texts)) != n:
                raise _Malformed(
                    f"expected {n} distinct texts, got {len(texts)} "
                    f"({len(set(texts))} distinct)"
                )
            return texts

        return self._call(template_id, payload, parse)

    def answer(self, template_id: str, payload: dict) -> str:
        """Free-text completion (end-to-end answering); no JSON contract."""
        template = self.registry.get(template_id)
        prompt = template.render(payload)
        raw = self._complete(template, payload, prompt)
        return raw.strip()

    def embed(
        self, texts: Sequence[str], model_id: str | None = None
    ) -> list[EmbeddingVector]:
        if not texts:
            return []
        with self._slots:
            vectors, model, usage_tokens = self.backend.embed(list(texts), model_id)
        if len(vectors) != len(texts):
            raise ValidationError(
                f"backend returned {len(vectors)} embeddings for {len(texts)} texts"
            )
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ValidationError(f"inconsistent embedding dimensions {sorted(dims)}")
        if usage_tokens is None:
            usage_tokens = sum(count_tokens(t) for t in texts)
        self._record("embedding", usage_tokens, 0)
        return [EmbeddingVector(values=tuple(v), model_id=model) for v in vectors]

    # -- accounting --------------------------------------------------------

    def cost_report(self) -> dict:
        """Aggregate the ledger by stage.

        Costs are recomputed from integer token totals so the report is
        independent of call completion order.
        """
        stages: dict[str, dict] = {}
        with self._lock:
            entries = list(self.ledger)
        for entry in entries:
            row = stages.setdefault(
                entry.stage,
                {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0},
            )
            row["calls"] += 1
            row["prompt_tokens"] += entry.prompt_tokens
            row["completion_tokens"] += entry.completion_tokens
        total = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0, "cost_usd": 0.0}
        for stage, row in stages.items():
            row["cost_usd"] = self.prices.cost(
                row["prompt_tokens"], row["completion_tokens"], stage == "embedding"
            )
            total["calls"] += row["calls"]
            total["prompt_tokens"] += row["prompt_tokens"]
            total["completion_tokens"] += row["completion_tokens"]
            total["cost_usd"] += row["cost_usd"]
        return {"stages": stages, "total": total}
