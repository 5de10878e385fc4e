import json
import os
import threading

import httpx
import pytest

from redeval.corpus import count_tokens
from redeval.errors import ParseError, TransportError, ValidationError
from redeval.gateway.core import (
    Gateway,
    extract_json,
    render_candidate_lines,
    render_evidence_lines,
)
from redeval.gateway.mock import (
    MockBackend,
    mock_embedding,
    parse_candidate_lines,
    parse_evidence_lines,
)
from redeval.gateway.provider import HttpProviderBackend
from redeval.gateway.types import PASS, PriceTable
from redeval.util import unit_interval_hash


class ScriptedBackend:
    """Replays canned completions in order; counts calls."""

    kind = "scripted"
    default_embed_model = "scripted-embed"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0
        self.prompts = []

    def complete(self, template, payload, prompt):
        self.prompts.append(prompt)
        reply = self.replies[min(self.calls, len(self.replies) - 1)]
        self.calls += 1
        return reply, None, None

    def embed(self, texts, model_id=None):
        return [[1.0, 0.0] for _ in texts], model_id or self.default_embed_model, None


def scripted_gateway(registry, replies, **kwargs):
    return Gateway(ScriptedBackend(replies), registry=registry, **kwargs)


# -- parsing helpers --------------------------------------------------------


def test_extract_json_variants():
    assert extract_json('{"a": 1}') == {"a": 1}
    assert extract_json('```json\n{"a": 1}\n```') == {"a": 1}
    assert extract_json('Sure, here you go: {"a": 1} hope that helps') == {"a": 1}


def test_render_helpers_normalize():
    lines = render_candidate_lines([("c1", "a  b"), ("c2", "x\ny")])
    assert lines == "c1: a b\nc2: x y"
    assert render_evidence_lines(["p  q", "r"]) == "- p q\n- r"
    # mock-side parsers invert the rendering
    assert parse_candidate_lines(lines) == [("c1", "a b"), ("c2", "x y")]
    assert parse_evidence_lines("- p q\n- r") == ["p q", "r"]


# -- mock backend rules -----------------------------------------------------


def test_mock_extraction_splits_and_dedupes(gateway):
    atoms = gateway.extract(
        "atomic_extraction",
        {"chunk_text": "A fact here. Another fact. A fact here."},
    )
    assert atoms == ["A fact here.", "Another fact."]


def test_mock_validity_rules(gateway):
    verdicts = gateway.judge_batch(
        "validity_filter",
        {"atom_text": "The dam opened in 1931."},
        ["self_contained", "substantive", "factual"],
    )
    assert all(v.passed for v in verdicts.values())
    # marker fails exactly the marked criterion
    verdicts = gateway.judge_batch(
        "validity_filter",
        {"atom_text": "The dam opened in 1931. !fail:substantive"},
        ["self_contained", "substantive", "factual"],
    )
    assert verdicts["self_contained"].passed
    assert not verdicts["substantive"].passed
    assert verdicts["factual"].passed
    # fragments fail everything
    verdicts = gateway.judge_batch(
        "validity_filter", {"atom_text": "Two words"},
        ["self_contained", "substantive", "factual"],
    )
    assert not any(v.passed for v in verdicts.values())


def test_mock_equivalence_exact_match(gateway):
    verdicts = gateway.judge_batch(
        "equivalence_check",
        {
            "target_text": "The dam  opened in 1931.",
            "candidates": render_candidate_lines(
                [("a", "The dam opened in 1931."), ("b", "The dam opened in 1932.")]
            ),
        },
        ["a", "b"],
    )
    assert verdicts["a"].passed and not verdicts["b"].passed


def test_mock_rank_matches_hash_rule(registry):
    seed = 7
    gateway = Gateway(MockBackend(seed=seed), registry=registry)
    texts = ["gamma statement", "alpha statement", "beta statement"]
    ranking = gateway.rank_by_criterion("atom_rank_clarity", "clarity", texts)
    expected = sorted(
        range(3),
        key=lambda i: (
            -unit_interval_hash(str(seed), "atom_rank_clarity", texts[i]),
            i,
        ),
    )
    assert list(ranking.order) == [f"c{i:03d}" for i in expected]
    for i, text in enumerate(texts):
        assert ranking.raw_scores[f"c{i:03d}"] == pytest.approx(
            unit_interval_hash(str(seed), "atom_rank_clarity", text)
        )
    # ranking is 1-based
    assert ranking.rank_of(ranking.order[0]) == 1


def test_mock_rank_seed_sensitivity(registry):
    texts = [f"statement number {i}" for i in range(6)]
    orders = {
        seed: Gateway(MockBackend(seed=seed), registry=registry)
        .rank_by_criterion("atom_rank_clarity", "clarity", texts)
        .order
        for seed in (1, 2)
    }
    assert orders[1] != orders[2]


def test_mock_questions_and_filters(gateway):
    payload = {"evidence": render_evidence_lines(["E one.", "E two."]), "count": 3}
    questions = gateway.generate("question_generation", payload, 3)
    assert len(set(questions)) == 3
    verdict = gateway.judge(
        "filter_question_clarity",
        {"question": questions[0], "evidence": payload["evidence"]},
        "question_clarity",
    )
    assert verdict.passed
    verdict, answer = gateway.judge_answer(
        "filter_answerability",
        {
            "question": questions[0],
            "evidence": payload["evidence"],
            "chunks": "E one. E two.",
        },
        "answerability",
    )
    assert verdict.passed and answer == "E one."
    # marked question fails only that criterion, and a failed answerability
    # yields no answer
    marked = questions[0] + " !fail:answerability"
    verdict, answer = gateway.judge_answer(
        "filter_answerability",
        {"question": marked, "evidence": payload["evidence"], "chunks": "x"},
        "answerability",
    )
    assert not verdict.passed and answer is None


def test_mock_e2e_rules(gateway):
    answer = gateway.answer(
        "e2e_answer_context", {"question": "Q?", "context": "CTX block"}
    )
    assert answer == "CTX block"
    answer = gateway.answer("e2e_answer_parametric", {"question": "Q?"})
    assert answer == "Q?"
    verdict = gateway.judge(
        "e2e_correctness",
        {"question": "Q?", "reference": "The  Dam", "answer": "it was the dam indeed"},
        "correctness",
    )
    assert verdict.passed
    verdict = gateway.judge(
        "e2e_correctness",
        {"question": "Q?", "reference": "reservoir", "answer": "no idea"},
        "correctness",
    )
    assert not verdict.passed


def test_mock_embeddings_content_addressed():
    a = mock_embedding("same text", "m", 16)
    b = mock_embedding("same text", "m", 16)
    c = mock_embedding("other text", "m", 16)
    assert a == b and a != c
    assert sum(x * x for x in a) == pytest.approx(1.0)
    # independent of backend seed
    va = MockBackend(seed=1, embed_dim=16).embed(["same text"])[0][0]
    vb = MockBackend(seed=2, embed_dim=16).embed(["same text"])[0][0]
    assert va == vb


def test_mock_determinism_same_inputs(registry):
    payloads = {"chunk_text": "One. Two. Three."}
    outs = [
        Gateway(MockBackend(seed=5), registry=registry).extract(
            "atomic_extraction", payloads
        )
        for _ in range(2)
    ]
    assert outs[0] == outs[1]


# -- re-ask and repair ------------------------------------------------------


def test_reask_recovers_then_parses(registry):
    good = json.dumps({"outcome": "Pass", "rationale": "ok"})
    gateway = scripted_gateway(registry, ["not json at all", good])
    verdict = gateway.judge(
        "filter_question_clarity", {"question": "q", "evidence": "e"}, "question_clarity"
    )
    assert verdict.passed
    assert gateway.backend.calls == 2
    assert gateway.warning_count == 1
    # the re-ask prompt carries a corrective suffix
    assert "could not be parsed" in gateway.backend.prompts[1]


def test_reask_failure_raises_parse_error_with_transcript(registry):
    gateway = scripted_gateway(registry, ["garbage", "still garbage"])
    with pytest.raises(ParseError) as err:
        gateway.judge(
            "filter_question_clarity", {"question": "q", "evidence": "e"},
            "question_clarity",
        )
    assert gateway.backend.calls == 2
    assert len(err.value.transcript) == 2
    assert err.value.transcript[0]["response"] == "garbage"


def test_outcome_must_be_pass_or_fail(registry):
    bad = json.dumps({"outcome": "Maybe"})
    gateway = scripted_gateway(registry, [bad, bad])
    with pytest.raises(ParseError):
        gateway.judge(
            "filter_question_clarity", {"question": "q", "evidence": "e"},
            "question_clarity",
        )


def test_ranking_permutation_repair(registry):
    reply = json.dumps(
        {"ranking": ["c2", "ghost", "c2", "c0"], "scores": {"c0": 0.5, "ghost": 0.9}}
    )
    gateway = scripted_gateway(registry, [reply])
    ranking = gateway.rank_by_criterion(
        "atom_rank_clarity", "clarity", [("c0", "x"), ("c1", "y"), ("c2", "z")]
    )
    # unknown and duplicate entries dropped, missing ids appended in input order
    assert list(ranking.order) == ["c2", "c0", "c1"]
    assert gateway.warning_count == 1
    assert ranking.raw_scores == {"c0": 0.5}


def test_rank_rejects_duplicate_candidate_ids(registry):
    gateway = scripted_gateway(registry, ["{}"])
    with pytest.raises(ValidationError):
        gateway.rank_by_criterion(
            "atom_rank_clarity", "clarity", [("c0", "x"), ("c0", "y")]
        )


def test_judge_batch_requires_all_keys(registry):
    partial = json.dumps({"verdicts": {"a": {"outcome": "Pass"}}})
    gateway = scripted_gateway(registry, [partial, partial])
    with pytest.raises(ParseError):
        gateway.judge_batch(
            "equivalence_check", {"target_text": "t", "candidates": "a: x\nb: y"},
            ["a", "b"],
        )


def test_judge_batch_drops_extra_keys_with_warning(registry):
    reply = json.dumps(
        {
            "verdicts": {
                "a": {"outcome": "Pass"},
                "zz": {"outcome": "Fail"},
            }
        }
    )
    gateway = scripted_gateway(registry, [reply])
    verdicts = gateway.judge_batch(
        "equivalence_check", {"target_text": "t", "candidates": "a: x"}, ["a"]
    )
    assert set(verdicts) == {"a"}
    assert gateway.warning_count == 1


def test_generate_enforces_count_and_distinctness(registry):
    three = json.dumps({"questions": ["q1", "q2", "q3"]})
    dup = json.dumps({"questions": ["q1", "q1", "q3"]})
    gateway = scripted_gateway(registry, [dup, three])
    out = gateway.generate(
        "question_generation", {"evidence": "- e", "count": 3}, 3
    )
    assert out == ["q1", "q2", "q3"]
    gateway = scripted_gateway(registry, [dup, dup])
    with pytest.raises(ParseError):
        gateway.generate("question_generation", {"evidence": "- e", "count": 3}, 3)


# -- concurrency, ledger, transcripts ---------------------------------------


def test_map_ordered_preserves_order(make_gateway):
    gateway = make_gateway(max_in_flight=4)
    items = list(range(23))
    assert gateway.map_ordered(lambda x: x * x, items) == [x * x for x in items]


def test_map_ordered_bounded_concurrency(registry):
    gateway = Gateway(MockBackend(), registry=registry, max_in_flight=3)
    active, peak = 0, 0
    lock = threading.Lock()

    def probe(_):
        nonlocal active, peak
        with gateway._slots:
            with lock:
                active += 1
                peak = max(peak, active)
            with lock:
                active -= 1
        return None

    gateway.map_ordered(probe, list(range(30)))
    assert peak <= 3


def test_ledger_records_stage_and_fallback_tokens(registry):
    gateway = Gateway(
        MockBackend(),
        registry=registry,
        prices=PriceTable(prompt_per_1k=1.0, completion_per_1k=2.0, embed_per_1k=0.5),
    )
    gateway.extract("atomic_extraction", {"chunk_text": "One. Two."})
    entry = gateway.ledger[0]
    assert entry.stage == "atomic_extraction"
    assert entry.prompt_tokens > 0 and entry.completion_tokens > 0
    gateway.embed(["hello world"])
    embed_entry = gateway.ledger[-1]
    assert embed_entry.stage == "embedding"
    assert embed_entry.prompt_tokens == count_tokens("hello world")
    report = gateway.cost_report()
    assert set(report["stages"]) == {"atomic_extraction", "embedding"}
    assert report["total"]["calls"] == 2
    expected = (
        entry.prompt_tokens / 1000 * 1.0
        + entry.completion_tokens / 1000 * 2.0
        + embed_entry.prompt_tokens / 1000 * 0.5
    )
    assert report["total"]["cost_usd"] == pytest.approx(expected)


def test_embed_count_mismatch_rejected(registry):
    class ShortEmbed(ScriptedBackend):
        def embed(self, texts, model_id=None):
            return [[1.0, 0.0]], "m", None

    gateway = Gateway(ShortEmbed([]), registry=registry)
    with pytest.raises(ValidationError):
        gateway.embed(["a", "b"])


def test_transcripts_capture_prompt_and_response(registry, tmp_path):
    path = tmp_path / "transcripts.jsonl"
    gateway = Gateway(MockBackend(), registry=registry, transcript_path=path)
    gateway.extract("atomic_extraction", {"chunk_text": "Only one."})
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(records) == 1
    assert records[0]["template_id"] == "atomic_extraction"
    assert "Only one." in records[0]["prompt"]
    assert set(records[0]) == {"template_id", "prompt", "response"}


# -- provider backend -------------------------------------------------------


def chat_response(content, prompt_tokens=11, completion_tokens=7):
    return {
        "choices": [{"message": {"content": content}}],
        "usage": {
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
        },
    }


def make_provider(handler, env, monkeypatch, **kwargs):
    monkeypatch.setenv("REDEVAL_API_KEY", env)
    transport = httpx.MockTransport(handler)
    return HttpProviderBackend(
        endpoint="https://provider.test/v1",
        chat_model="chat-x",
        embed_model="embed-x",
        transport=transport,
        backoff_base=0.0,
        **kwargs,
    )


def test_provider_requires_api_key(monkeypatch):
    monkeypatch.delenv("REDEVAL_API_KEY", raising=False)
    with pytest.raises(ValidationError):
        HttpProviderBackend(
            endpoint="https://provider.test/v1", chat_model="c", embed_model="e"
        )


def test_provider_complete_parses_content_and_usage(registry, monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=chat_response('{"outcome": "Pass"}'))

    backend = make_provider(handler, "sk-test", monkeypatch)
    gateway = Gateway(backend, registry=registry)
    verdict = gateway.judge(
        "filter_question_clarity", {"question": "q", "evidence": "e"},
        "question_clarity",
    )
    assert verdict.outcome == PASS
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"]["model"] == "chat-x"
    entry = gateway.ledger[0]
    assert (entry.prompt_tokens, entry.completion_tokens) == (11, 7)


def test_provider_retries_on_429_then_succeeds(monkeypatch):
    attempts = {"n": 0}

    def handler(request):
        attempts["n"] += 1
        if attempts["n"] < 3:
            return httpx.Response(429, json={"error": "slow down"})
        return httpx.Response(200, json=chat_response("ok"))

    backend = make_provider(handler, "sk", monkeypatch)
    text, _, _ = backend.complete(None, {}, "prompt")
    assert text == "ok" and attempts["n"] == 3


def test_provider_exhausts_retries_to_transport_error(monkeypatch):
    def handler(request):
        return httpx.Response(503, json={"error": "down"})

    backend = make_provider(handler, "sk", monkeypatch)
    with pytest.raises(TransportError):
        backend.complete(None, {}, "prompt")


def test_provider_client_error_fails_fast(monkeypatch):
    attempts = {"n": 0}

    def handler(request):
        attempts["n"] += 1
        return httpx.Response(400, json={"error": "bad request"})

    backend = make_provider(handler, "sk", monkeypatch)
    with pytest.raises(TransportError):
        backend.complete(None, {}, "prompt")
    assert attempts["n"] == 1


def test_provider_embeddings_sorted_by_index(monkeypatch):
    def handler(request):
        body = json.loads(request.content)
        assert body["model"] == "embed-x"
        return httpx.Response(
            200,
            json={
                "data": [
                    {"index": 1, "embedding": [0.0, 1.0]},
                    {"index": 0, "embedding": [1.0, 0.0]},
                ],
                "usage": {"prompt_tokens": 5},
            },
        )

    backend = make_provider(handler, "sk", monkeypatch)
    vectors, model, usage = backend.embed(["a", "b"])
    assert vectors == [[1.0, 0.0], [0.0, 1.0]]
    assert model == "embed-x" and usage == 5
