import random

import pytest

from redeval.errors import ValidationError
from redeval.fusion import (
    FusedRanking,
    RankingSet,
    base_fuse,
    base_transform_counterexample,
    minmax_fuse,
    rrf_fuse,
)
from redeval.gateway.types import CriterionRanking


def ranking(criterion, order, scores=None):
    return CriterionRanking(
        criterion_id=criterion, order=tuple(order), raw_scores=scores or {}
    )


def make_set(candidates, per_criterion):
    return RankingSet(candidates=tuple(candidates), per_criterion=tuple(per_criterion))


ABC = make_set(
    ["A", "B", "C"],
    [ranking("c1", ["A", "B", "C"]), ranking("c2", ["C", "A", "B"])],
)


def test_ranking_set_validation():
    with pytest.raises(ValidationError):
        make_set(["A", "B"], [ranking("c1", ["A"])])  # coverage mismatch
    with pytest.raises(ValidationError):
        make_set(["A", "A"], [ranking("c1", ["A", "A"])])  # duplicate ids
    with pytest.raises(ValidationError):
        make_set(["A"], [])  # no criteria
    with pytest.raises(ValidationError):
        make_set(["A", "B"], [ranking("c1", ["A", "X"])])  # foreign id


def test_rrf_scores_sum_of_reciprocal_ranks():
    fused = rrf_fuse(ABC)
    # frozen: A = 1/1 + 1/2, B = 1/2 + 1/3, C = 1/3 + 1/1
    assert fused.scores["A"] == 1.5
    assert fused.scores["B"] == 0.8333333333333333
    assert fused.scores["C"] == 1.3333333333333333
    assert fused.order == ("A", "C", "B")
    assert fused.method == "RRF"
    assert fused.top() == "A"


def test_rrf_tie_breaks_lexicographically():
    tied = make_set(
        ["b", "a"],
        [ranking("c1", ["a", "b"]), ranking("c2", ["b", "a"])],
    )
    fused = rrf_fuse(tied)
    assert fused.scores["a"] == fused.scores["b"]
    assert fused.order == ("a", "b")


def test_base_fuse_means_raw_scores():
    rs = make_set(
        ["A", "B"],
        [
            ranking("c1", ["A", "B"], {"A": 0.9, "B": 0.8}),
            ranking("c2", ["B", "A"], {"A": 0.1, "B": 0.3}),
        ],
    )
    fused = base_fuse(rs)
    assert fused.scores["A"] == pytest.approx(0.5)
    assert fused.scores["B"] == pytest.approx(0.55)
    assert fused.order == ("B", "A")
    assert fused.method == "Base"


def test_minmax_fuse_normalizes_per_criterion():
    rs = make_set(
        ["A", "B"],
        [
            ranking("c1", ["A", "B"], {"A": 0.9, "B": 0.8}),
            ranking("c2", ["B", "A"], {"A": 0.1, "B": 0.3}),
        ],
    )
    fused = minmax_fuse(rs)
    # each criterion normalizes to {1, 0}; means tie at 0.5, lexicographic order
    assert fused.scores["A"] == pytest.approx(0.5)
    assert fused.scores["B"] == pytest.approx(0.5)
    assert fused.order == ("A", "B")


def test_minmax_degenerate_criterion_contributes_half():
    rs = make_set(
        ["A", "B"],
        [
            ranking("c1", ["A", "B"], {"A": 0.7, "B": 0.7}),
            ranking("c2", ["A", "B"], {"A": 1.0, "B": 0.0}),
        ],
    )
    fused = minmax_fuse(rs)
    assert fused.scores["A"] == pytest.approx((0.5 + 1.0) / 2)
    assert fused.scores["B"] == pytest.approx((0.5 + 0.0) / 2)


def test_score_fusers_require_raw_scores():
    for fuse in (base_fuse, minmax_fuse):
        with pytest.raises(ValidationError):
            fuse(ABC)  # ABC carries no raw scores


def test_rrf_ignores_raw_score_scale():
    scaled = make_set(
        ["A", "B", "C"],
        [
            ranking("c1", ["A", "B", "C"], {"A": 1e6, "B": 2.0, "C": 1.0}),
            ranking("c2", ["C", "A", "B"], {"A": 0.2, "B": 0.1, "C": 0.9}),
        ],
    )
    assert rrf_fuse(scaled).order == rrf_fuse(ABC).order


def test_shipped_base_counterexample():
    original, transformed = base_transform_counterexample()
    # same rankings, strictly monotone transform on one criterion's scores
    assert [r.order for r in original.per_criterion] == [
        r.order for r in transformed.per_criterion
    ]
    assert base_fuse(original).order != base_fuse(transformed).order
    assert rrf_fuse(original).order == rrf_fuse(transformed).order
    # frozen endpoints of the flip
    assert base_fuse(original).order == ("B", "A")
    assert base_fuse(transformed).scores["A"] == pytest.approx(0.22433922005000007)
    assert base_fuse(transformed).scores["B"] == pytest.approx(0.20368709120000003)


def random_ranking_set(rng, max_candidates=8, max_criteria=5):
    n = rng.randint(2, max_candidates)
    ids = [f"x{i}" for i in range(n)]
    per_criterion = []
    for c in range(rng.randint(1, max_criteria)):
        order = ids[:]
        rng.shuffle(order)
        scores = {cid: rng.random() for cid in ids}
        per_criterion.append(ranking(f"crit{c}", order, scores))
    return make_set(ids, per_criterion)


def test_rrf_matches_bruteforce_on_random_instances():
    rng = random.Random(1234)
    for _ in range(300):
        rs = random_ranking_set(rng)
        fused = rrf_fuse(rs)
        for cid in rs.candidates:
            total = 0.0
            for crit in rs.per_criterion:
                total += 1.0 / (crit.order.index(cid) + 1)
            assert fused.scores[cid] == total  # bit-exact


def test_fused_ranking_top_requires_candidates():
    empty = FusedRanking(order=(), scores={}, method="RRF")
    with pytest.raises(ValidationError):
        empty.top()
