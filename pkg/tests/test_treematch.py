import random

import numpy as np
import pytest

from oracles import brute_exact, brute_partial, perturbed_subtree, random_tree
from taptree.baseline import BaselineModel, Stage, build_baseline
from taptree.exceptions import EmptyModelError, StageError
from taptree.tree import TaskTree
from taptree.treematch import (
    Anchor,
    MatchMode,
    MatchParams,
    TreePatternDetector,
    detect,
    exact_match,
    node_weights,
    partial_match,
)

SAME = MatchParams(MatchMode.PARTIAL_SAME_WEIGHT, 0.5)
VAR = MatchParams(MatchMode.PARTIAL_VARIABLE_WEIGHT, 0.5)


def T(text, tid=""):
    return TaskTree.parse(text, tree_id=tid)


def model(*texts, stage=Stage.SEMANTIC):
    trees = [T(x, f"b{i}") for i, x in enumerate(texts)]
    return BaselineModel(stage, trees, {t.tree_id: [t.tree_id] for t in trees})


def test_exact_examples():
    t = T("A(B*2(C),D)")
    assert exact_match(t, t)
    assert not exact_match(T("A(B*3)"), T("A(B*2)"))
    assert not exact_match(T("A(C,B)"), T("A(B,C)"))


def test_exact_anchor():
    t = T("R(A(B))")
    assert exact_match(T("A(B)"), t, Anchor.ANY_NODE)
    assert not exact_match(T("A(B)"), t, Anchor.ROOT_ONLY)


def test_partial_chain_scores():
    p, t = T("a(b(c))"), T("a(b)")
    r = partial_match(p, t, SAME)
    assert r.matched == frozenset({0, 1}) and r.score == pytest.approx(2 / 3)
    r = partial_match(p, t, VAR)
    assert (r.k, r.l) == (3, 6) and r.score == pytest.approx(0.5)


def test_partial_full_and_absent():
    t = T("A(B,C(D))")
    assert partial_match(t, t, SAME).score == 1.0
    r = partial_match(T("Z(B)"), t, SAME)
    assert r.score == 0.0 and r.matched == frozenset() and not r.match


def test_count_constraint_excludes_subtree():
    r = partial_match(T("A(B*3(C))"), T("A(B*2(C))"), SAME)
    assert r.matched == frozenset({0})


def test_verdict_threshold():
    r = partial_match(T("a(b(d))"), T("a(b(c))"), MatchParams("partial-same", 0.7))
    assert r.score == pytest.approx(2 / 3) and r.verdict == "NO_MATCH"
    r = partial_match(T("a(b(d))"), T("a(b(c))"), MatchParams("partial-same", 0.5))
    assert r.verdict == "MATCH"


@pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan")])
def test_threshold_range(bad):
    with pytest.raises(ValueError):
        MatchParams("partial-same", bad)


def test_partial_rejects_exact_mode():
    with pytest.raises(ValueError):
        partial_match(T("A"), T("A"), MatchParams("exact"))


def test_oracle_equivalence_500_pairs():
    rng = random.Random(2024)
    n_pos = n_part = 0
    for _ in range(500):
        t = random_tree(rng, rng.randint(1, 8))
        p = perturbed_subtree(rng, t) if rng.random() < 0.5 else random_tree(rng, rng.randint(1, 8))
        for anchor in Anchor:
            any_ = anchor is Anchor.ANY_NODE
            want = brute_exact(p, t, anchor_any=any_)
            assert exact_match(p, t, anchor) == want
            n_pos += want
            for mode in (MatchMode.PARTIAL_SAME_WEIGHT, MatchMode.PARTIAL_VARIABLE_WEIGHT):
                r = partial_match(p, t, MatchParams(mode, 0.5, anchor))
                k, best = brute_partial(p, t, node_weights(p, mode), anchor_any=any_)
                assert r.k == pytest.approx(k)
                if best:
                    assert r.mapping in best
                else:
                    assert r.mapping == {}
                n_part += 0 < r.score < 1
    # the sample exercises both outcomes
    assert n_pos > 100 and n_part > 100


def test_score_properties(rng):
    for _ in range(300):
        t = random_tree(rng, rng.randint(1, 8))
        p = perturbed_subtree(rng, t)
        for params in (SAME, VAR):
            r = partial_match(p, t, params)
            assert 0.0 <= r.score <= 1.0
            assert 0 in r.matched or not r.matched
            for c in r.matched - {0}:
                assert p.parents[c] in r.matched
            if exact_match(p, t):
                assert r.score == 1.0
            if r.score == 1.0:
                assert exact_match(p, t)


def test_detect_examples():
    m = model("a(b(c))")
    v = detect(T("a(b(c))", "q"), m, MatchParams("partial-same", 0.9))
    assert v.best_score == 1.0 and not v.anomalous
    q = T("a(b(d))", "q")
    assert detect(q, m, MatchParams("partial-same", 0.7)).anomalous
    assert not detect(q, m, MatchParams("partial-same", 0.5)).anomalous
    assert detect(T("a(b*2(c))"), m, MatchParams("exact")).anomalous


def test_detect_errors():
    with pytest.raises(EmptyModelError):
        detect(T("A"), model(), SAME)
    with pytest.raises(StageError):
        detect(T("A"), model("A", stage=Stage.TEMPORAL_SET), SAME)


def test_detect_order_invariant(rng):
    trees = [random_tree(rng, rng.randint(2, 7)) for _ in range(8)]
    queries = [random_tree(rng, rng.randint(2, 7)) for _ in range(30)]
    m = model(*[t.notation() for t in trees])
    rev = BaselineModel(m.stage, list(reversed(m.trees)), m.provenance)
    for q in queries:
        a = detect(q, m, SAME, exhaustive=True)
        b = detect(q, rev, SAME, exhaustive=True)
        assert (a.best_score, a.best_baseline_id) == (b.best_score, b.best_baseline_id)


def test_flagged_set_monotone_in_threshold(small_split):
    benign, malicious = small_split
    m = build_baseline(benign[:200])
    queries = benign[200:] + malicious
    flagged = []
    for d in (0.3, 0.5, 0.7, 0.9, 1.0):
        p = MatchParams("partial-same", d)
        flagged.append({i for i, q in enumerate(queries) if detect(q, m, p).anomalous})
    for lo, hi in zip(flagged, flagged[1:]):
        assert lo <= hi


def test_short_circuit_agrees_with_exhaustive(small_split):
    benign, malicious = small_split
    m = build_baseline(benign[:150], "clustered")
    for q in benign[150:220] + malicious:
        for d in (0.5, 0.9):
            p = MatchParams("partial-var", d)
            fast, full = detect(q, m, p), detect(q, m, p, exhaustive=True)
            assert fast.anomalous == full.anomalous


def test_detector_estimator(small_split):
    benign, malicious = small_split
    det = TreePatternDetector(threshold=0.9).fit(benign[:200])
    pred = det.predict(malicious)
    scores = det.score_samples(malicious)
    assert np.array_equal(pred, (scores < 0.9).astype(int))
    assert np.allclose(det.decision_function(malicious), scores - 0.9)
    assert len(det.detect(benign[200:210])) == 10


def test_detector_rejects_temporal():
    with pytest.raises(StageError):
        TreePatternDetector(stage="temporal").fit([T("A")])
