import itertools
import random

import numpy as np
import pytest
from sklearn.naive_bayes import BernoulliNB

from oracles import brute_contains, brute_spm, random_sequences
from taptree.exceptions import EmptyInputError, SingleClassError
from taptree.seqmine import (
    NoiseDetector,
    SequencePatternClassifier,
    SequentialPattern,
    SequentialPatternMiner,
    Trace,
    as_sequence,
    classify,
    contains,
    extract_traces,
    feature_matrix,
    maximal_patterns,
    mine_patterns,
    noise_score,
    noise_tolerance,
    select_features,
    support_of,
    train_classifier,
)
from taptree.tree import TaskTree


def S(*words):
    """``S("abc", "ac")`` -> singleton-itemset sequences."""
    return [as_sequence(list(w)) for w in words]


def items(pats):
    return {"".join(x[0] for x in p.items): p.support for p in pats}


# -- traces ------------------------------------------------------------------


def test_extract_examples():
    assert [t.items for t in extract_traces(TaskTree.parse("A"))] == [(("A",),)]
    tr = extract_traces(TaskTree.parse("A(B,C)", tree_id="x", label=1))
    assert [t.items for t in tr] == [(("A",), ("B",)), (("A",), ("C",))]
    assert all(t.label == 1 and t.tree_id == "x" for t in tr)
    assert [len(t) for t in extract_traces(TaskTree.parse("A(B(C))"))] == [3]


def test_extract_counts_leaves(rng):
    from oracles import random_tree

    for _ in range(50):
        t = random_tree(rng, rng.randint(1, 9))
        tr = extract_traces(t)
        assert len(tr) == len(t.leaves)
        assert [len(x) for x in tr] == [t.depths[i] for i in t.leaves]


def test_trace_rejects_empty():
    with pytest.raises(ValueError):
        Trace("t", "x", ())
    with pytest.raises(ValueError):
        as_sequence([[]])


# -- containment ---------------------------------------------------------------


def test_contains_examples():
    abc = as_sequence(["a", "b", "c"])
    assert contains(abc, ["a", "c"])
    assert not contains(abc, ["c", "a"])
    assert contains(abc, abc)
    assert contains([["a", "b"], ["c"]], [["b"], ["c"]])
    assert not contains([["a"], ["b"]], [["a", "b"]])


def test_contains_matches_bruteforce(rng):
    for _ in range(500):
        a, b = random_sequences(rng, 2, 6, "abc", itemset_p=0.4)
        assert contains(a, b) == brute_contains(a, b)


# -- mining ----------------------------------------------------------------------


def test_mining_example():
    got = mine_patterns(S("abc", "ac", "bc"), 0.6)
    assert items(got) == pytest.approx({"a": 2 / 3, "b": 2 / 3, "c": 1.0, "ac": 2 / 3, "bc": 2 / 3})
    assert [p.n for p in got] == [1, 1, 1, 2, 2]


def test_mining_identical_sequences():
    got = mine_patterns(S("abc", "abc"), 1.0)
    assert set(items(got)) == {"a", "b", "c", "ab", "ac", "bc", "abc"}


def test_mining_distinct_singletons():
    assert mine_patterns(S("a", "b", "c", "d"), 0.26) == []


def test_mining_errors():
    with pytest.raises(EmptyInputError):
        mine_patterns([], 0.5)
    for bad in (0.0, 1.2):
        with pytest.raises(ValueError):
            mine_patterns(S("a"), bad)


def test_mining_per_class_support():
    tr = [Trace(f"t{i}", "", as_sequence(w), lab) for i, (w, lab) in enumerate([("ab", 0), ("a", 0), ("ab", 1)])]
    got = {p.items: p.per_class_support for p in mine_patterns(tr, 0.3)}
    assert got[(("a",),)] == (1.0, 1.0)
    assert got[(("a",), ("b",))] == (0.5, 1.0)


def test_mining_matches_bruteforce_with_itemsets():
    rng = random.Random(99)
    for _ in range(60):
        seqs = random_sequences(rng, rng.randint(1, 8), 5, "abcd", itemset_p=0.5)
        ms = rng.choice([0.2, 0.34, 0.5, 0.75])
        got = {p.items: p.count for p in mine_patterns(seqs, ms)}
        assert got == brute_spm(seqs, ms)


def test_support_is_fraction_and_anti_monotone(rng):
    for _ in range(40):
        seqs = random_sequences(rng, 8, 5, "abc")
        pats = mine_patterns(seqs, 0.25)
        for p in pats:
            assert p.support == sum(brute_contains(s, p.items) for s in seqs) / len(seqs)
            assert p.n == sum(len(x) for x in p.items)
        for p, q in itertools.permutations(pats, 2):
            if contains(q, p):
                assert p.support >= q.support


def test_output_order_canonical():
    pats = mine_patterns(S("abc", "acb", "bca"), 0.3)
    keys = [p.sort_key() for p in pats]
    assert keys == sorted(keys)


def test_support_of():
    p = support_of(["a", "c"], S("abc", "ca", "ac"))
    assert p.count == 2 and p.support == pytest.approx(2 / 3)


# -- maximal patterns ----------------------------------------------------------------


def test_maximal_examples():
    got = maximal_patterns(mine_patterns(S("abc", "ac", "bc"), 0.6))
    assert set(items(got)) == {"ac", "bc"}
    one = [SequentialPattern(as_sequence("a"), 1.0)]
    assert maximal_patterns(one) == one
    chain = [SequentialPattern(as_sequence(w), 1.0) for w in ("a", "ab", "abc")]
    assert [p.items for p in maximal_patterns(chain)] == [as_sequence("abc")]


def test_maximal_antichain(rng):
    for _ in range(30):
        pats = mine_patterns(random_sequences(rng, 6, 5, "abc"), 0.3)
        kept = maximal_patterns(pats)
        for p, q in itertools.permutations(kept, 2):
            assert not contains(q, p)
        for p in pats:
            assert any(contains(k, p) for k in kept)


# -- feature selection -----------------------------------------------------------------


def sp(word, b, m):
    return SequentialPattern(as_sequence(word), max(b, m), 0, (b, m))


def test_select_examples():
    assert [p.items for p in select_features([sp("a", 0.5, 0.01)], 100)] == [as_sequence("a")]
    assert select_features([sp("a", 0.3, 0.3)], 100) == []
    kept = select_features([sp("a", 0.02, 0.5), sp("ac", 0.02, 0.49)], 100)
    assert [p.items for p in kept] == [as_sequence("ac")]
    # not redundant when the ratios differ
    kept = select_features([sp("a", 0.1, 0.5), sp("ac", 0.02, 0.49)], 100)
    assert len(kept) == 2
    kept = select_features([sp("a", 0.02, 0.5), sp("ac", 0.02, 0.49)], 100, drop_redundant=False)
    assert len(kept) == 2


def test_select_needs_per_class():
    with pytest.raises(ValueError):
        select_features([SequentialPattern(as_sequence("a"), 0.5)], 10)


def test_select_frequency_floor():
    assert select_features([sp("a", 0.0, 0.04)], 100, min_support=0.05) == []


# -- classifier --------------------------------------------------------------------------


def toy():
    tr = [
        Trace("m1", "", as_sequence("xf"), 1),
        Trace("m2", "", as_sequence("fy"), 1),
        Trace("b1", "", as_sequence("xy"), 0),
        Trace("b2", "", as_sequence("yx"), 0),
    ]
    return tr, [SequentialPattern(as_sequence("f"), 0.5, 2, (0.0, 1.0))]


def test_toy_posterior_by_hand():
    tr, feats = toy()
    clf = train_classifier(tr, feats, alpha=1.0)
    # p(f|m) = 3/4, p(f|b) = 1/4, equal priors
    assert clf.feature_likelihoods.tolist() == [[0.25, 0.75]]
    assert clf.class_priors == (0.5, 0.5)
    assert clf.likelihood(tr[0]) == pytest.approx(0.75)
    assert clf.likelihood(tr[2]) == pytest.approx(0.25)


def test_single_class():
    tr, feats = toy()
    with pytest.raises(SingleClassError):
        train_classifier(tr[2:], feats)
    with pytest.raises(ValueError):
        train_classifier(tr, feats, alpha=0)


def test_likelihood_bounds_skewed_priors():
    tr, feats = toy()
    clf = train_classifier(tr, feats, class_priors=(0.99, 0.01))
    assert sum(clf.class_priors) == pytest.approx(1.0)
    p = clf.likelihood(Trace("q", "", as_sequence("zz")))
    assert 0.0 <= p <= 1.0


def test_matches_sklearn_bernoulli(rng):
    """An independent Bernoulli naive Bayes gives the same posteriors."""
    for _ in range(20):
        seqs = random_sequences(rng, 40, 6, "abcde")
        labels = [rng.randint(0, 1) for _ in seqs]
        labels[0], labels[1] = 0, 1
        tr = [Trace(f"t{i}", "", s, y) for i, (s, y) in enumerate(zip(seqs, labels))]
        feats = mine_patterns(tr, 0.2)[:12]
        alpha = rng.choice([0.5, 1.0, 2.0])
        clf = train_classifier(tr, feats, alpha=alpha)
        X = feature_matrix(tr, feats).astype(int)
        ref = BernoulliNB(alpha=alpha, binarize=None, force_alpha=True).fit(X, labels)
        assert np.allclose(clf.likelihood_matrix(X), ref.predict_proba(X)[:, 1])


def test_classify_threshold_rule():
    tr, feats = toy()
    clf = train_classifier(tr, feats)
    assert classify(tr[0], clf, 0.5) == (1, pytest.approx(0.75))
    assert classify(tr[0], clf, 0.8)[0] == 0
    assert classify(tr[2], clf, 0.0)[0] == 1
    with pytest.raises(ValueError):
        classify(tr[0], clf, 1.5)


def test_flagged_set_non_increasing():
    tr, feats = toy()
    clf = train_classifier(tr, feats)
    flagged = [{t.trace_id for t in tr if classify(t, clf, x)[0]} for x in np.linspace(0, 1, 11)]
    for lo, hi in zip(flagged, flagged[1:]):
        assert hi <= lo


def test_estimator_separable_toy():
    X = [Trace(f"m{i}", "", as_sequence(w), 1) for i, w in enumerate(["qrs", "qrs", "qs", "rs"])]
    X += [Trace(f"b{i}", "", as_sequence(w), 0) for i, w in enumerate(["abc", "abc", "ac", "bc"])]
    clf = SequencePatternClassifier(min_support=0.25).fit(X)
    assert clf.predict(X).tolist() == [1, 1, 1, 1, 0, 0, 0, 0]
    proba = clf.predict_proba(X)
    assert np.allclose(proba.sum(axis=1), 1.0)


def test_miner_transformer():
    X = S("abc", "ac", "bc")
    m = SequentialPatternMiner(min_support=0.6, maximal=True).fit(X)
    assert m.transform(X).tolist() == [[True, True], [True, False], [False, True]]


# -- noise ---------------------------------------------------------------------------------


def brute_noise(trace, patterns):
    seq = as_sequence(trace)
    covered = set()
    for p in patterns:
        p = as_sequence(p)
        for pos in itertools.combinations(range(len(seq)), len(p)):
            if all(set(a) <= set(seq[j]) for a, j in zip(p, pos)):
                covered |= {(j, x) for a, j in zip(p, pos) for x in a}
    total = sum(len(s) for s in seq)
    return 1 - len(covered) / total


def test_noise_examples():
    assert noise_score(list("abc"), [list("abc")]) == 0.0
    assert noise_score(list("xyz"), [list("abc")]) == 1.0
    assert noise_score(list("abxc"), [list("abc")]) == pytest.approx(0.25)


def test_noise_matches_bruteforce(rng):
    for _ in range(300):
        seq = random_sequences(rng, 1, 6, "abcd", itemset_p=0.3)[0]
        pats = random_sequences(rng, rng.randint(1, 3), 3, "abcd", itemset_p=0.2)
        assert noise_score(seq, pats) == pytest.approx(brute_noise(seq, pats))
        assert 0.0 <= noise_score(seq, pats) <= 1.0
        assert noise_score(seq, pats + [seq]) == 0.0


def test_noise_tolerance_and_detector():
    assert noise_tolerance([0.1, 0.1, 0.1]) == pytest.approx(0.1)
    assert noise_tolerance([0.0, 1.0], k_sigma=1) == pytest.approx(1.0)
    with pytest.raises(EmptyInputError):
        noise_tolerance([])
    base = S(*["abc"] * 20, *["abd"] * 20)
    det = NoiseDetector(min_support=0.3).fit(base)
    assert det.predict(S("abc", "xyz")).tolist() == [0, 1]
