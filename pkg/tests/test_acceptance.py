"""The eight acceptance criteria, one test each.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section of the summary for one PASS/FAIL line per criterion.
"""

import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from oracles import brute_exact, brute_partial, brute_spm, perturbed_subtree, random_sequences, random_tree
from taptree.baseline import build_baseline, cluster_tree, clustered_tree_set, semantic_aggregate, temporal_tree_set
from taptree.evaluation import evaluate_sequence_classifier, evaluate_tree_detector
from taptree.pipeline import RunConfig, run_pipeline
from taptree.seqmine import mine_patterns
from taptree.synth import generate_forest, generate_traces, split_by_label
from taptree.treematch import Anchor, MatchMode, MatchParams, detect, exact_match, node_weights, partial_match

TESTS = Path(__file__).parent


def non_increasing(xs):
    return all(b <= a for a, b in zip(xs, xs[1:]))


@pytest.mark.criterion(1, "fusion compression on 2000 trees")
def test_fusion_compression(record_property):
    t0 = time.perf_counter()
    raw = generate_forest(2000, seed=0, variant_rate=0.10)
    temporal = temporal_tree_set(raw)
    clustered = clustered_tree_set(temporal)
    semantic = semantic_aggregate(clustered)
    secs = time.perf_counter() - t0
    n_t, n_c, n_s = temporal.output_count, clustered.output_count, semantic.output_count
    record_property("detail", f"raw {len(raw)} temporal {n_t} clustered {n_c} semantic {n_s} "
                              f"ratio {n_s / len(raw):.4f} {secs:.1f}s")
    assert len(raw) == 2000
    assert n_s < n_c < n_t < len(raw)
    assert n_s / len(raw) <= 0.10
    assert secs < 60


def _mean_latency(queries, model, params, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for q in queries:
            detect(q, model, params)
        best = min(best, time.perf_counter() - t0)
    return 1000.0 * best / len(queries)


@pytest.mark.criterion(2, "semantic match latency <= clustered (+5%)")
def test_match_latency_ordering(record_property):
    benign, _ = split_by_label(generate_forest(3000, seed=7))
    train, evaluation = benign[:2000], benign[2000:3000]
    assert len(evaluation) == 1000
    clustered = build_baseline(train, "clustered")
    semantic = build_baseline(train, "semantic")
    assert semantic.output_count < clustered.output_count
    queries = [cluster_tree(t) for t in evaluation]
    params = MatchParams("partial-same", 0.9)
    ms_c = _mean_latency(queries, clustered, params)
    ms_s = _mean_latency(queries, semantic, params)
    record_property("detail", f"semantic {ms_s:.4f} ms vs clustered {ms_c:.4f} ms "
                              f"({semantic.output_count} vs {clustered.output_count} trees)")
    assert ms_s <= 1.05 * ms_c


@pytest.mark.criterion(3, "recall and FPR non-decreasing in delta")
def test_threshold_monotonicity(record_property):
    benign, malicious = split_by_label(generate_forest(3000, n_attacks=20, seed=2))
    assert len(malicious) == 20
    rep = evaluate_tree_detector(benign, malicious, thresholds=[0.5, 0.7, 0.9])
    tpr = [r.tpr for r in rep.rows]
    fpr = [r.fpr for r in rep.rows]
    record_property("detail", "  ".join(f"d={r.threshold} TPR {r.tpr:.3f} FPR {r.fpr:.4f}" for r in rep.rows))
    assert tpr == sorted(tpr) and fpr == sorted(fpr)


@pytest.mark.criterion(4, "sequence classifier ROC direction")
def test_sequence_roc(record_property):
    traces = generate_traces(500, 40, seed=0)
    assert sum(t.label == 0 for t in traces) >= 500 and sum(t.label == 1 for t in traces) >= 20
    rep = evaluate_sequence_classifier(traces, seed=0, class_prior="uniform", min_support=0.2)
    tpr = [r.tpr for r in rep.rows]
    fpr = [r.fpr for r in rep.rows]
    low, high = rep.row(0.1), rep.row(0.9)
    record_property("detail", f"0.1: TPR {low.tpr:.3f} FPR {low.fpr:.3f}; 0.9: TPR {high.tpr:.3f} FPR {high.fpr:.4f}")
    assert [r.threshold for r in rep.rows] == [round(0.1 * i, 1) for i in range(1, 10)]
    assert non_increasing(tpr) and non_increasing(fpr)
    assert low.tpr >= 0.99 and low.fpr >= 0.99
    assert high.fpr <= 0.01


@pytest.mark.criterion(5, "sequential pattern mining equals brute force on 200 instances")
def test_spm_oracle(record_property):
    rng = random.Random(5)
    t0 = time.perf_counter()
    n_patterns = 0
    for _ in range(200):
        alphabet = "abcde"[: rng.randint(2, 5)]
        S = random_sequences(rng, rng.randint(1, 10), 6, alphabet)
        ms = rng.choice([0.1, 0.2, 0.3, 0.5, 0.7, 1.0])
        got = mine_patterns(S, ms)
        want = brute_spm(S, ms)
        assert {p.items: p.count for p in got} == want
        assert all(p.support == p.count / len(S) for p in got)
        n_patterns += len(want)
    secs = time.perf_counter() - t0
    record_property("detail", f"{n_patterns} patterns compared in {secs:.1f}s")
    assert secs < 30


@pytest.mark.criterion(6, "tree matching equals brute force on 500 pairs")
def test_tree_matching_oracle(record_property):
    rng = random.Random(6)
    stats = {"exact_true": 0, "partial": 0, "count_miss": 0}
    for _ in range(500):
        t = random_tree(rng, rng.randint(1, 8))
        p = perturbed_subtree(rng, t) if rng.random() < 0.5 else random_tree(rng, rng.randint(1, 8))
        for anchor in Anchor:
            any_ = anchor is Anchor.ANY_NODE
            want = brute_exact(p, t, anchor_any=any_)
            assert exact_match(p, t, anchor) == want
            stats["exact_true"] += want
            # structure fits but some count does not
            stats["count_miss"] += (not want) and brute_exact(p.replace(weights=(0,) + (1,) * (p.n_nodes - 1)),
                                                              t, anchor_any=any_)
            for mode in (MatchMode.PARTIAL_SAME_WEIGHT, MatchMode.PARTIAL_VARIABLE_WEIGHT):
                r = partial_match(p, t, MatchParams(mode, 0.5, anchor))
                k, best = brute_partial(p, t, node_weights(p, mode), anchor_any=any_)
                assert r.k == k
                assert r.mapping in best if best else r.mapping == {}
                stats["partial"] += 0 < r.score < 1
    record_property("detail", ", ".join(f"{k} {v}" for k, v in stats.items()))
    assert min(stats.values()) > 20


@pytest.mark.criterion(7, "invariant property suite")
def test_invariant_suite(record_property):
    out = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(TESTS / "test_properties.py")],
        capture_output=True, text=True, cwd=TESTS.parent,
    )
    last = out.stdout.strip().splitlines()[-1] if out.stdout.strip() else out.stderr[-200:]
    record_property("detail", last)
    assert out.returncode == 0, out.stdout[-3000:]


@pytest.mark.criterion(8, "100k-event pipeline: runtime and determinism")
def test_pipeline_throughput_and_determinism(record_property):
    cfg = RunConfig(synthetic_events=100_000, synthetic_attacks=20, seed=0)
    t0 = time.perf_counter()
    first = run_pipeline(cfg)
    secs = time.perf_counter() - t0
    second = run_pipeline(RunConfig.from_dict(cfg.to_dict()))
    record_property("detail", f"{secs:.1f}s, {first.rows[0].n} trees scored")
    assert secs < 120
    assert first.to_csv().encode() == second.to_csv().encode()
    assert first.roc_csv() == second.roc_csv()
