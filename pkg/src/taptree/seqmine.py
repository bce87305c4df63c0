"""Traces, sequential pattern mining and pattern-feature classification.

Sequences are tuples of itemsets; an itemset is a sorted tuple of item
strings. ``('a',), ('b', 'c')`` reads as the sequence <{a}{b,c}>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_labels, check_traces, check_unit_interval
from .exceptions import EmptyInputError, SingleClassError
from .tree import TaskTree

Itemset = tuple
Seq = tuple


def as_sequence(obj) -> Seq:
    """Normalise ``['a', 'b']`` or ``[['a'], ['b', 'c']]`` to canonical form."""
    out = []
    for el in obj:
        if isinstance(el, str):
            out.append((el,))
        else:
            items = tuple(sorted(set(el)))
            if not items:
                raise ValueError("itemsets must be non-empty")
            out.append(items)
    return tuple(out)


@dataclass(frozen=True)
class Trace:
    trace_id: str
    tree_id: str
    items: Seq
    label: int | None = None

    def __post_init__(self):
        if not self.items:
            raise ValueError("a trace needs at least one itemset")

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class SequentialPattern:
    items: Seq
    support: float
    count: int = 0
    per_class_support: tuple[float, float] | None = None

    @property
    def n(self) -> int:
        return sum(len(s) for s in self.items)

    def sort_key(self):
        return (self.n, self.items)

    @property
    def class_ratio(self) -> float | None:
        """Malicious-over-benign support ratio, unsmoothed."""
        if self.per_class_support is None:
            return None
        b, m = self.per_class_support
        return math.inf if b == 0 else m / b


def extract_traces(tree: TaskTree) -> list[Trace]:
    """One singleton-itemset trace per root-to-leaf path, left to right."""
    return [
        Trace(f"{tree.tree_id}/{k}", tree.tree_id, tuple((tree.labels[i],) for i in path), tree.label)
        for k, path in enumerate(tree.root_paths())
    ]


def _seq(x) -> Seq:
    if isinstance(x, Trace):
        return x.items
    if isinstance(x, SequentialPattern):
        return x.items
    if isinstance(x, tuple) and all(isinstance(e, tuple) for e in x):
        return x
    return as_sequence(x)


def contains(big, small) -> bool:
    """True iff ``small`` is a subsequence of ``big`` under itemset inclusion."""
    big, small = _seq(big), _seq(small)
    j = 0
    n = len(big)
    for a in small:
        sa = set(a) if len(a) > 1 else None
        while j < n:
            b = big[j]
            j += 1
            if (a[0] in b) if sa is None else sa.issubset(b):
                break
        else:
            return False
    return True


def _min_count(min_support: float, n: int) -> int:
    return max(1, math.ceil(min_support * n - 1e-9))


class _PrefixSpan:
    """Depth-first prefix growth over earliest-end projections.

    For every supporting sequence the projection keeps two indices: the
    earliest end of the prefix without its last itemset and the earliest end
    of the whole prefix. Sequence extensions look past the latter; itemset
    extensions look past the former for an itemset holding the last
    prefix itemset plus the new item.
    """

    def __init__(self, seqs: Sequence[Seq], min_count: int):
        self.seqs = [[frozenset(s) for s in seq] for seq in seqs]
        self.min_count = min_count
        self.found: list[tuple[Seq, list[int]]] = []

    def run(self):
        proj: dict[str, list[tuple[int, int, int]]] = {}
        for sid, seq in enumerate(self.seqs):
            first: dict[str, int] = {}
            for j, itemset in enumerate(seq):
                for x in itemset:
                    first.setdefault(x, j)
            for x, j in first.items():
                proj.setdefault(x, []).append((sid, -1, j))
        for x in sorted(proj):
            if len(proj[x]) >= self.min_count:
                self.grow(((x,),), proj[x])
        return self.found

    def grow(self, prefix: Seq, proj: list[tuple[int, int, int]]):
        self.found.append((prefix, [sid for sid, _, _ in proj]))
        last = prefix[-1]
        last_set = frozenset(last)
        top = last[-1]
        s_ext: dict[str, list] = {}
        i_ext: dict[str, list] = {}
        for sid, e_prev, e_last in proj:
            seq = self.seqs[sid]
            seen_s: set[str] = set()
            for j in range(e_last + 1, len(seq)):
                for x in seq[j]:
                    if x not in seen_s:
                        seen_s.add(x)
                        s_ext.setdefault(x, []).append((sid, e_last, j))
            seen_i: set[str] = set()
            for j in range(e_prev + 1, len(seq)):
                itemset = seq[j]
                if last_set <= itemset:
                    for x in itemset:
                        if x > top and x not in seen_i:
                            seen_i.add(x)
                            i_ext.setdefault(x, []).append((sid, e_prev, j))
        for x in sorted(i_ext):
            if len(i_ext[x]) >= self.min_count:
                self.grow(prefix[:-1] + (last + (x,),), i_ext[x])
        for x in sorted(s_ext):
            if len(s_ext[x]) >= self.min_count:
                self.grow(prefix + ((x,),), s_ext[x])


def _labels_of(S) -> list[int | None]:
    return [s.label if isinstance(s, Trace) else None for s in S]


def _per_class(sids: Iterable[int], labels: Sequence[int | None], n_b: int, n_m: int):
    if not n_b or not n_m:
        return None
    b = m = 0
    for sid in sids:
        if labels[sid] == 1:
            m += 1
        elif labels[sid] == 0:
            b += 1
    return (b / n_b, m / n_m)


def mine_patterns(S, min_support: float = 0.05, labels=None) -> list[SequentialPattern]:
    """All sequences contained in at least ``min_support`` of ``S``.

    ``per_class_support`` is filled when both labels occur (taken from
    ``labels`` or from the traces). Output is ordered by cardinality, then
    lexicographically.
    """
    S = list(S)
    if not S:
        raise EmptyInputError("no input sequences")
    if not 0.0 < min_support <= 1.0:
        raise ValueError(f"min_support must lie in (0, 1], got {min_support}")
    seqs = [_seq(s) for s in S]
    labels = list(labels) if labels is not None else _labels_of(S)
    n_m = sum(1 for l in labels if l == 1)
    n_b = sum(1 for l in labels if l == 0)
    n = len(seqs)
    found = _PrefixSpan(seqs, _min_count(min_support, n)).run()
    out = [
        SequentialPattern(items, len(sids) / n, len(sids), _per_class(sids, labels, n_b, n_m))
        for items, sids in found
    ]
    out.sort(key=SequentialPattern.sort_key)
    return out


def support_of(pattern, S, labels=None) -> SequentialPattern:
    """Recount a pattern's overall and per-class support on ``S``."""
    S = list(S)
    labels = list(labels) if labels is not None else _labels_of(S)
    sids = [i for i, s in enumerate(S) if contains(s, pattern)]
    n_m = sum(1 for l in labels if l == 1)
    n_b = sum(1 for l in labels if l == 0)
    return SequentialPattern(_seq(pattern), len(sids) / len(S), len(sids), _per_class(sids, labels, n_b, n_m))


def maximal_patterns(SP: Iterable[SequentialPattern]) -> list[SequentialPattern]:
    SP = list(SP)
    keep = []
    for i, p in enumerate(SP):
        if not any(j != i and q.items != p.items and contains(q, p) for j, q in enumerate(SP)):
            keep.append(p)
    return keep


def _smoothed_ratio(p: SequentialPattern, eps: float) -> tuple[float, float]:
    b, m = p.per_class_support
    return (b + eps) / (m + eps), (m + eps) / (b + eps)


def select_features(
    SP: Iterable[SequentialPattern],
    n_sequences: int,
    min_support: float = 0.05,
    min_class_ratio: float = 2.0,
    drop_redundant: bool = True,
) -> list[SequentialPattern]:
    """Frequent, class-skewed, non-redundant patterns.

    Frequency is the larger within-class support. Skew is the larger of the
    two smoothed class-support ratios, with ``eps = 1 / (2 * n_sequences)``.
    A pattern contained in a kept pattern whose malicious/benign ratio is
    within 10% of its own counts as redundant.
    """
    eps = 1.0 / (2 * n_sequences)
    kept = []
    for p in SP:
        if p.per_class_support is None:
            raise ValueError("select_features needs per-class supports")
        if max(p.per_class_support) < min_support:
            continue
        if max(_smoothed_ratio(p, eps)) < min_class_ratio:
            continue
        kept.append(p)
    if not drop_redundant:
        return kept
    out: list[SequentialPattern] = []
    for p in sorted(kept, key=lambda q: (-q.n, q.items)):
        rp = _smoothed_ratio(p, eps)[1]
        redundant = False
        for q in out:
            rq = _smoothed_ratio(q, eps)[1]
            if abs(rp - rq) < 0.1 * max(rp, rq) and contains(q, p):
                redundant = True
                break
        if not redundant:
            out.append(p)
    out.sort(key=SequentialPattern.sort_key)
    return out


def feature_matrix(S, features: Sequence[SequentialPattern]) -> np.ndarray:
    X = np.zeros((len(S), len(features)), dtype=bool)
    for i, s in enumerate(S):
        seq = _seq(s)
        for j, f in enumerate(features):
            X[i, j] = contains(seq, f.items)
    return X


@dataclass
class TraceClassifier:
    """Bernoulli likelihood model over pattern presence.

    ``feature_likelihoods[j, c]`` is the smoothed probability that feature
    ``j`` is present in a trace of class ``c`` (0 benign, 1 malicious).
    """

    features: list[SequentialPattern]
    class_priors: tuple[float, float]
    feature_likelihoods: np.ndarray
    alpha: float = 1.0

    def __eq__(self, other):
        if not isinstance(other, TraceClassifier):
            return NotImplemented
        return (
            self.features == other.features
            and self.class_priors == other.class_priors
            and self.alpha == other.alpha
            and np.array_equal(self.feature_likelihoods, other.feature_likelihoods)
        )

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        p = self.feature_likelihoods
        with np.errstate(divide="ignore"):
            jll = X @ np.log(p) + (1.0 - X) @ np.log1p(-p)
            jll = jll + np.log(np.asarray(self.class_priors))
        return jll

    def likelihood_matrix(self, X: np.ndarray) -> np.ndarray:
        """P(malicious | features) for each row of a presence matrix."""
        jll = self.joint_log_likelihood(X)
        # two-class softmax written as a logistic of the log-odds
        diff = jll[:, 0] - jll[:, 1]
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(diff))

    def likelihood(self, trace) -> float:
        return float(self.likelihood_matrix(feature_matrix([trace], self.features))[0])


def train_classifier(
    traces,
    features: Sequence[SequentialPattern],
    alpha: float = 1.0,
    labels=None,
    class_priors: tuple[float, float] | None = None,
) -> TraceClassifier:
    """Fit presence likelihoods with additive smoothing ``alpha``.

    Priors default to class frequencies.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    traces = list(traces)
    y = np.asarray(labels if labels is not None else _labels_of(traces))
    if not (y == 0).any() or not (y == 1).any():
        raise SingleClassError("training traces must contain both classes")
    X = feature_matrix(traces, features).astype(float)
    lik = np.empty((len(features), 2))
    for c in (0, 1):
        rows = X[y == c]
        lik[:, c] = (rows.sum(axis=0) + alpha) / (rows.shape[0] + 2 * alpha)
    if class_priors is None:
        n1 = float((y == 1).sum())
        class_priors = (1.0 - n1 / len(y), n1 / len(y))
    else:
        total = float(sum(class_priors))
        class_priors = (class_priors[0] / total, class_priors[1] / total)
    return TraceClassifier(list(features), class_priors, lik, float(alpha))


def classify(trace, model: TraceClassifier, threshold: float = 0.5) -> tuple[int, float]:
    """``(1, p)`` when the malicious likelihood ``p`` reaches ``threshold``."""
    threshold = check_unit_interval(threshold, "threshold")
    p = model.likelihood(trace)
    return int(p >= threshold), p


def noise_score(trace, baseline_patterns: Iterable) -> float:
    """Fraction of trace items that no embedding of any pattern covers."""
    seq = _seq(trace)
    total = sum(len(s) for s in seq)
    if total == 0:
        return 0.0
    covered = [set() for _ in seq]
    for pat in baseline_patterns:
        _cover(seq, _seq(pat), covered)
    hit = sum(len(c) for c in covered)
    return 1.0 - hit / total


def _cover(seq: Seq, pat: Seq, covered: list[set]) -> None:
    """Mark every (position, item) used by at least one embedding of ``pat``."""
    n, m = len(seq), len(pat)
    if m == 0 or m > n:
        return
    sets = [set(s) for s in seq]
    # fwd[k]: earliest end position of pat[:k+1]
    fwd = [-1] * m
    j = 0
    for k in range(m):
        while j < n and not set(pat[k]) <= sets[j]:
            j += 1
        if j == n:
            return
        fwd[k] = j
        j += 1
    # bwd[k]: latest start position of pat[k:]
    bwd = [n] * m
    j = n - 1
    for k in range(m - 1, -1, -1):
        while not set(pat[k]) <= sets[j]:
            j -= 1
        bwd[k] = j
        j -= 1
    for k in range(m):
        lo = fwd[k - 1] + 1 if k else 0
        hi = bwd[k + 1] - 1 if k + 1 < m else n - 1
        need = set(pat[k])
        for j in range(lo, hi + 1):
            if need <= sets[j]:
                covered[j] |= need


def noise_tolerance(scores: Sequence[float], k_sigma: float = 3.0) -> float:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise EmptyInputError("no baseline noise scores")
    return float(scores.mean() + k_sigma * scores.std())


# -- estimator front-ends ---------------------------------------------------


class SequentialPatternMiner(TransformerMixin, BaseEstimator):
    """Mine frequent (optionally maximal) patterns; transform to presence features."""

    def __init__(self, min_support: float = 0.05, maximal: bool = False):
        self.min_support = min_support
        self.maximal = maximal

    def fit(self, X, y=None):
        X = check_traces(X)
        labels = check_labels(y, len(X)) if y is not None else None
        patterns = mine_patterns(X, self.min_support, labels)
        self.patterns_ = maximal_patterns(patterns) if self.maximal else patterns
        return self

    def transform(self, X):
        check_is_fitted(self, "patterns_")
        return feature_matrix(check_traces(X, allow_empty=True), self.patterns_)


def mine_class_patterns(X: list, y: np.ndarray, min_support: float, maximal: bool = False):
    """Patterns frequent within either class, recounted on the full labeled set."""
    cands: set = set()
    for c in (0, 1):
        part = [x for x, lab in zip(X, y) if lab == c]
        pats = mine_patterns(part, min_support, [c] * len(part))
        if maximal:
            pats = maximal_patterns(pats)
        cands.update(p.items for p in pats)
    out = [support_of(items, X, y) for items in cands]
    out.sort(key=SequentialPattern.sort_key)
    return out


class SequencePatternClassifier(ClassifierMixin, BaseEstimator):
    """Pattern-feature trace classifier.

    ``fit`` mines patterns within each class, keeps frequent class-skewed
    non-redundant ones and fits a smoothed Bernoulli likelihood model on
    their presence. ``predict`` flags a trace once its malicious likelihood
    reaches ``threshold``.

    Parameters
    ----------
    min_support : float
        Within-class support needed for a pattern to be a candidate.
    min_class_ratio : float
        Minimum smoothed support ratio between the classes.
    class_prior : None, 'uniform' or (float, float)
        ``None`` uses class frequencies.
    """

    def __init__(
        self,
        min_support: float = 0.05,
        min_class_ratio: float = 2.0,
        drop_redundant: bool = True,
        maximal: bool = False,
        alpha: float = 1.0,
        class_prior=None,
        threshold: float = 0.5,
    ):
        self.min_support = min_support
        self.min_class_ratio = min_class_ratio
        self.drop_redundant = drop_redundant
        self.maximal = maximal
        self.alpha = alpha
        self.class_prior = class_prior
        self.threshold = threshold

    def fit(self, X, y=None):
        X = check_traces(X)
        if y is None:
            y = [t.label for t in X]
        y = check_labels(y, len(X))
        if len(np.unique(y)) < 2:
            raise SingleClassError("training traces must contain both classes")
        self.classes_ = np.array([0, 1])
        cands = mine_class_patterns(X, y, self.min_support, self.maximal)
        feats = select_features(cands, len(X), self.min_support, self.min_class_ratio, self.drop_redundant)
        prior = (0.5, 0.5) if self.class_prior == "uniform" else self.class_prior
        self.classifier_ = train_classifier(X, feats, self.alpha, y, prior)
        self.features_ = feats
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "classifier_")
        X = check_traces(X, allow_empty=True)
        p1 = self.classifier_.likelihood_matrix(feature_matrix(X, self.features_))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(int)


class NoiseDetector(BaseEstimator):
    """Flag traces whose unexplained fraction exceeds the baseline tolerance."""

    def __init__(self, min_support: float = 0.05, k_sigma: float = 3.0, maximal: bool = True):
        self.min_support = min_support
        self.k_sigma = k_sigma
        self.maximal = maximal

    def fit(self, X, y=None):
        X = check_traces(X)
        pats = mine_patterns(X, self.min_support)
        self.patterns_ = maximal_patterns(pats) if self.maximal else pats
        self.tolerance_ = noise_tolerance([noise_score(t, self.patterns_) for t in X], self.k_sigma)
        return self

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self, "patterns_")
        return np.array([noise_score(t, self.patterns_) for t in check_traces(X, allow_empty=True)])

    def predict(self, X) -> np.ndarray:
        return (self.score_samples(X) > self.tolerance_).astype(int)
