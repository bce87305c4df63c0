"""Confusion-matrix metrics and the cross-validation protocols.

Benign instances are split with shuffled k-fold; malicious instances are
evaluated leave-one-out. For tree matching the baseline only ever sees
benign training folds; each malicious tree is scored against the baseline of
fold ``i mod k``.
"""

from __future__ import annotations

import io
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold

from ._validation import check_grid
from .baseline import Stage, build_baseline, cluster_tree
from .exceptions import EmptyForestError, SingleClassError, StageError
from .seqmine import SequencePatternClassifier, Trace
from .tree import TaskTree
from .treematch import MatchMode, score_trees

TREE_THRESHOLDS = (0.5, 0.7, 0.9)
SEQUENCE_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(1, 10))
CSV_COLUMNS = ("threshold", "TP", "FP", "TN", "FN", "TPR", "TNR", "precision", "accuracy", "FPR")


def _ratio(a: int, b: int) -> float | None:
    return a / b if b else None


@dataclass(frozen=True)
class MetricRow:
    threshold: float | None
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def tnr(self):
        return _ratio(self.tn, self.tn + self.fp)

    @property
    def fpr(self):
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def precision(self):
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def accuracy(self):
        return _ratio(self.tp + self.tn, self.n)

    @classmethod
    def from_flags(cls, threshold, y_true: Sequence[int], flagged: Sequence[bool]) -> "MetricRow":
        y = np.asarray(y_true, dtype=int)
        f = np.asarray(flagged, dtype=bool)
        return cls(
            threshold,
            int(((y == 1) & f).sum()),
            int(((y == 0) & f).sum()),
            int(((y == 0) & ~f).sum()),
            int(((y == 1) & ~f).sum()),
        )


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


@dataclass
class EvalReport:
    protocol: str
    rows: list[MetricRow]
    timing: dict = field(default_factory=dict)

    @property
    def roc(self) -> list[tuple[float | None, float | None, float | None]]:
        """(threshold, FPR, TPR) per row."""
        return [(r.threshold, r.fpr, r.tpr) for r in self.rows]

    def row(self, threshold) -> MetricRow:
        for r in self.rows:
            if r.threshold == threshold or (
                r.threshold is not None and threshold is not None and abs(r.threshold - threshold) < 1e-9
            ):
                return r
        raise KeyError(threshold)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for r in self.rows:
            cells = [
                "" if r.threshold is None else f"{r.threshold:g}",
                str(r.tp), str(r.fp), str(r.tn), str(r.fn),
                _fmt(r.tpr), _fmt(r.tnr), _fmt(r.precision), _fmt(r.accuracy), _fmt(r.fpr),
            ]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def roc_csv(self) -> str:
        lines = ["threshold,FPR,TPR"]
        for thr, fpr, tpr in self.roc:
            lines.append(f"{'' if thr is None else format(thr, 'g')},{_fmt(fpr)},{_fmt(tpr)}")
        return "\n".join(lines) + "\n"


def n_jobs_from_env(default: int = 1) -> int:
    raw = os.environ.get("TAPTREE_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def _folds(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if n < 2:
        return [(np.arange(n), np.arange(0))]
    kf = KFold(n_splits=min(k, n), shuffle=True, random_state=seed)
    return list(kf.split(np.arange(n)))


@dataclass
class TreeScores:
    """Held-out best match scores collected by :func:`score_tree_folds`."""

    benign: np.ndarray
    malicious: np.ndarray
    build_seconds: float
    match_millis: float


def score_tree_folds(
    benign: Sequence[TaskTree],
    malicious: Sequence[TaskTree],
    *,
    stage: str = "semantic",
    mode: str = "partial-same",
    anchor: str = "any",
    weight_merge: str = "max",
    k: int = 10,
    seed: int = 0,
    cluster_patterns: bool = True,
    n_jobs: int | None = None,
) -> TreeScores:
    if not benign or not malicious:
        raise EmptyForestError("both benign and malicious forests must be non-empty")
    if Stage(stage) is Stage.TEMPORAL_SET:
        raise StageError("detection requires a clustered or semantic baseline")
    folds = _folds(len(benign), k, seed)
    prep = (lambda t: cluster_tree(t, weight_merge)) if cluster_patterns else (lambda t: t)

    def run(f: int, train: np.ndarray, test: np.ndarray):
        t0 = time.perf_counter()
        model = build_baseline([benign[i] for i in train], stage, weight_merge)
        t1 = time.perf_counter()
        mal_idx = [i for i in range(len(malicious)) if i % len(folds) == f]
        trees = [prep(benign[i]) for i in test] + [prep(malicious[i]) for i in mal_idx]
        scores = score_trees(trees, model, mode, anchor)
        t2 = time.perf_counter()
        return test, mal_idx, scores, t1 - t0, (t2 - t1, len(trees))

    jobs = n_jobs if n_jobs is not None else n_jobs_from_env()
    if jobs > 1:
        results = Parallel(n_jobs=jobs)(delayed(run)(f, tr, te) for f, (tr, te) in enumerate(folds))
    else:
        results = [run(f, tr, te) for f, (tr, te) in enumerate(folds)]
    b_scores = np.full(len(benign), np.nan)
    m_scores = np.full(len(malicious), np.nan)
    build = match = 0.0
    n_matched = 0
    for test, mal_idx, scores, b_sec, (m_sec, n) in results:
        b_scores[test] = scores[: len(test)]
        m_scores[mal_idx] = scores[len(test):]
        build += b_sec
        match += m_sec
        n_matched += n
    return TreeScores(b_scores, m_scores, build / len(folds), 1000.0 * match / max(n_matched, 1))


def tree_rows(scores: TreeScores, mode: str, thresholds: Iterable[float]) -> list[MetricRow]:
    held = ~np.isnan(scores.benign)
    y = np.concatenate([np.zeros(held.sum(), int), np.ones(len(scores.malicious), int)])
    s = np.concatenate([scores.benign[held], scores.malicious])
    if MatchMode(mode) is MatchMode.EXACT:
        return [MetricRow.from_flags(None, y, s < 1.0)]
    return [MetricRow.from_flags(d, y, s < d) for d in check_grid(thresholds, "threshold")]


def evaluate_tree_detector(
    benign: Sequence[TaskTree],
    malicious: Sequence[TaskTree],
    *,
    thresholds: Iterable[float] = TREE_THRESHOLDS,
    mode: str = "partial-same",
    k: int = 10,
    **kw,
) -> EvalReport:
    """k-fold over benign trees, leave-one-out over malicious trees.

    One row per threshold; a tree is flagged when its best score is below
    the threshold (exact mode: when no exact match exists).
    """
    scores = score_tree_folds(benign, malicious, mode=mode, k=k, **kw)
    rows = tree_rows(scores, mode, thresholds)
    n_folds = len(_folds(len(benign), k, kw.get("seed", 0)))
    return EvalReport(
        f"kfold(k={n_folds})+loo",
        rows,
        {"baseline_build_seconds": scores.build_seconds, "mean_match_millis": scores.match_millis},
    )


def _groups(traces: Sequence[Trace], level: str) -> list[list[int]]:
    if level == "trace":
        return [[i] for i in range(len(traces))]
    if level != "tree":
        raise ValueError("loo_level must be 'trace' or 'tree'")
    by_tree: dict[str, list[int]] = {}
    for i, t in enumerate(traces):
        by_tree.setdefault(t.tree_id, []).append(i)
    return list(by_tree.values())


def score_sequence_folds(
    traces: Sequence[Trace],
    *,
    k: int = 10,
    seed: int = 0,
    loo_level: str = "trace",
    n_jobs: int | None = None,
    **clf_params,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Held-out malicious likelihood of every trace.

    Benign traces get k-fold predictions from models trained on the other
    benign folds plus all malicious traces. Each malicious group (one trace,
    or all traces of one tree) is predicted by a model trained without it,
    on the benign training part of fold ``g mod k``.
    """
    traces = list(traces)
    y = np.array([t.label for t in traces])
    ben = np.flatnonzero(y == 0)
    mal = np.flatnonzero(y == 1)
    if not len(ben) or not len(mal):
        raise SingleClassError("sequence evaluation needs benign and malicious traces")
    groups = _groups([traces[i] for i in mal], loo_level)
    if len(groups) < 2:
        raise SingleClassError("leave-one-out needs at least two malicious groups")
    folds = _folds(len(ben), k, seed)
    jobs = []
    for tr, te in folds:
        jobs.append((ben[tr].tolist() + mal.tolist(), ben[te].tolist()))
    for g, members in enumerate(groups):
        tr, _ = folds[g % len(folds)]
        held = {int(mal[i]) for i in members}
        keep = [int(i) for i in mal if int(i) not in held]
        jobs.append((ben[tr].tolist() + keep, sorted(held)))

    def run(train, test):
        clf = SequencePatternClassifier(**clf_params)
        clf.fit([traces[i] for i in train], y[train])
        return test, clf.predict_proba([traces[i] for i in test])[:, 1]

    t0 = time.perf_counter()
    n = n_jobs if n_jobs is not None else n_jobs_from_env()
    if n > 1:
        results = Parallel(n_jobs=n)(delayed(run)(tr, te) for tr, te in jobs)
    else:
        results = [run(tr, te) for tr, te in jobs]
    lik = np.full(len(traces), np.nan)
    for test, p in results:
        lik[test] = p
    return y, lik, time.perf_counter() - t0


def evaluate_sequence_classifier(
    traces: Sequence[Trace],
    *,
    thresholds: Iterable[float] = SEQUENCE_THRESHOLDS,
    k: int = 10,
    seed: int = 0,
    loo_level: str = "trace",
    n_jobs: int | None = None,
    **clf_params,
) -> EvalReport:
    """Rows flag a trace when its held-out likelihood reaches the threshold."""
    y, lik, secs = score_sequence_folds(
        traces, k=k, seed=seed, loo_level=loo_level, n_jobs=n_jobs, **clf_params
    )
    held = ~np.isnan(lik)
    rows = [MetricRow.from_flags(x, y[held], lik[held] >= x) for x in check_grid(thresholds, "threshold")]
    n_folds = len(_folds(int((y == 0).sum()), k, seed))
    return EvalReport(f"kfold(k={n_folds})+loo({loo_level})", rows, {"train_and_score_seconds": secs})
