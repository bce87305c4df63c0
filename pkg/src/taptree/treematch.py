"""Tree pattern queries of new task trees against a baseline model."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_trees, check_unit_interval
from .baseline import BaselineModel, Stage, build_baseline, cluster_tree
from .embedding import best_partial, find_embedding
from .exceptions import EmptyModelError, StageError
from .tree import TaskTree


class MatchMode(str, Enum):
    EXACT = "exact"
    PARTIAL_SAME_WEIGHT = "partial-same"
    PARTIAL_VARIABLE_WEIGHT = "partial-var"


class Anchor(str, Enum):
    ROOT_ONLY = "root"
    ANY_NODE = "any"


@dataclass(frozen=True)
class MatchParams:
    mode: MatchMode = MatchMode.PARTIAL_SAME_WEIGHT
    threshold: float = 0.9
    anchor: Anchor = Anchor.ANY_NODE

    def __post_init__(self):
        object.__setattr__(self, "mode", MatchMode(self.mode))
        object.__setattr__(self, "anchor", Anchor(self.anchor))
        object.__setattr__(self, "threshold", check_unit_interval(self.threshold, "threshold"))


@dataclass(frozen=True)
class MatchResult:
    baseline_tree_id: str
    matched: frozenset
    k: float
    l: float
    score: float
    match: bool
    mapping: dict = field(default_factory=dict, compare=False)

    @property
    def verdict(self) -> str:
        return "MATCH" if self.match else "NO_MATCH"


@dataclass(frozen=True)
class DetectionVerdict:
    tree_id: str
    best_score: float
    best_baseline_id: str | None
    anomalous: bool
    label: int | None = None


def node_weights(p: TaskTree, mode: MatchMode | str) -> Sequence[float]:
    """Per-node score weight: 1 everywhere, or the node depth (root = 1)."""
    if MatchMode(mode) is MatchMode.PARTIAL_VARIABLE_WEIGHT:
        return p.depths
    return (1,) * p.n_nodes


def exact_match(p: TaskTree, t: TaskTree, anchor: Anchor | str = Anchor.ANY_NODE) -> bool:
    """Whole-pattern embedding with edge counts ``p <= t`` on every pattern edge."""
    anchor_any = Anchor(anchor) is Anchor.ANY_NODE
    return find_embedding(p, t, anchor_any=anchor_any, check_weights=True) is not None


def partial_match(p: TaskTree, t: TaskTree, params: MatchParams, *, stop_at: float | None = None) -> MatchResult:
    """Best connected rooted part of ``p`` that embeds in ``t``; score ``x = k / l``.

    ``l`` sums the node weights over the whole pattern. A pattern edge whose
    count exceeds the target's keeps its child (and subtree) out of the
    matched set.
    """
    if params.mode is MatchMode.EXACT:
        raise ValueError("partial_match needs a partial mode")
    omega = node_weights(p, params.mode)
    total = float(sum(omega))
    k, mapping = best_partial(
        p, t, omega,
        anchor_any=params.anchor is Anchor.ANY_NODE,
        stop_at=None if stop_at is None else stop_at * total - 1e-9,
    )
    x = k / total
    return MatchResult(t.tree_id, frozenset(mapping), k, total, x, x >= params.threshold, mapping)


def _check_model(model: BaselineModel):
    if not model.trees:
        raise EmptyModelError("baseline model has no trees")
    if model.stage is Stage.TEMPORAL_SET:
        raise StageError("detection requires a clustered or semantic baseline")


def detect(
    tree: TaskTree,
    model: BaselineModel,
    params: MatchParams,
    *,
    exhaustive: bool = False,
) -> DetectionVerdict:
    """Score ``tree`` against every baseline tree; anomalous when no tree matches.

    Baseline trees are visited in tree-id order. Unless ``exhaustive``, the
    scan stops at the first score reaching the threshold (or the first exact
    match), so ``best_score`` is then the first sufficient score.
    """
    _check_model(model)
    ordered = sorted(model.trees, key=lambda b: b.tree_id)
    best, best_id = 0.0, None
    if params.mode is MatchMode.EXACT:
        for b in ordered:
            if exact_match(tree, b, params.anchor):
                best, best_id = 1.0, b.tree_id
                break
        return DetectionVerdict(tree.tree_id, best, best_id, best_id is None, tree.label)
    target = 1.0 if exhaustive else params.threshold
    root = tree.labels[0]
    for b in ordered:
        if root not in b.label_set:
            continue
        res = partial_match(tree, b, params, stop_at=target)
        if res.score > best or best_id is None:
            best, best_id = res.score, b.tree_id
        if best >= target:
            break
    return DetectionVerdict(tree.tree_id, best, best_id, best < params.threshold, tree.label)


def score_trees(
    trees: Iterable[TaskTree], model: BaselineModel, mode: MatchMode | str, anchor: Anchor | str = Anchor.ANY_NODE
) -> np.ndarray:
    """Exhaustive best score of every tree; exact mode yields 0/1."""
    params = MatchParams(MatchMode(mode), 1.0, Anchor(anchor))
    return np.array([detect(t, model, params, exhaustive=True).best_score for t in trees], dtype=float)


class TreePatternDetector(BaseEstimator):
    """One-class detector: fit on benign trees, flag trees that match nothing.

    ``predict`` returns 1 for anomalous trees and 0 otherwise, matching the
    label convention of the audit data.
    """

    def __init__(
        self,
        mode: str = "partial-same",
        threshold: float = 0.9,
        anchor: str = "any",
        stage: str = "semantic",
        weight_merge: str = "max",
        cluster_patterns: bool = True,
    ):
        self.mode = mode
        self.threshold = threshold
        self.anchor = anchor
        self.stage = stage
        self.weight_merge = weight_merge
        self.cluster_patterns = cluster_patterns

    def _params(self) -> MatchParams:
        return MatchParams(self.mode, self.threshold, self.anchor)

    def fit(self, X, y=None):
        X = check_trees(X)
        self._params()
        if Stage(self.stage) is Stage.TEMPORAL_SET:
            raise StageError("detection requires a clustered or semantic baseline")
        self.model_ = build_baseline(X, self.stage, self.weight_merge)
        return self

    def _prepare(self, X) -> list[TaskTree]:
        X = check_trees(X, allow_empty=True)
        if self.cluster_patterns:
            X = [cluster_tree(t, self.weight_merge) for t in X]
        return X

    def detect(self, X) -> list[DetectionVerdict]:
        check_is_fitted(self, "model_")
        params = self._params()
        return [detect(t, self.model_, params) for t in self._prepare(X)]

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return score_trees(self._prepare(X), self.model_, self.mode, self.anchor)

    def decision_function(self, X) -> np.ndarray:
        return self.score_samples(X) - self.threshold

    def predict(self, X) -> np.ndarray:
        return np.array([int(v.anomalous) for v in self.detect(X)], dtype=int)
