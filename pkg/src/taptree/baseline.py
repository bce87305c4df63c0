"""Fusion of a raw task-tree forest into a compact baseline behaviour model.

Three stages, each feeding the next:

* temporal tree set - structurally identical trees collapse to one;
* clustered trees - duplicate same-label leaves under one parent merge;
* semantic aggregation - trees that are induced subtrees of a kept tree are
  absorbed, trees whose root label occurs in a kept tree are grafted onto it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_trees
from .embedding import find_embedding
from .exceptions import MergePreconditionError, StageError
from .tree import TaskTree


class Stage(str, Enum):
    TEMPORAL_SET = "temporal"
    CLUSTERED = "clustered"
    SEMANTIC = "semantic"


_STAGE_ORDER = {Stage.TEMPORAL_SET: 0, Stage.CLUSTERED: 1, Stage.SEMANTIC: 2}


def _combiner(weight_merge: str) -> Callable[[int, int], int]:
    if weight_merge == "max":
        return max
    if weight_merge == "sum":
        return lambda a, b: a + b
    raise ValueError(f"weight_merge must be 'max' or 'sum', got {weight_merge!r}")


@dataclass
class BaselineModel:
    stage: Stage
    trees: list[TaskTree]
    provenance: dict[str, list[str]]
    weight_merge: str = "max"
    input_count: int = 0
    build_millis: float | None = field(default=None, compare=False)

    @property
    def output_count(self) -> int:
        return len(self.trees)

    @property
    def build_stats(self) -> dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "build_millis": self.build_millis,
        }

    def __len__(self):
        return len(self.trees)


@dataclass(frozen=True)
class SubtreeWitness:
    mapping: dict[int, int]
    verified: bool = True


def _with_unique_ids(trees: Sequence[TaskTree]) -> list[TaskTree]:
    ids = [t.tree_id for t in trees]
    if all(ids) and len(set(ids)) == len(ids):
        return list(trees)
    seen: set[str] = set()
    out = []
    for i, t in enumerate(trees):
        tid = t.tree_id
        if not tid or tid in seen:
            tid = f"{t.tree_id or 't'}#{i}"
        seen.add(tid)
        out.append(t if tid == t.tree_id else t.replace(tree_id=tid))
    return out


def structure_signature(tree: TaskTree) -> tuple:
    """Node-label multiset plus labeled edge set, weights ignored."""
    edges = sorted({(a, b) for a, b, _ in tree.labeled_edges()})
    return tuple(sorted(tree.labels)), tuple(edges)


def _trace_sources(tree_ids: Iterable[str], provenance: Mapping[str, list[str]] | None):
    out: list[str] = []
    for tid in tree_ids:
        out.extend(provenance.get(tid, [tid]) if provenance else [tid])
    return out


def temporal_tree_set(
    trees: Iterable[TaskTree],
    weight_merge: str = "max",
    *,
    _provenance: Mapping[str, list[str]] | None = None,
    _stage: Stage = Stage.TEMPORAL_SET,
) -> BaselineModel:
    """Collapse structurally identical trees; first occurrence is the representative.

    Each representative edge takes ``combine(own weight, weight of the same
    labeled edge in every other merged instance)``.
    """
    combine = _combiner(weight_merge)
    trees = _with_unique_ids(list(trees))
    groups: dict[tuple, list[TaskTree]] = {}
    for t in trees:
        groups.setdefault(structure_signature(t), []).append(t)
    out: list[TaskTree] = []
    provenance: dict[str, list[str]] = {}
    for members in groups.values():
        rep = members[0]
        if len(members) > 1:
            weights = list(rep.weights)
            for other in members[1:]:
                best: dict[tuple[str, str], int] = {}
                for a, b, w in other.labeled_edges():
                    best[(a, b)] = max(w, best.get((a, b), 0))
                for p, c, _ in rep.edges():
                    weights[c] = combine(weights[c], best[(rep.labels[p], rep.labels[c])])
            rep = rep.replace(weights=weights, label=max(m.label for m in members))
        out.append(rep)
        provenance[rep.tree_id] = _trace_sources((m.tree_id for m in members), _provenance)
    return BaselineModel(_stage, out, provenance, weight_merge, input_count=len(trees))


def cluster_tree(tree: TaskTree, weight_merge: str = "max") -> TaskTree:
    """Merge same-label leaf siblings into their first occurrence."""
    combine = _combiner(weight_merge)
    children = [list(c) for c in tree.children]
    weights = list(tree.weights)
    changed = False
    for u, kids in enumerate(tree.children):
        if len(kids) < 2:
            continue
        first: dict[str, int] = {}
        keep = []
        for v in kids:
            if tree.children[v]:
                keep.append(v)
                continue
            lab = tree.labels[v]
            if lab in first:
                k = first[lab]
                if weights[k] != weights[v]:
                    weights[k] = combine(weights[k], weights[v])
                elif weight_merge == "sum":
                    weights[k] = weights[k] + weights[v]
                changed = True
            else:
                first[lab] = v
                keep.append(v)
        children[u] = keep
    if not changed:
        return tree
    return TaskTree.from_children(
        tree.labels, children, weights, first_seen=tree.first_seen,
        tree_id=tree.tree_id, host=tree.host, label=tree.label,
    )


def clustered_tree_set(model: BaselineModel) -> BaselineModel:
    if model.stage is not Stage.TEMPORAL_SET:
        raise StageError(f"clustering expects a temporal tree set, got {model.stage.value}")
    clustered = [cluster_tree(t, model.weight_merge) for t in model.trees]
    out = temporal_tree_set(
        clustered, model.weight_merge, _provenance=model.provenance, _stage=Stage.CLUSTERED
    )
    out.input_count = model.input_count
    return out


def is_induced_subtree(t2: TaskTree, t1: TaskTree) -> SubtreeWitness | None:
    """Witness that ``t2`` embeds in ``t1`` keeping labels, filiation and sibling order."""
    mapping = find_embedding(t2, t1, anchor_any=True, check_weights=False)
    return None if mapping is None else SubtreeWitness(mapping, True)


def mergeable(ta: TaskTree, tb: TaskTree) -> bool:
    return tb.labels[0] in ta.label_set or ta.labels[0] in tb.label_set


def merge_trees(ta: TaskTree, tb: TaskTree, weight_merge: str = "max") -> TaskTree:
    """Union of two trees grafted at the first preorder node carrying the other's root label.

    ``tb`` is grafted into ``ta`` when possible, else ``ta`` into ``tb``. Edges
    that coincide along the graft combine their weights; new children go
    after existing siblings. The result keeps ``ta``'s id and host.
    """
    combine = _combiner(weight_merge)
    if tb.labels[0] in ta.label_set:
        host, guest = ta, tb
    elif ta.labels[0] in tb.label_set:
        host, guest = tb, ta
    else:
        raise MergePreconditionError(
            f"neither root {ta.labels[0]!r} nor {tb.labels[0]!r} occurs in the other tree"
        )
    labels = list(host.labels)
    weights = list(host.weights)
    seen = list(host.first_seen)
    children = [list(c) for c in host.children]

    def copy_subtree(g: int) -> int:
        new = len(labels)
        labels.append(guest.labels[g])
        weights.append(guest.weights[g])
        seen.append(guest.first_seen[g])
        children.append([])
        for c in guest.children[g]:
            children[new].append(copy_subtree(c))
        return new

    def graft(h: int, g: int) -> None:
        for c in guest.children[g]:
            lab = guest.labels[c]
            match = next((k for k in children[h] if labels[k] == lab), None)
            if match is None:
                children[h].append(copy_subtree(c))
            else:
                weights[match] = combine(weights[match], guest.weights[c])
                graft(match, c)

    graft(host.nodes_with_label(guest.labels[0])[0], 0)
    return TaskTree.from_children(
        labels, children, weights, first_seen=seen,
        tree_id=ta.tree_id, host=ta.host, label=max(ta.label, tb.label),
    )


def _absorb(host: TaskTree, sub: TaskTree, witness: SubtreeWitness, combine) -> TaskTree:
    weights = list(host.weights)
    changed = False
    for c, d in witness.mapping.items():
        if c == 0:
            continue
        w = combine(weights[d], sub.weights[c])
        if w != weights[d]:
            weights[d] = w
            changed = True
    label = max(host.label, sub.label)
    if not changed and label == host.label:
        return host
    return host.replace(weights=weights, label=label)


class _Aggregator:
    def __init__(self, trees, provenance, weight_merge):
        self.accepted: list[TaskTree] = list(trees)
        self.provenance = {k: list(v) for k, v in provenance.items()}
        self.weight_merge = weight_merge
        self.combine = _combiner(weight_merge)

    def accept(self, cand: TaskTree, sources: list[str]) -> None:
        while True:
            for i, acc in enumerate(self.accepted):
                if cand.n_nodes > acc.n_nodes or cand.labels[0] not in acc.label_set:
                    continue
                witness = is_induced_subtree(cand, acc)
                if witness is not None:
                    self.accepted[i] = _absorb(acc, cand, witness, self.combine)
                    self.provenance[acc.tree_id].extend(sources)
                    return
            for i, acc in enumerate(self.accepted):
                if mergeable(acc, cand):
                    merged = merge_trees(acc, cand, self.weight_merge)
                    del self.accepted[i]
                    sources = self.provenance.pop(acc.tree_id) + sources
                    # the grown tree may now absorb or join other kept trees
                    cand = merged
                    break
            else:
                self.accepted.append(cand)
                self.provenance[cand.tree_id] = sources
                return


def _size_order(trees: Sequence[TaskTree]) -> list[TaskTree]:
    return sorted(trees, key=lambda t: (-t.n_nodes, t.tree_id))


def semantic_aggregate(model: BaselineModel) -> BaselineModel:
    """Absorb/merge/append loop over trees in descending size order."""
    if model.stage is not Stage.CLUSTERED:
        raise StageError(f"semantic aggregation expects clustered trees, got {model.stage.value}")
    agg = _Aggregator([], {}, model.weight_merge)
    for t in _size_order(model.trees):
        agg.accept(t, list(model.provenance.get(t.tree_id, [t.tree_id])))
    return BaselineModel(
        Stage.SEMANTIC, agg.accepted, agg.provenance, model.weight_merge, model.input_count
    )


def update_baseline(model: BaselineModel, new_tree: TaskTree) -> BaselineModel:
    """Online acceptance of one sanitised tree into a semantic model."""
    if model.stage is not Stage.SEMANTIC:
        raise StageError("online update needs a semantic model")
    agg = _Aggregator(model.trees, model.provenance, model.weight_merge)
    tid = new_tree.tree_id or f"t#{model.input_count}"
    if tid in agg.provenance:
        tid = f"{tid}#{model.input_count}"
    if tid != new_tree.tree_id:
        new_tree = new_tree.replace(tree_id=tid)
    agg.accept(new_tree, [tid])
    return BaselineModel(
        Stage.SEMANTIC, agg.accepted, agg.provenance, model.weight_merge, model.input_count + 1
    )


def build_baseline(
    trees: Iterable[TaskTree], stage: Stage | str = Stage.SEMANTIC, weight_merge: str = "max"
) -> BaselineModel:
    stage = Stage(stage)
    t0 = time.perf_counter()
    model = temporal_tree_set(trees, weight_merge)
    if _STAGE_ORDER[stage] >= 1:
        model = clustered_tree_set(model)
    if _STAGE_ORDER[stage] >= 2:
        model = semantic_aggregate(model)
    model.build_millis = (time.perf_counter() - t0) * 1000.0
    return model


class BaselineBuilder(BaseEstimator):
    """Estimator wrapper: ``fit`` fuses benign trees, ``partial_fit`` adds trees online.

    Parameters
    ----------
    stage : {'temporal', 'clustered', 'semantic'}
    weight_merge : {'max', 'sum'}
    """

    def __init__(self, stage: str = "semantic", weight_merge: str = "max"):
        self.stage = stage
        self.weight_merge = weight_merge

    def fit(self, X, y=None):
        X = check_trees(X)
        self.model_ = build_baseline(X, self.stage, self.weight_merge)
        return self

    def partial_fit(self, X, y=None):
        X = check_trees(X, allow_empty=True)
        if not hasattr(self, "model_"):
            return self.fit(X)
        for t in X:
            self.model_ = update_baseline(self.model_, cluster_tree(t, self.weight_merge))
        return self

    def transform(self, X=None):
        check_is_fitted(self, "model_")
        return list(self.model_.trees)
