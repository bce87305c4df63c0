"""Task process-tree construction from per-host, per-day event batches."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from sklearn.base import BaseEstimator, TransformerMixin

from .ingest import AuditEvent, EventBatch, ObjectType
from .tree import UNKNOWN, TaskTree

START_ACTIONS = frozenset({"START", "CREATE", "FORK", "EXEC", "SPAWN"})
END_ACTIONS = frozenset({"TERMINATE", "END", "EXIT", "STOP"})


@dataclass(frozen=True)
class TreeFilter:
    min_nodes: int = 1
    min_depth: int = 1

    def __post_init__(self):
        if self.min_nodes < 1 or self.min_depth < 1:
            raise ValueError("min_nodes and min_depth must be positive")

    def keep(self, tree: TaskTree) -> bool:
        return tree.n_nodes >= self.min_nodes and tree.max_depth >= self.min_depth


class _Node:
    __slots__ = ("nid", "label", "parent", "weight", "first_seen", "children", "pid", "root")

    def __init__(self, nid, label, parent, first_seen, pid=None):
        self.nid = nid
        self.label = label
        self.parent = parent
        self.weight = 1
        self.first_seen = first_seen
        self.children: list[_Node] = []
        self.pid = pid
        self.root = self if parent is None else parent.root


@dataclass
class _Component:
    root: _Node
    label: int = 0
    n_events: int = 0
    event_ids: list = field(default_factory=list)


class _Forest:
    """Mutable state of tree construction over one time-ordered batch."""

    def __init__(self, track_events: bool = False):
        self.nodes: list[_Node] = []
        self.components: dict[int, _Component] = {}
        self.live: dict[int, _Node] = {}  # pid -> process node
        self.actors: dict[str, _Node] = {}  # process object id -> node
        self.attach_ops = 0
        self.track_events = track_events

    def new_node(self, label, parent, ts, pid=None) -> _Node:
        node = _Node(len(self.nodes), label, parent, ts, pid)
        self.nodes.append(node)
        if parent is None:
            self.components[node.nid] = _Component(node)
        else:
            parent.children.append(node)
        return node

    def attach(self, parent: _Node, label: str, ts, pid=None) -> _Node:
        """Add ``label`` under ``parent``, or bump the weight of the existing edge.

        File-like children are keyed by label only; process children are
        keyed by (label, pid) so that distinct instances stay distinct.
        """
        self.attach_ops += 1
        for child in parent.children:
            if child.label == label and child.pid == pid:
                child.weight += 1
                return child
        return self.new_node(label, parent, ts, pid)

    def credit(self, node: _Node, ev: AuditEvent):
        comp = self.components[node.root.nid]
        comp.n_events += 1
        if ev.label == 1:
            comp.label = 1
        if self.track_events:
            comp.event_ids.append(ev.id)

    def resolve_parent(self, ev: AuditEvent) -> _Node | None:
        if ev.ppid != ev.pid:
            node = self.live.get(ev.ppid)
            if node is not None:
                return node
        return self.actors.get(ev.actor_id)

    def acting_node(self, ev: AuditEvent) -> _Node:
        node = self.live.get(ev.pid)
        if node is None:
            node = self.actors.get(ev.actor_id)
        if node is None:
            node = self.new_node(ev.image_path, None, ev.timestamp, ev.pid)
            self.live[ev.pid] = node
            self.actors[ev.actor_id] = node
        return node

    def start(self, ev: AuditEvent):
        old = self.live.pop(ev.pid, None)
        if old is not None and old.label == ev.image_path and not old.children:
            # re-invocation of the same process instance
            old.weight += 1 if old.parent is not None else 0
            self.attach_ops += 1 if old.parent is not None else 0
            self.live[ev.pid] = old
            self.actors[ev.object_id] = old
            self.credit(old, ev)
            return
        parent = self.resolve_parent(ev)
        if parent is None and ev.parent_image_path != UNKNOWN:
            parent = self.new_node(ev.parent_image_path, None, ev.timestamp, ev.ppid)
            if ev.ppid != ev.pid:
                self.live.setdefault(ev.ppid, parent)
            self.actors.setdefault(ev.actor_id, parent)
        if parent is None:
            child = self.new_node(ev.image_path, None, ev.timestamp, ev.pid)
        else:
            child = self.attach(parent, ev.image_path, ev.timestamp, ev.pid)
        self.live[ev.pid] = child
        self.actors[ev.object_id] = child
        self.credit(child, ev)

    def other(self, ev: AuditEvent):
        actor = self.acting_node(ev)
        if ev.object is ObjectType.PROCESS and ev.action in END_ACTIONS:
            self.credit(actor, ev)
            if self.live.get(ev.pid) is actor:
                del self.live[ev.pid]
            return
        if ev.file_path != UNKNOWN:
            leaf = self.attach(actor, ev.file_path, ev.timestamp)
            self.credit(leaf, ev)
        else:
            self.credit(actor, ev)

    def trees(self, host: str, prefix: str) -> list[TaskTree]:
        out = []
        for k, (rid, comp) in enumerate(sorted(self.components.items())):
            labels, children, weights, seen = [], [], [], []
            index: dict[int, int] = {}
            stack = [comp.root]
            while stack:
                node = stack.pop()
                index[node.nid] = len(labels)
                labels.append(node.label)
                weights.append(node.weight if node.parent is not None else 0)
                seen.append(node.first_seen)
                children.append(node.children)
                # children are already in (first_seen, node id) order
                stack.extend(reversed(node.children))
            kids = [[index[c.nid] for c in cs] for cs in children]
            tree = TaskTree.from_children(
                labels, kids, weights, first_seen=seen,
                tree_id=f"{prefix}{k:05d}", host=host, label=comp.label,
            )
            out.append(tree)
        return out


def build_trees(batch: EventBatch, *, return_assignment: bool = False):
    """Turn one time-ordered batch into task trees.

    Process starts hang the child image under the parent process node,
    resolved by ppid, then by actor lineage, else a fresh root is opened.
    Other events hang their ``file_path`` under the acting process. A
    repeated (node, label) attachment bumps the edge weight.

    With ``return_assignment=True`` also returns ``{tree_id: [event ids]}``.
    """
    forest = _Forest(track_events=return_assignment)
    for ev in batch.events:
        if ev.object is ObjectType.PROCESS and ev.action in START_ACTIONS:
            forest.start(ev)
        else:
            forest.other(ev)
    prefix = f"{batch.host}:{batch.day.isoformat()}:"
    trees = forest.trees(batch.host, prefix)
    if not return_assignment:
        return trees
    comps = [c for _, c in sorted(forest.components.items())]
    return trees, {t.tree_id: c.event_ids for t, c in zip(trees, comps)}, forest.attach_ops


def filter_trees(trees: Iterable[TaskTree], f: TreeFilter) -> list[TaskTree]:
    return [t for t in trees if f.keep(t)]


@dataclass
class TreeStats:
    count: int = 0
    depth_histogram: dict[int, int] = field(default_factory=dict)
    node_histogram: dict[int, int] = field(default_factory=dict)
    label_counts: tuple[int, int] = (0, 0)
    total_nodes: int = 0


def tree_stats(trees: Iterable[TaskTree]) -> TreeStats:
    trees = list(trees)
    depth = Counter(t.max_depth for t in trees)
    size = Counter(t.n_nodes for t in trees)
    mal = sum(1 for t in trees if t.label == 1)
    return TreeStats(
        count=len(trees),
        depth_histogram=dict(sorted(depth.items())),
        node_histogram=dict(sorted(size.items())),
        label_counts=(len(trees) - mal, mal),
        total_nodes=sum(size_ * n for size_, n in size.items()),
    )


class TaskTreeBuilder(TransformerMixin, BaseEstimator):
    """Transformer from event batches to a filtered list of task trees.

    Parameters
    ----------
    min_nodes, min_depth : int
        Trees smaller or shallower than these are dropped.
    """

    def __init__(self, min_nodes: int = 1, min_depth: int = 1):
        self.min_nodes = min_nodes
        self.min_depth = min_depth

    def fit(self, X=None, y=None):
        self.filter_ = TreeFilter(self.min_nodes, self.min_depth)
        return self

    def transform(self, X: Iterable[EventBatch]) -> list[TaskTree]:
        f = TreeFilter(self.min_nodes, self.min_depth)
        out: list[TaskTree] = []
        for batch in X:
            out.extend(filter_trees(build_trees(batch), f))
        return out
