"""Weighted, ordered, rooted task trees.

A :class:`TaskTree` stores its nodes in preorder: node ``0`` is the root and
the subtree of node ``i`` occupies the contiguous id range
``[i, i + subtree_size(i))``. Children lists are in left-to-right sibling
order. ``weights[i]`` is the weight of the edge entering node ``i`` (``0`` for
the root).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Iterator, Sequence

UNKNOWN = "unknown"


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    label: str
    depth: int
    first_seen: datetime | None = None


class TaskTree:
    """Immutable ordered tree of program paths with integer edge weights."""

    __slots__ = (
        "tree_id",
        "host",
        "label",
        "labels",
        "parents",
        "weights",
        "children",
        "first_seen",
        "_depths",
        "_sizes",
        "_label_set",
        "_by_label",
    )

    def __init__(
        self,
        labels: Sequence[str],
        parents: Sequence[int],
        weights: Sequence[int],
        *,
        tree_id: str = "",
        host: str = "",
        label: int = 0,
        first_seen: Sequence[datetime | None] | None = None,
    ):
        n = len(labels)
        if n == 0:
            raise ValueError("a task tree needs at least one node")
        if len(parents) != n or len(weights) != n:
            raise ValueError("labels, parents and weights must have equal length")
        if parents[0] != -1:
            raise ValueError("node 0 must be the root")
        children: list[list[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            p = parents[i]
            if not 0 <= p < i:
                raise ValueError("nodes must be stored in preorder")
            if int(weights[i]) < 1:
                raise ValueError("edge weights must be positive integers")
            if not labels[i]:
                raise ValueError("node labels must be non-empty")
            children[p].append(i)
        self.labels = tuple(labels)
        self.parents = tuple(int(p) for p in parents)
        self.weights = (0,) + tuple(int(w) for w in weights[1:])
        self.children = tuple(tuple(c) for c in children)
        self.tree_id = tree_id
        self.host = host
        self.label = int(label)
        self.first_seen = tuple(first_seen) if first_seen is not None else (None,) * n
        self._depths = None
        self._sizes = None
        self._label_set = None
        self._by_label = None
        self._check_preorder()

    def _check_preorder(self):
        sizes = self.subtree_sizes
        for i, kids in enumerate(self.children):
            expect = i + 1
            for c in kids:
                if c != expect:
                    raise ValueError("nodes must be stored in preorder")
                expect += sizes[c]

    # -- construction ------------------------------------------------------

    @classmethod
    def from_children(
        cls,
        labels: Sequence[str],
        children: Sequence[Sequence[int]],
        weights: Sequence[int],
        root: int = 0,
        first_seen: Sequence[datetime | None] | None = None,
        **meta,
    ) -> "TaskTree":
        """Build from arbitrary node numbering; nodes are renumbered in preorder."""
        order: list[int] = []
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(children[v]))
        new_id = {old: new for new, old in enumerate(order)}
        parents = [-1] * len(order)
        for old in order:
            for c in children[old]:
                parents[new_id[c]] = new_id[old]
        return cls(
            [labels[o] for o in order],
            parents,
            [0] + [weights[o] for o in order[1:]],
            first_seen=[first_seen[o] for o in order] if first_seen is not None else None,
            **meta,
        )

    @classmethod
    def parse(cls, text: str, **meta) -> "TaskTree":
        """Parse the compact notation ``A(B*2(C),D)``; weight defaults to 1."""
        tokens = re.findall(r"[(),]|[^(),]+", text)
        pos = 0
        labels: list[str] = []
        parents: list[int] = []
        weights: list[int] = []

        def node(parent):
            nonlocal pos
            tok = tokens[pos].strip()
            pos += 1
            name, _, w = tok.partition("*")
            me = len(labels)
            labels.append(name.strip())
            parents.append(parent)
            weights.append(int(w) if w else (0 if parent < 0 else 1))
            if pos < len(tokens) and tokens[pos] == "(":
                pos += 1
                while True:
                    node(me)
                    if tokens[pos] == ",":
                        pos += 1
                        continue
                    if tokens[pos] == ")":
                        pos += 1
                        break
                    raise ValueError(f"unexpected token {tokens[pos]!r}")

        tokens = [t for t in tokens if t.strip()]
        node(-1)
        if pos != len(tokens):
            raise ValueError(f"trailing input in tree notation: {text!r}")
        return cls(labels, parents, weights, **meta)

    def replace(self, **changes) -> "TaskTree":
        fields = {
            "labels": self.labels,
            "parents": self.parents,
            "weights": self.weights,
            "tree_id": self.tree_id,
            "host": self.host,
            "label": self.label,
            "first_seen": self.first_seen,
        }
        fields.update(changes)
        labels = fields.pop("labels")
        parents = fields.pop("parents")
        weights = fields.pop("weights")
        return TaskTree(labels, parents, weights, **fields)

    # -- structure ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def depths(self) -> tuple[int, ...]:
        if self._depths is None:
            d = [1] * len(self.labels)
            for i in range(1, len(d)):
                d[i] = d[self.parents[i]] + 1
            self._depths = tuple(d)
        return self._depths

    @property
    def max_depth(self) -> int:
        return max(self.depths)

    @property
    def subtree_sizes(self) -> tuple[int, ...]:
        if self._sizes is None:
            s = [1] * len(self.labels)
            for i in range(len(s) - 1, 0, -1):
                s[self.parents[i]] += s[i]
            self._sizes = tuple(s)
        return self._sizes

    @property
    def label_set(self) -> frozenset:
        if self._label_set is None:
            self._label_set = frozenset(self.labels)
        return self._label_set

    def nodes_with_label(self, label: str) -> tuple[int, ...]:
        if self._by_label is None:
            idx: dict[str, list[int]] = {}
            for i, lab in enumerate(self.labels):
                idx.setdefault(lab, []).append(i)
            self._by_label = {k: tuple(v) for k, v in idx.items()}
        return self._by_label.get(label, ())

    def is_leaf(self, i: int) -> bool:
        return not self.children[i]

    @property
    def leaves(self) -> list[int]:
        return [i for i, c in enumerate(self.children) if not c]

    @property
    def nodes(self) -> list[TreeNode]:
        return [
            TreeNode(i, self.labels[i], self.depths[i], self.first_seen[i])
            for i in range(len(self.labels))
        ]

    def edges(self) -> Iterator[tuple[int, int, int]]:
        for i in range(1, len(self.labels)):
            yield self.parents[i], i, self.weights[i]

    def labeled_edges(self) -> Iterator[tuple[str, str, int]]:
        for p, c, w in self.edges():
            yield self.labels[p], self.labels[c], w

    def subtree(self, i: int) -> range:
        return range(i, i + self.subtree_sizes[i])

    def root_paths(self) -> list[list[int]]:
        """Root-to-leaf node paths in left-to-right leaf order."""
        paths = []
        for leaf in self.leaves:
            path = [leaf]
            while self.parents[path[-1]] >= 0:
                path.append(self.parents[path[-1]])
            paths.append(path[::-1])
        return paths

    # -- comparison / display ---------------------------------------------

    def structure_key(self) -> tuple:
        return (self.labels, self.parents)

    def same_shape(self, other: "TaskTree") -> bool:
        return self.structure_key() == other.structure_key()

    def __eq__(self, other):
        if not isinstance(other, TaskTree):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.parents == other.parents
            and self.weights == other.weights
            and self.tree_id == other.tree_id
            and self.host == other.host
            and self.label == other.label
            and self.first_seen == other.first_seen
        )

    def __hash__(self):
        return hash((self.labels, self.parents, self.weights, self.tree_id))

    def notation(self, weights: bool = True) -> str:
        def render(i):
            s = self.labels[i]
            if weights and i and self.weights[i] != 1:
                s += f"*{self.weights[i]}"
            if self.children[i]:
                s += "(" + ",".join(render(c) for c in self.children[i]) + ")"
            return s

        return render(0)

    def __repr__(self):
        return f"TaskTree({self.tree_id!r}, {self.notation()!r})"


def iter_labels(trees: Iterable[TaskTree]) -> set[str]:
    out: set[str] = set()
    for t in trees:
        out |= t.label_set
    return out
