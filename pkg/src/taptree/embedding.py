"""Ordered, label-preserving, parent-child embeddings between task trees.

A pattern node mapped to a target node must have its pattern children mapped
to target children in the same left-to-right order. Greedy leftmost
assignment of children is complete for this class of embeddings: if any
order-preserving assignment exists, taking the earliest feasible target
child for each pattern child in turn also succeeds.
"""

from __future__ import annotations

from typing import Sequence

from .tree import TaskTree


class _Inclusion:
    def __init__(self, p: TaskTree, t: TaskTree, check_weights: bool):
        self.p = p
        self.t = t
        self.check_weights = check_weights
        self.memo: dict[tuple[int, int], bool] = {}

    def edge_ok(self, c: int, d: int) -> bool:
        p, t = self.p, self.t
        if p.labels[c] != t.labels[d]:
            return False
        return not self.check_weights or p.weights[c] <= t.weights[d]

    def fits(self, pi: int, ti: int) -> bool:
        key = (pi, ti)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        p, t = self.p, self.t
        ok = True
        kids = t.children[ti]
        if len(p.children[pi]) > len(kids) or p.subtree_sizes[pi] > t.subtree_sizes[ti]:
            ok = False
        else:
            j = 0
            for c in p.children[pi]:
                # first mismatch aborts this binding
                while j < len(kids):
                    d = kids[j]
                    j += 1
                    if self.edge_ok(c, d) and self.fits(c, d):
                        break
                else:
                    ok = False
                    break
        self.memo[key] = ok
        return ok

    def mapping(self, pi: int, ti: int, out: dict[int, int]) -> None:
        out[pi] = ti
        kids = self.t.children[ti]
        j = 0
        for c in self.p.children[pi]:
            while True:
                d = kids[j]
                j += 1
                if self.edge_ok(c, d) and self.fits(c, d):
                    self.mapping(c, d, out)
                    break


def find_embedding(
    p: TaskTree,
    t: TaskTree,
    *,
    anchor_any: bool = True,
    check_weights: bool = False,
) -> dict[int, int] | None:
    """Map every node of ``p`` into ``t`` preserving labels, parent-child
    edges and sibling order; optionally require pattern edge weights not to
    exceed target edge weights. Returns ``{pattern id: target id}`` or None.
    """
    if not p.label_set <= t.label_set or p.n_nodes > t.n_nodes:
        return None
    anchors = t.nodes_with_label(p.labels[0]) if anchor_any else (
        (0,) if t.labels[0] == p.labels[0] else ()
    )
    inc = _Inclusion(p, t, check_weights)
    for a in anchors:
        if inc.fits(0, a):
            out: dict[int, int] = {}
            inc.mapping(0, a, out)
            return out
    return None


class _PartialDP:
    """Best-scoring connected rooted sub-pattern embeddable into a target."""

    def __init__(self, p: TaskTree, t: TaskTree, omega: Sequence[float]):
        self.p = p
        self.t = t
        self.omega = omega
        self.memo: dict[tuple[int, int], float] = {}

    def edge_ok(self, c: int, d: int) -> bool:
        return self.p.labels[c] == self.t.labels[d] and self.p.weights[c] <= self.t.weights[d]

    def table(self, pi: int, ti: int) -> list[list[float]]:
        kp = self.p.children[pi]
        kt = self.t.children[ti]
        n = len(kt)
        rows = [[0.0] * (n + 1)]
        for c in kp:
            prev = rows[-1]
            cur = [0.0] * (n + 1)
            for b, d in enumerate(kt):
                v = prev[b + 1] if prev[b + 1] >= cur[b] else cur[b]
                if self.edge_ok(c, d):
                    s = prev[b] + self.best(c, d)
                    if s > v:
                        v = s
                cur[b + 1] = v
            rows.append(cur)
        return rows

    def best(self, pi: int, ti: int) -> float:
        key = (pi, ti)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        score = self.omega[pi]
        if self.p.children[pi] and self.t.children[ti]:
            score += self.table(pi, ti)[-1][-1]
        self.memo[key] = score
        return score

    def matched(self, pi: int, ti: int, out: dict[int, int]) -> None:
        out[pi] = ti
        kp = self.p.children[pi]
        kt = self.t.children[ti]
        if not kp or not kt:
            return
        rows = self.table(pi, ti)
        a, b = len(kp), len(kt)
        picks = []
        while a > 0 and b > 0:
            v = rows[a][b]
            c, d = kp[a - 1], kt[b - 1]
            if v == rows[a - 1][b]:
                a -= 1
            elif v == rows[a][b - 1]:
                b -= 1
            else:
                # only remaining way to reach v is taking the (c, d) pair
                picks.append((c, d))
                a -= 1
                b -= 1
        for c, d in reversed(picks):
            self.matched(c, d, out)


def best_partial(
    p: TaskTree,
    t: TaskTree,
    omega: Sequence[float],
    *,
    anchor_any: bool = True,
    stop_at: float | None = None,
) -> tuple[float, dict[int, int]]:
    """Maximise the summed ``omega`` of a connected, root-containing subset
    of ``p`` embeddable into ``t``. Returns ``(k, mapping)``; ``(0, {})`` when
    the pattern root cannot be anchored.

    Earliest anchor wins ties. ``stop_at`` ends the anchor scan once a score
    at least that high has been found.
    """
    anchors = t.nodes_with_label(p.labels[0]) if anchor_any else (
        (0,) if t.labels[0] == p.labels[0] else ()
    )
    if not anchors:
        return 0.0, {}
    dp = _PartialDP(p, t, omega)
    best_k, best_a = -1.0, -1
    for a in anchors:
        k = dp.best(0, a)
        if k > best_k:
            best_k, best_a = k, a
            if stop_at is not None and k >= stop_at:
                break
    out: dict[int, int] = {}
    dp.matched(0, best_a, out)
    return best_k, out
