"""JSON persistence for forests, baseline models, patterns, classifiers and reports."""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

from .baseline import BaselineModel, Stage
from .evaluation import EvalReport, MetricRow
from .exceptions import FormatError, IoError, VersionMismatchError
from .ingest import format_timestamp, parse_timestamp
from .seqmine import SequentialPattern, Trace, TraceClassifier, as_sequence
from .tree import TaskTree

FORMAT_VERSION = 1


# -- trees -----------------------------------------------------------------


def tree_to_dict(tree: TaskTree) -> dict:
    nodes = []
    for i, lab in enumerate(tree.labels):
        node = {"id": i, "label": lab, "depth": tree.depths[i]}
        if tree.first_seen[i] is not None:
            node["first_seen"] = format_timestamp(tree.first_seen[i])
        nodes.append(node)
    return {
        "tree_id": tree.tree_id,
        "host": tree.host,
        "label": tree.label,
        "nodes": nodes,
        "edges": [{"parent": p, "child": c, "weight": w} for p, c, w in tree.edges()],
        "sibling_order": {str(i): list(k) for i, k in enumerate(tree.children) if k},
    }


def tree_from_dict(d: dict) -> TaskTree:
    try:
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        ids = [n["id"] for n in nodes]
        if ids != list(range(len(ids))):
            raise FormatError("node ids must be 0..n-1")
        labels = [n["label"] for n in nodes]
        seen = [parse_timestamp(n["first_seen"]) if n.get("first_seen") else None for n in nodes]
        weights = [0] * len(nodes)
        parent = [-1] * len(nodes)
        for e in d["edges"]:
            parent[e["child"]] = e["parent"]
            weights[e["child"]] = e["weight"]
        order = {int(k): v for k, v in d.get("sibling_order", {}).items()}
        children = [[] for _ in nodes]
        for c in range(len(nodes)):
            if parent[c] >= 0:
                children[parent[c]].append(c)
        for p, kids in order.items():
            if sorted(kids) != sorted(children[p]):
                raise FormatError(f"sibling order of node {p} disagrees with edges")
            children[p] = list(kids)
        roots = [i for i in range(len(nodes)) if parent[i] < 0]
        if len(roots) != 1 or len(d["edges"]) != len(nodes) - 1:
            raise FormatError("tree must have exactly one root and n-1 edges")
        return TaskTree.from_children(
            labels, children, weights, root=roots[0], first_seen=seen,
            tree_id=d["tree_id"], host=d.get("host", ""), label=d.get("label", 0),
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed tree record: {exc}") from exc


# -- other artifacts -------------------------------------------------------


def pattern_to_dict(p: SequentialPattern) -> dict:
    return {
        "items": [list(s) for s in p.items],
        "support": p.support,
        "count": p.count,
        "per_class_support": list(p.per_class_support) if p.per_class_support is not None else None,
    }


def pattern_from_dict(d: dict) -> SequentialPattern:
    pcs = d.get("per_class_support")
    return SequentialPattern(
        tuple(tuple(s) for s in d["items"]),
        float(d["support"]),
        int(d.get("count", 0)),
        tuple(pcs) if pcs is not None else None,
    )


def _row_to_dict(r: MetricRow) -> dict:
    return {"threshold": r.threshold, "TP": r.tp, "FP": r.fp, "TN": r.tn, "FN": r.fn}


def to_document(obj: Any) -> Any:
    if isinstance(obj, BaselineModel):
        return {
            "version": FORMAT_VERSION,
            "kind": "model",
            "stage": obj.stage.value,
            "weight_merge": obj.weight_merge,
            "trees": [tree_to_dict(t) for t in obj.trees],
            "provenance": obj.provenance,
            # build time is left out so identical input gives identical bytes
            "build_stats": {"input_count": obj.input_count, "output_count": obj.output_count},
        }
    if isinstance(obj, TraceClassifier):
        return {
            "version": FORMAT_VERSION,
            "kind": "classifier",
            "features": [pattern_to_dict(p) for p in obj.features],
            "priors": list(obj.class_priors),
            "likelihoods": obj.feature_likelihoods.tolist(),
            "alpha": obj.alpha,
        }
    if isinstance(obj, EvalReport):
        return {
            "version": FORMAT_VERSION,
            "kind": "report",
            "protocol": obj.protocol,
            "rows": [_row_to_dict(r) for r in obj.rows],
            "timing": obj.timing,
        }
    if isinstance(obj, TaskTree):
        obj = [obj]
    if isinstance(obj, (list, tuple)):
        if all(isinstance(t, TaskTree) for t in obj):
            return {"version": FORMAT_VERSION, "kind": "forest", "trees": [tree_to_dict(t) for t in obj]}
        if all(isinstance(p, SequentialPattern) for p in obj):
            return [pattern_to_dict(p) for p in obj]
    raise TypeError(f"cannot persist {type(obj).__name__}")


def from_document(doc: Any) -> Any:
    try:
        if isinstance(doc, list):
            return [pattern_from_dict(d) for d in doc]
        if not isinstance(doc, dict) or "version" not in doc:
            raise FormatError("artifact has no version field")
        if doc["version"] != FORMAT_VERSION:
            raise VersionMismatchError(
                f"artifact version {doc['version']!r}, this build reads {FORMAT_VERSION}"
            )
        kind = doc.get("kind")
        if kind == "forest":
            return [tree_from_dict(t) for t in doc["trees"]]
        if kind == "model":
            return BaselineModel(
                Stage(doc["stage"]),
                [tree_from_dict(t) for t in doc["trees"]],
                {k: list(v) for k, v in doc["provenance"].items()},
                doc["weight_merge"],
                doc["build_stats"]["input_count"],
            )
        if kind == "classifier":
            return TraceClassifier(
                [pattern_from_dict(p) for p in doc["features"]],
                tuple(doc["priors"]),
                np.asarray(doc["likelihoods"], dtype=float).reshape(len(doc["features"]), 2),
                float(doc["alpha"]),
            )
        if kind == "report":
            rows = [MetricRow(r["threshold"], r["TP"], r["FP"], r["TN"], r["FN"]) for r in doc["rows"]]
            return EvalReport(doc["protocol"], rows, doc.get("timing", {}))
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed artifact: {exc}") from exc
    raise FormatError(f"unknown artifact kind {doc.get('kind')!r}")


def dumps(obj: Any) -> str:
    return json.dumps(to_document(obj), indent=1, ensure_ascii=False) + "\n"


def loads(text: str) -> Any:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg} at {exc.pos}") from None
    return from_document(doc)


def persist(obj: Any, path: str | os.PathLike) -> None:
    text = dumps(obj)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load(path: str | os.PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return loads(text)


# -- traces (JSONL) --------------------------------------------------------


def trace_to_dict(t: Trace) -> dict:
    d = {"trace_id": t.trace_id, "tree_id": t.tree_id, "items": [list(s) for s in t.items]}
    if t.label is not None:
        d["label"] = t.label
    return d


def write_traces(traces, fh) -> int:
    n = 0
    for t in traces:
        fh.write(json.dumps(trace_to_dict(t), ensure_ascii=False, separators=(",", ":")) + "\n")
        n += 1
    return n


def read_traces(path: str | os.PathLike) -> list[Trace]:
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    out.append(Trace(
                        str(d.get("trace_id", f"t{lineno}")),
                        str(d.get("tree_id", "")),
                        as_sequence(d["items"]),
                        d.get("label"),
                    ))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise FormatError(f"line {lineno}: malformed trace: {exc}") from None
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return out
