"""End-to-end runs driven by a flat, JSON-serializable configuration."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .baseline import Stage
from .evaluation import (
    SEQUENCE_THRESHOLDS,
    TREE_THRESHOLDS,
    EvalReport,
    evaluate_sequence_classifier,
    evaluate_tree_detector,
)
from .exceptions import FormatError, IoError, StageError
from .ingest import load_events, read_events
from .seqmine import extract_traces
from .synth import generate_events, split_by_label
from .treebuild import TreeFilter, build_trees, filter_trees
from .treematch import Anchor, MatchMode

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    # input: a JSONL path, or a synthetic log when ``events`` is empty
    events: str | None = None
    host: str | None = None
    max_malformed: float = 0.10
    synthetic_tasks: int | None = None
    synthetic_events: int | None = None
    synthetic_attacks: int = 2
    synthetic_days: int = 1
    # tree construction
    min_nodes: int = 1
    min_depth: int = 1
    # detection
    method: str = "tree"
    stage: str = "semantic"
    weight_merge: str = "max"
    mode: str = "partial-same"
    anchor: str = "any"
    thresholds: list[float] = field(default_factory=lambda: list(TREE_THRESHOLDS))
    cluster_patterns: bool = True
    # sequence classification
    seq_thresholds: list[float] = field(default_factory=lambda: list(SEQUENCE_THRESHOLDS))
    min_support: float = 0.05
    min_class_ratio: float = 2.0
    drop_redundant: bool = True
    maximal: bool = False
    alpha: float = 1.0
    class_prior: Any = None
    loo_level: str = "trace"
    # protocol
    k_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("tree", "sequence"):
            raise ValueError("method must be 'tree' or 'sequence'")
        Stage(self.stage)
        MatchMode(self.mode)
        Anchor(self.anchor)
        if self.events is None and self.synthetic_tasks is None and self.synthetic_events is None:
            raise ValueError("config needs 'events' or a synthetic size")
        if isinstance(self.class_prior, list):
            self.class_prior = tuple(self.class_prior)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["class_prior"], tuple):
            d["class_prior"] = list(d["class_prior"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise FormatError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise IoError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid config JSON: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise FormatError("config must be a JSON object")
        return cls.from_dict(doc)


def _load(config: RunConfig):
    if config.events:
        return read_events(config.events, config.host, config.max_malformed)
    log = generate_events(
        config.synthetic_tasks,
        n_events=config.synthetic_events,
        n_attacks=config.synthetic_attacks,
        days=config.synthetic_days,
        seed=config.seed,
    )
    # go through the text parser like a real log would
    lines = (json.dumps(r, separators=(",", ":")) for r in log.events)
    return load_events(lines, config.host, config.max_malformed)


def run_pipeline(config: RunConfig) -> EvalReport:
    """ingest, build, filter, then either tree matching or sequence classification."""
    if config.method == "tree" and Stage(config.stage) is Stage.TEMPORAL_SET:
        raise StageError("detection requires a clustered or semantic baseline")
    timing: dict[str, float] = {}
    t0 = time.perf_counter()
    batches, stats = _load(config)
    t1 = time.perf_counter()
    flt = TreeFilter(config.min_nodes, config.min_depth)
    trees = []
    for b in batches:
        trees.extend(build_trees(b))
    trees = filter_trees(trees, flt)
    t2 = time.perf_counter()
    timing["ingest_seconds"] = t1 - t0
    timing["build_seconds"] = t2 - t1
    logger.info("%d events parsed, %d trees kept", stats.parsed, len(trees))

    if config.method == "tree":
        benign, malicious = split_by_label(trees)
        report = evaluate_tree_detector(
            benign,
            malicious,
            thresholds=config.thresholds,
            mode=config.mode,
            k=config.k_folds,
            stage=config.stage,
            anchor=config.anchor,
            weight_merge=config.weight_merge,
            seed=config.seed,
            cluster_patterns=config.cluster_patterns,
        )
    else:
        # a trace inherits the label of its tree
        traces = [tr for t in trees for tr in extract_traces(t)]
        report = evaluate_sequence_classifier(
            traces,
            thresholds=config.seq_thresholds,
            k=config.k_folds,
            seed=config.seed,
            loo_level=config.loo_level,
            min_support=config.min_support,
            min_class_ratio=config.min_class_ratio,
            drop_redundant=config.drop_redundant,
            maximal=config.maximal,
            alpha=config.alpha,
            class_prior=config.class_prior,
        )
    timing.update(report.timing)
    timing["total_seconds"] = time.perf_counter() - t0
    report.timing = timing
    return report
