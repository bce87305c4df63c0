"""Task process-tree behavior modeling and anomaly detection over audit logs."""

from .baseline import (
    BaselineBuilder,
    BaselineModel,
    Stage,
    build_baseline,
    cluster_tree,
    clustered_tree_set,
    is_induced_subtree,
    merge_trees,
    semantic_aggregate,
    temporal_tree_set,
    update_baseline,
)
from .evaluation import EvalReport, MetricRow, evaluate_sequence_classifier, evaluate_tree_detector
from .exceptions import *  # noqa: F401,F403
from .ingest import AuditEvent, EventBatch, load_events, parse_event, read_events
from .persist import load, persist
from .pipeline import RunConfig, run_pipeline
from .seqmine import (
    NoiseDetector,
    SequencePatternClassifier,
    SequentialPattern,
    SequentialPatternMiner,
    Trace,
    TraceClassifier,
    classify,
    contains,
    extract_traces,
    maximal_patterns,
    mine_patterns,
    noise_score,
    select_features,
    train_classifier,
)
from .tree import TaskTree
from .treebuild import TaskTreeBuilder, TreeFilter, build_trees, filter_trees
from .treematch import (
    Anchor,
    MatchMode,
    MatchParams,
    TreePatternDetector,
    detect,
    exact_match,
    partial_match,
)

__version__ = "0.1.0"
