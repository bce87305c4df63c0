"""``taptree`` command line."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from .baseline import BaselineModel, Stage, build_baseline, cluster_tree
from .exceptions import FormatError, IoError, TapTreeError
from .ingest import read_events, write_events
from .persist import load, persist, read_traces, write_traces
from .pipeline import RunConfig, run_pipeline
from .seqmine import (
    TraceClassifier,
    classify,
    extract_traces,
    maximal_patterns,
    mine_patterns,
    train_classifier,
)
from .synth import generate_events
from .treebuild import TreeFilter, build_trees, filter_trees
from .treematch import MatchParams, detect

log = logging.getLogger("taptree")


def _open_out(path: str):
    if path == "-":
        return sys.stdout
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _write_text(path: str, text: str) -> None:
    fh = _open_out(path)
    try:
        fh.write(text)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _load_kind(path: str, kind: type, what: str):
    obj = load(path)
    if kind is list:
        ok = isinstance(obj, list)
    else:
        ok = isinstance(obj, kind)
    if not ok:
        raise FormatError(f"{path} is not a {what} file")
    return obj


def cmd_ingest(a) -> int:
    batches, stats = read_events(a.input, a.host, a.max_malformed)
    fh = _open_out(a.out)
    try:
        write_events(batches, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    log.info("%d parsed, %d skipped, %d filtered, %d batch(es)", stats.parsed, stats.skipped, stats.filtered, len(batches))
    return 0


def cmd_build(a) -> int:
    batches, _ = read_events(a.events, a.host, a.max_malformed)
    trees = []
    for b in batches:
        trees.extend(build_trees(b))
    kept = filter_trees(trees, TreeFilter(a.min_nodes, a.min_depth))
    persist(kept, a.out)
    log.info("%d tree(s) built, %d kept", len(trees), len(kept))
    return 0


def cmd_baseline(a) -> int:
    forest = _load_kind(a.forest, list, "forest")
    model = build_baseline(forest, a.stage, a.weight_merge)
    persist(model, a.out)
    log.info("%s baseline: %d -> %d tree(s)", model.stage.value, model.input_count, model.output_count)
    return 0


def cmd_detect(a) -> int:
    model = _load_kind(a.model, BaselineModel, "model")
    forest = _load_kind(a.forest, list, "forest")
    params = MatchParams(a.mode, a.threshold, a.anchor)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tree_id", "best_score", "best_baseline_id", "anomalous", "label"])
    n_bad = 0
    for t in forest:
        if a.cluster_patterns:
            t = cluster_tree(t, model.weight_merge)
        v = detect(t, model, params)
        n_bad += v.anomalous
        w.writerow([v.tree_id, f"{v.best_score:.6f}", v.best_baseline_id or "", int(v.anomalous),
                    "" if v.label is None else v.label])
    _write_text(a.out, buf.getvalue())
    log.info("%d of %d tree(s) anomalous", n_bad, len(forest))
    return 0


def cmd_traces(a) -> int:
    forest = _load_kind(a.forest, list, "forest")
    fh = _open_out(a.out)
    try:
        n = write_traces((tr for t in forest for tr in extract_traces(t)), fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    log.info("%d trace(s) from %d tree(s)", n, len(forest))
    return 0


def _labels(traces):
    labels = [t.label for t in traces]
    return labels if all(lab in (0, 1) for lab in labels) else None


def cmd_mine(a) -> int:
    traces = read_traces(a.traces)
    pats = mine_patterns(traces, a.min_support, _labels(traces))
    if a.maximal:
        pats = maximal_patterns(pats)
    persist(pats, a.out)
    log.info("%d pattern(s)", len(pats))
    return 0


def cmd_train(a) -> int:
    traces = read_traces(a.traces)
    pats = _load_kind(a.patterns, list, "patterns")
    prior = None if a.class_prior is None else (0.5, 0.5) if a.class_prior == "uniform" else tuple(
        float(x) for x in a.class_prior.split(",")
    )
    clf = train_classifier(traces, pats, a.alpha, [t.label for t in traces], prior)
    persist(clf, a.out)
    return 0


def cmd_classify(a) -> int:
    traces = read_traces(a.traces)
    clf = _load_kind(a.clf, TraceClassifier, "classifier")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trace_id", "tree_id", "likelihood", "malicious", "label"])
    for t in traces:
        flag, p = classify(t, clf, a.threshold)
        w.writerow([t.trace_id, t.tree_id, f"{p:.6f}", flag, "" if t.label is None else t.label])
    _write_text(a.out, buf.getvalue())
    return 0


def cmd_run(a) -> int:
    config = RunConfig.load(a.config)
    report = run_pipeline(config)
    if a.report:
        _write_text(a.report, report.to_csv())
    if a.roc:
        _write_text(a.roc, report.roc_csv())
    if not a.report and not a.roc:
        sys.stdout.write(report.to_csv())
    log.info("timing: %s", json.dumps({k: round(v, 4) for k, v in report.timing.items()}))
    return 0


def cmd_synth(a) -> int:
    synth = generate_events(
        a.tasks, n_events=a.events, n_attacks=a.attacks, days=a.days, seed=a.seed
    )
    fh = _open_out(a.out)
    try:
        synth.write_jsonl(fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    log.info("%d event(s), %d task(s), %d attack(s)", len(synth.events), synth.n_tasks, synth.n_attacks)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taptree", description="Task process-tree behavior modeling and detection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def events_opts(s):
        s.add_argument("--host", default=None, help="keep only events of this host")
        s.add_argument("--max-malformed", type=float, default=0.10)

    s = sub.add_parser("ingest", help="parse and batch an event log")
    s.add_argument("--input", required=True, help="JSONL path or '-'")
    s.add_argument("--out", required=True)
    events_opts(s)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("build", help="build task trees from events")
    s.add_argument("--events", required=True)
    s.add_argument("--min-nodes", type=int, default=1)
    s.add_argument("--min-depth", type=int, default=1)
    s.add_argument("--out", required=True)
    events_opts(s)
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("baseline", help="fuse a forest into a baseline model")
    s.add_argument("--forest", required=True)
    s.add_argument("--stage", choices=[x.value for x in Stage], default="semantic")
    s.add_argument("--weight-merge", choices=["max", "sum"], default="max")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("detect", help="query trees against a baseline model")
    s.add_argument("--model", required=True)
    s.add_argument("--forest", required=True)
    s.add_argument("--mode", choices=["exact", "partial-same", "partial-var"], default="partial-same")
    s.add_argument("--threshold", type=float, default=0.9)
    s.add_argument("--anchor", choices=["any", "root"], default="any")
    s.add_argument("--no-cluster", dest="cluster_patterns", action="store_false",
                   help="match trees as built instead of clustering them first")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("traces", help="extract root-to-leaf traces from a forest")
    s.add_argument("--forest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_traces)

    s = sub.add_parser("mine", help="mine frequent sequential patterns")
    s.add_argument("--traces", required=True)
    s.add_argument("--min-support", type=float, default=0.05)
    s.add_argument("--maximal", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("train", help="train the trace classifier on pattern features")
    s.add_argument("--traces", required=True)
    s.add_argument("--patterns", required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--class-prior", default=None, help="'uniform' or 'p0,p1'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("classify", help="score traces with a trained classifier")
    s.add_argument("--traces", required=True)
    s.add_argument("--clf", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("run", help="run the whole pipeline from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--report", default=None)
    s.add_argument("--roc", default=None)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="write a synthetic event log")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--tasks", type=int)
    g.add_argument("--events", type=int)
    s.add_argument("--attacks", type=int, default=2)
    s.add_argument("--days", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TapTreeError as exc:
        print(f"taptree {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"taptree {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
