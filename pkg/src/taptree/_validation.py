"""Input validation helpers used by the estimator front-ends."""

from __future__ import annotations

import numbers
from typing import Iterable

import numpy as np

from .tree import TaskTree


def check_trees(X, *, allow_empty: bool = False) -> list[TaskTree]:
    if isinstance(X, TaskTree):
        X = [X]
    X = list(X)
    if not X and not allow_empty:
        raise ValueError("expected at least one task tree")
    for i, t in enumerate(X):
        if not isinstance(t, TaskTree):
            raise TypeError(f"element {i} is {type(t).__name__}, expected TaskTree")
    return X


def check_traces(X, *, allow_empty: bool = False) -> list:
    from .seqmine import Trace, as_sequence

    if isinstance(X, Trace):
        X = [X]
    X = list(X)
    if not X and not allow_empty:
        raise ValueError("expected at least one trace")
    return [t if isinstance(t, Trace) else Trace(f"s{i}", "", as_sequence(t), None)
            for i, t in enumerate(X)]


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(list(y) if not isinstance(y, np.ndarray) else y)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"y must be 1-d with {n} entries, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (benign) or 1 (malicious)")
    return y.astype(int)


def check_unit_interval(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_grid(values: Iterable[float], name: str) -> list[float]:
    grid = sorted({check_unit_interval(v, name) for v in values})
    if not grid:
        raise ValueError(f"{name} grid is empty")
    return grid
