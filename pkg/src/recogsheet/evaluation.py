"""Accuracy, train/test condition matrices, incremental curves, mixed sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as rls
from ._parallel import ordered_map
from .datasets import FeatureDataset, check_compatible, class_counts, concat, select
from .errors import InvalidArgument
from .reports import fmt, write_rows


@dataclass
class EvalResult:
    accuracy: float
    num_correct: int
    num_total: int
    per_class_accuracy: np.ndarray  # nan where a class has no test frames
    per_class_correct: np.ndarray
    per_class_total: np.ndarray

    def to_dict(self) -> dict:
        return dict(
            accuracy=self.accuracy,
            num_correct=self.num_correct,
            num_total=self.num_total,
            per_class_accuracy=[None if np.isnan(a) else float(a) for a in self.per_class_accuracy],
            per_class_correct=self.per_class_correct.tolist(),
            per_class_total=self.per_class_total.tolist(),
        )


def score_matrix(model: rls.RlsModel, test: FeatureDataset) -> np.ndarray:
    if test.dim != model.dim:
        raise InvalidArgument(f"test set has dim {test.dim}, model expects {model.dim}")
    return rls.decision_scores(model, test.features.astype(np.float64))


def evaluate(model: rls.RlsModel, test: FeatureDataset) -> EvalResult:
    """Fraction of test frames whose argmax prediction equals the true class."""
    if len(test) == 0:
        raise InvalidArgument("cannot evaluate on an empty test set")
    if test.num_classes > model.num_classes or test.class_id.max() >= model.num_classes:
        raise InvalidArgument(f"test class ids exceed the model's {model.num_classes} classes")
    pred = np.argmax(score_matrix(model, test), axis=1)
    return eval_predictions(pred, test.class_id, model.num_classes)


def eval_predictions(pred, truth, num_classes: int) -> EvalResult:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    hit = pred == truth
    total = np.bincount(truth, minlength=num_classes)
    correct = np.bincount(truth, weights=hit, minlength=num_classes).astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(total > 0, correct / np.maximum(total, 1), np.nan)
    n_correct = int(hit.sum())
    return EvalResult(n_correct / truth.size, n_correct, int(truth.size), per_class, correct, total)


# ---------------------------------------------------------------------------
# Mixed datasets
# ---------------------------------------------------------------------------


def build_mixed(sources, per_source_k: int, name: str | None = None) -> FeatureDataset:
    """Concatenate the first ``per_source_k`` frames per class of every source."""
    sources = list(sources)
    if not sources:
        raise InvalidArgument("build_mixed needs at least one source")
    if int(per_source_k) != per_source_k or per_source_k < 1:
        raise InvalidArgument(f"per_source_k must be a positive integer, got {per_source_k!r}")
    for s, src in enumerate(sources):
        check_compatible(sources[0], src)
        counts = class_counts(src)
        short = np.flatnonzero(counts < per_source_k)
        if short.size:
            c = int(short[0])
            raise InvalidArgument(
                f"class {c} ({src.class_names[c]}) has {counts[c]} frames in source {s} "
                f"({src.name}), fewer than per_source_k={per_source_k}"
            )
    return concat([select(src, first_k=per_source_k) for src in sources], name=name)


# ---------------------------------------------------------------------------
# Cross-condition matrix
# ---------------------------------------------------------------------------


@dataclass
class CrossMatrix:
    row_tags: list
    col_tags: list
    cells: np.ndarray
    row_averages: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        self.row_averages = self.cells.mean(axis=1)

    def cell(self, row: str, col: str) -> float:
        return float(self.cells[self.row_tags.index(row), self.col_tags.index(col)])

    def write_csv(self, path) -> Path:
        rows = [["train\\test", *self.col_tags, "average"]]
        for tag, cells, avg in zip(self.row_tags, self.cells, self.row_averages):
            rows.append([tag, *(fmt(v) for v in cells), fmt(avg)])
        return write_rows(path, rows)


def cross_matrix(
    conditions,
    lam: float = rls.DEFAULT_LAMBDA,
    train_k: int | None = None,
    pooled: bool = True,
    pooled_tag: str = "all",
    workers: int = 1,
) -> CrossMatrix:
    """Accuracy of a model trained on each condition's train set, tested on every test set.

    ``conditions`` is a list of ``(tag, train, test)``. Every row is trained on
    the first ``train_k`` frames per class. The pooled row (added when there
    are at least two conditions) takes ``train_k / m`` frames per class from
    each of the ``m`` training sets, so all rows see equally many examples.
    ``train_k`` defaults to the smallest per-class count, rounded down to a
    multiple of ``m`` when pooling.
    """
    conditions = list(conditions)
    if not conditions:
        raise InvalidArgument("cross_matrix needs at least one condition")
    ref = conditions[0][1]
    for _, train, test in conditions:
        check_compatible(ref, train)
        check_compatible(ref, test)
    m = len(conditions)
    pooled = pooled and m > 1
    min_count = int(min(class_counts(tr).min() for _, tr, _ in conditions))
    if min_count < 1:
        raise InvalidArgument("every class must appear in every training condition")
    if train_k is None:
        train_k = min_count - (min_count % m if pooled else 0)
    if train_k < 1 or train_k > min_count:
        raise InvalidArgument(f"train_k={train_k} outside [1, {min_count}]")
    if pooled and train_k % m:
        raise InvalidArgument(f"train_k={train_k} is not divisible by the {m} pooled conditions")

    trains = [select(tr, first_k=train_k) for _, tr, _ in conditions]
    tags = [str(tag) for tag, _, _ in conditions]
    if pooled:
        trains.append(build_mixed([tr for _, tr, _ in conditions], train_k // m))
        row_tags = tags + [pooled_tag]
    else:
        row_tags = list(tags)
    tests = [te for _, _, te in conditions]

    def run_row(train):
        model = rls.fit_batch(train.features, train.class_id, lam, train.num_classes)
        return [evaluate(model, te).accuracy for te in tests]

    cells = ordered_map(run_row, trains, workers)
    return CrossMatrix(row_tags, tags, np.array(cells))


# ---------------------------------------------------------------------------
# Incremental learning curve
# ---------------------------------------------------------------------------


@dataclass
class LearningCurve:
    checkpoints: list
    accuracies: list
    segment_tags: list

    def write_csv(self, path) -> Path:
        rows = [["checkpoint", "accuracy", "segment_tag"]]
        rows += [[str(c), fmt(a), t] for c, a, t in zip(self.checkpoints, self.accuracies, self.segment_tags)]
        return write_rows(path, rows)


def round_robin_order(dataset: FeatureDataset) -> list:
    """Frame indices grouped in rounds: round r holds the r-th frame of each class."""
    per_class = [np.flatnonzero(dataset.class_id == c) for c in range(dataset.num_classes)]
    rounds = max((len(p) for p in per_class), default=0)
    return [np.array([p[r] for p in per_class if r < len(p)], dtype=np.int64) for r in range(rounds)]


def incremental_curve(
    sources,
    test: FeatureDataset,
    step: int = 10,
    lam: float = rls.DEFAULT_LAMBDA,
    tags=None,
) -> LearningCurve:
    """Train one model frame by frame through ``sources`` in order.

    Frames are fed round-robin across classes. A checkpoint is recorded every
    ``step`` examples per class and at the end of every source; its tag names
    the source that supplied the newest frames.
    """
    sources = list(sources)
    if not sources:
        raise InvalidArgument("incremental_curve needs at least one source")
    if int(step) != step or step < 1:
        raise InvalidArgument(f"step must be a positive integer, got {step!r}")
    for src in sources:
        check_compatible(test, src)
    if tags is None:
        tags = [src.name or f"source{i}" for i, src in enumerate(sources)]
    tags = [str(t) for t in tags]
    if len(tags) != len(sources):
        raise InvalidArgument("one tag per source is required")

    model = rls.new_model(test.dim, test.num_classes, lam)
    X_test = test.features.astype(np.float64)
    checkpoints, accuracies, seg = [], [], []
    consumed = 0
    for src, tag in zip(sources, tags):
        rounds = round_robin_order(src)
        pending = []
        for r, idx in enumerate(rounds):
            pending.append(idx)
            consumed += 1
            if consumed % step == 0 or r == len(rounds) - 1:
                rows = np.concatenate(pending)
                pending = []
                rls.update_batch(model, src.features[rows], src.class_id[rows])
                pred = np.argmax(X_test @ model.weights, axis=1)
                checkpoints.append(consumed)
                accuracies.append(float(np.mean(pred == test.class_id)))
                seg.append(tag)
    return LearningCurve(checkpoints, accuracies, seg)
