"""Majority-vote label filtering over prediction streams.

A frame's filtered label is the most frequent predicted label among itself
and up to ``w - 1`` preceding frames of the same session. Nothing after the
current frame is used. If every vote were independent and correct with
probability ``A``, a strict majority of ``w`` votes would be correct with
probability ``sum_{k > w/2} C(w, k) A^k (1 - A)^(w - k)``; real streams are
correlated, so that number is only an optimistic reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from . import model as rls
from .datasets import FeatureDataset
from .errors import InvalidArgument
from .reliability import (
    DEFAULT_TRIALS,
    ConfidenceCurve,
    SubsetEvaluator,
    default_t_range,
    level_curve,
    run_trials,
)
from .reports import fmt, write_rows

DEFAULT_FRAME_PERIOD = 0.09
DEFAULT_WINDOWS = tuple(range(1, 51))
TIE_RULES = {"summed-score": kernels.TIE_SUMMED_SCORE, "most-recent": kernels.TIE_MOST_RECENT}


def iid_majority_bound(A: float, w: int) -> float:
    """Probability that more than half of ``w`` i.i.d. votes, each right w.p. ``A``, are right.

    An even split counts as a failure. Terms are summed in log space so large
    ``w`` does not overflow the binomial coefficients.
    """
    if not 0.0 <= A <= 1.0:
        raise InvalidArgument(f"accuracy must lie in [0, 1], got {A}")
    if int(w) != w or w < 1:
        raise InvalidArgument(f"window must be a positive integer, got {w!r}")
    w = int(w)
    if A == 0.0:
        return 0.0
    if A == 1.0:
        return 1.0
    la, lb = math.log(A), math.log1p(-A)
    lw = math.lgamma(w + 1)
    logs = [lw - math.lgamma(k + 1) - math.lgamma(w - k + 1) + k * la + (w - k) * lb for k in range(w // 2 + 1, w + 1)]
    top = max(logs)
    p = math.exp(top) * math.fsum(math.exp(v - top) for v in logs)
    return min(1.0, max(0.0, p))


@dataclass
class FilterConfig:
    window: int = 1
    tie_rule: str = "summed-score"
    session_reset: bool = True

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            raise InvalidArgument(f"window must be a positive integer, got {self.window!r}")
        if self.tie_rule not in TIE_RULES:
            raise InvalidArgument(f"tie_rule must be one of {sorted(TIE_RULES)}, got {self.tie_rule!r}")


@dataclass
class PredictionTrace:
    """Per-frame scores and labels in stream order.

    ``truth`` may be all ``-1`` when true classes are unknown.
    """

    session: np.ndarray
    seq: np.ndarray
    scores: np.ndarray
    predicted: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        n = self.scores.shape[0]
        self.session = np.asarray(self.session, dtype=np.int64).reshape(n)
        self.seq = np.asarray(self.seq, dtype=np.int64).reshape(n)
        self.predicted = np.asarray(self.predicted, dtype=np.int64).reshape(n)
        self.truth = np.asarray(self.truth, dtype=np.int64).reshape(n)

    def __len__(self):
        return int(self.scores.shape[0])

    @classmethod
    def from_scores(cls, scores, truth=None, session=None, seq=None) -> PredictionTrace:
        """Trace whose predictions are the per-frame argmax of ``scores``.

        Defaults put every frame in one session, numbered 0..n-1.
        """
        scores = np.asarray(scores, dtype=np.float64)
        n = scores.shape[0]
        session = np.zeros(n, dtype=np.int64) if session is None else session
        seq = np.arange(n) if seq is None else seq
        truth = np.full(n, -1) if truth is None else truth
        return cls(session, seq, scores, np.argmax(scores, axis=1), truth)

    @classmethod
    def from_labels(cls, predicted, num_classes: int, truth=None, session=None, seq=None) -> PredictionTrace:
        """Trace built from hard labels, with one-hot scores."""
        predicted = np.asarray(predicted, dtype=np.int64)
        scores = np.zeros((predicted.size, num_classes))
        scores[np.arange(predicted.size), predicted] = 1.0
        return cls.from_scores(scores, truth, session, seq)

    @classmethod
    def from_model(cls, model: rls.RlsModel, dataset: FeatureDataset) -> PredictionTrace:
        scores = rls.decision_scores(model, dataset.features.astype(np.float64))
        return cls.from_scores(scores, dataset.class_id, dataset.session_codes(), dataset.seq)

    def accuracy(self) -> float:
        if np.any(self.truth < 0):
            raise InvalidArgument("trace carries no true classes")
        return float(np.mean(self.predicted == self.truth))


def filter_trace(trace: PredictionTrace, cfg: FilterConfig) -> PredictionTrace:
    """Replace each prediction with the modal label of its causal window.

    Scores, sessions and order are kept; only ``predicted`` changes. Windows at
    the start of a session are shorter rather than delayed.
    """
    n = len(trace)
    if cfg.window == 1 or n == 0:
        return PredictionTrace(trace.session, trace.seq, trace.scores, trace.predicted.copy(), trace.truth)
    if cfg.session_reset:
        order = np.lexsort((trace.seq, trace.session))
        sess = trace.session[order]
        if np.any(np.diff(trace.seq[order])[sess[1:] == sess[:-1]] <= 0):
            raise InvalidArgument("seq must strictly increase within each session")
        boundary = np.ones(n, dtype=bool)
        boundary[1:] = sess[1:] != sess[:-1]
        starts = np.maximum.accumulate(np.where(boundary, np.arange(n), 0))
    else:
        order = np.arange(n)
        starts = np.zeros(n, dtype=np.int64)
    voted = kernels.window_vote(trace.predicted[order], trace.scores[order], starts, cfg.window, TIE_RULES[cfg.tie_rule])
    out = np.empty(n, dtype=np.int64)
    out[order] = voted
    return PredictionTrace(trace.session, trace.seq, trace.scores, out, trace.truth)


@dataclass
class SweepResult:
    windows: list
    seconds: list
    accuracies: list
    iid_bounds: list
    base_accuracy: float

    def write_csv(self, path) -> Path:
        rows = [["w", "seconds", "accuracy", "iid_bound_at_mean_A"]]
        rows += [
            [str(w), fmt(s), fmt(a), fmt(b)]
            for w, s, a, b in zip(self.windows, self.seconds, self.accuracies, self.iid_bounds)
        ]
        return write_rows(path, rows)


def filter_sweep(
    trace: PredictionTrace,
    windows=DEFAULT_WINDOWS,
    frame_period: float = DEFAULT_FRAME_PERIOD,
    tie_rule: str = "summed-score",
    session_reset: bool = True,
) -> SweepResult:
    """Filtered accuracy per window length, next to the i.i.d. majority reference."""
    if not frame_period > 0:
        raise InvalidArgument("frame_period must be positive")
    base = trace.accuracy()
    ws, secs, accs, bounds = [], [], [], []
    for w in windows:
        filtered = filter_trace(trace, FilterConfig(int(w), tie_rule, session_reset))
        ws.append(int(w))
        secs.append((int(w) - 1) * frame_period)
        accs.append(filtered.accuracy())
        bounds.append(iid_majority_bound(base, int(w)))
    return SweepResult(ws, secs, accs, bounds, base)


def filtered_level_curves(
    train: FeatureDataset,
    test: FeatureDataset,
    windows,
    t_values=None,
    num_trials: int = DEFAULT_TRIALS,
    dedupe: bool = True,
    seed: int = 0,
    lam: float = rls.DEFAULT_LAMBDA,
    level: float = 0.8,
    tie_rule: str = "summed-score",
    session_reset: bool = True,
    workers: int = 1,
) -> dict:
    """``{w: ConfidenceCurve}`` at one confidence level; all windows share each trial's model."""
    if tie_rule not in TIE_RULES:
        raise InvalidArgument(f"tie_rule must be one of {sorted(TIE_RULES)}, got {tie_rule!r}")
    ev = SubsetEvaluator(train, test, lam)
    if t_values is None:
        t_values = default_t_range(train.num_classes)
    per_window = run_trials(
        ev, t_values, num_trials, dedupe, seed, windows, TIE_RULES[tie_rule], session_reset, workers
    )
    return {w: level_curve(dists, level) for w, dists in per_window.items()}


def reliability_with_filter(
    train: FeatureDataset,
    test: FeatureDataset,
    cfg: FilterConfig,
    t_values=None,
    num_trials: int = DEFAULT_TRIALS,
    dedupe: bool = True,
    seed: int = 0,
    lam: float = rls.DEFAULT_LAMBDA,
    level: float = 0.8,
    workers: int = 1,
) -> ConfidenceCurve:
    """Level curve at ``level`` where each trial is scored on filtered labels."""
    curves = filtered_level_curves(
        train, test, [cfg.window], t_values, num_trials, dedupe, seed, lam, level,
        cfg.tie_rule, cfg.session_reset, workers,
    )
    return curves[cfg.window]


def write_filtered_levels_csv(curves: dict, path, frame_period: float = DEFAULT_FRAME_PERIOD) -> Path:
    rows = [["w", "seconds", "C", "t", "A_star"]]
    for w, curve in curves.items():
        rows += [
            [str(w), fmt((w - 1) * frame_period), fmt(curve.level), str(t), fmt(a)]
            for t, a in curve.points.items()
        ]
    return write_rows(path, rows)
