"""Accuracy distributions over random class subsets, confidence, datasheets.

For every subset size ``t`` a number of trials is run; each trial draws ``t``
classes, trains on their training frames and records test accuracy. The
accuracies form the empirical distribution ``P(acc | t)``. The confidence of
an accuracy level ``A`` is the fraction of trials reaching at least ``A``;
the level curve ``A*(t, C)`` is the largest observed accuracy whose
confidence is still ``>= C``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from . import model as rls
from ._parallel import ordered_map
from .datasets import FeatureDataset, check_compatible, class_counts
from .errors import InvalidArgument
from .reports import fmt, write_rows

DEFAULT_TRIALS = 400
DEFAULT_BIN_WIDTH = 0.02
DEFAULT_LEVELS = (0.98, 0.90, 0.80, 0.70, 0.50)
DEFAULT_TARGET = 0.98


@dataclass
class SubsetTrialPlan:
    t: int
    num_trials: int = DEFAULT_TRIALS
    dedupe: bool = True
    master_seed: int = 0


def trial_rng(master_seed: int, t: int, trial: int, attempt: int = 0) -> np.random.Generator:
    """Generator for one trial, derived from the master seed alone.

    Independent of how trials are scheduled, so any worker count reproduces
    the same subsets.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(t), int(trial), int(attempt)))
    return np.random.default_rng(ss)


def sample_class_subsets(num_classes: int, plan: SubsetTrialPlan) -> list:
    """Sorted class-id tuples, one per trial.

    With ``dedupe`` on and no more than ``num_trials`` possible subsets, every
    subset is returned once in lexicographic order. Otherwise trials are drawn
    uniformly; with ``dedupe`` a repeated draw is redrawn from the next
    derived seed.
    """
    T, t = int(num_classes), int(plan.t)
    if not 2 <= t <= T:
        raise InvalidArgument(f"subset size t={t} outside [2, {T}]")
    if plan.num_trials < 1:
        raise InvalidArgument("num_trials must be positive")
    total = math.comb(T, t)
    if plan.dedupe and total <= plan.num_trials:
        return list(itertools.combinations(range(T), t))
    out = []
    seen = set()
    for i in range(plan.num_trials):
        attempt = 0
        while True:
            rng = trial_rng(plan.master_seed, t, i, attempt)
            subset = tuple(sorted(int(c) for c in rng.choice(T, size=t, replace=False)))
            if not plan.dedupe or subset not in seen:
                break
            attempt += 1
        seen.add(subset)
        out.append(subset)
    return out


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------


@dataclass
class AccuracyDistribution:
    t: int
    samples: np.ndarray
    bin_width: float = DEFAULT_BIN_WIDTH
    bins: np.ndarray = field(init=False)
    mean: float = field(init=False)
    std: float = field(init=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.samples.size == 0:
            raise InvalidArgument("a distribution needs at least one sample")
        if np.any((self.samples < 0) | (self.samples > 1)):
            raise InvalidArgument("accuracies must lie in [0, 1]")
        nb = int(round(1.0 / self.bin_width))
        idx = np.minimum(np.floor(self.samples / self.bin_width + 1e-9).astype(np.int64), nb - 1)
        self.bins = np.bincount(idx, minlength=nb) / self.samples.size
        self.mean = float(self.samples.mean())
        self.std = float(self.samples.std())

    @property
    def num_trials(self) -> int:
        return int(self.samples.size)

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.bins.size) + 0.5) * self.bin_width


def confidence(dist, A: float) -> float:
    """Fraction of trials with accuracy at least ``A``.

    Accepts an :class:`AccuracyDistribution` or a raw sample array.
    """
    samples = dist.samples if isinstance(dist, AccuracyDistribution) else np.asarray(dist, dtype=np.float64)
    return int(np.count_nonzero(samples >= A)) / samples.size


def guaranteed_accuracy(dist, C: float) -> float:
    """Largest value in ``samples ∪ {0}`` whose confidence is ``>= C``."""
    if not 0 < C <= 1:
        raise InvalidArgument(f"confidence level must lie in (0, 1], got {C}")
    samples = dist.samples if isinstance(dist, AccuracyDistribution) else np.asarray(dist, dtype=np.float64)
    values = np.unique(np.concatenate([samples, [0.0]]))
    # number of samples >= each candidate, candidates sorted ascending
    at_least = samples.size - np.searchsorted(np.sort(samples), values, side="left")
    ok = at_least / samples.size >= C
    return float(values[ok].max())


@dataclass
class ConfidenceCurve:
    level: float
    points: dict  # t -> A*(t, level)


def level_curve(dists: dict, C: float) -> ConfidenceCurve:
    return ConfidenceCurve(float(C), {int(t): guaranteed_accuracy(d, C) for t, d in sorted(dists.items())})


@dataclass
class Datasheet:
    target_accuracy: float
    rows: dict  # level -> max t

    def render(self) -> str:
        levels = list(self.rows)
        head = ["Confidence"] + [_pct(c) for c in levels]
        body = ["# Objects"] + [str(self.rows[c]) for c in levels]
        w0 = max(len(head[0]), len(body[0]))
        widths = [max(len(a), len(b)) for a, b in zip(head[1:], body[1:])]
        line1 = head[0].ljust(w0) + "".join("  " + h.rjust(w) for h, w in zip(head[1:], widths))
        line2 = body[0].ljust(w0) + "".join("  " + b.rjust(w) for b, w in zip(body[1:], widths))
        title = f"Max objects recognized at accuracy >= {self.target_accuracy:g}"
        return "\n".join([title, line1, line2]) + "\n"

    def write_csv(self, path) -> Path:
        rows = [["confidence", "target_accuracy", "max_objects"]]
        rows += [[fmt(c), fmt(self.target_accuracy), str(t)] for c, t in self.rows.items()]
        return write_rows(path, rows)


def datasheet(dists: dict, confidence_levels=DEFAULT_LEVELS, target_accuracy: float = DEFAULT_TARGET) -> Datasheet:
    """Per confidence level, the largest ``t`` whose ``A*(t, C)`` meets the target."""
    if not dists:
        raise InvalidArgument("datasheet needs at least one distribution")
    ts = sorted(int(t) for t in dists)
    if ts != list(range(ts[0], ts[-1] + 1)):
        raise InvalidArgument(f"distributions must cover a contiguous range of t, got {ts}")
    rows = {}
    for C in confidence_levels:
        curve = level_curve(dists, C)
        ok = [t for t, a in curve.points.items() if a >= target_accuracy]
        rows[float(C)] = max(ok) if ok else 0
    return Datasheet(float(target_accuracy), rows)


# ---------------------------------------------------------------------------
# Trial engine
# ---------------------------------------------------------------------------


class SubsetEvaluator:
    """Fits and scores class-subset models against fixed train/test sets.

    Training uses per-class sufficient statistics, so each trial costs one
    ``d x d`` Cholesky plus the test-set product. Test frames are stored
    grouped by class, then session, then time, so a subset's test set is a
    handful of contiguous blocks and the temporal filter can run on each
    block in place.
    """

    def __init__(self, train: FeatureDataset, test: FeatureDataset, lam: float = rls.DEFAULT_LAMBDA):
        check_compatible(train, test)
        missing = np.flatnonzero((class_counts(train) == 0) | (class_counts(test) == 0))
        if missing.size:
            raise InvalidArgument(f"class {int(missing[0])} is missing from the train or test set")
        self.num_classes = train.num_classes
        self.lam = float(lam)
        self.stats = rls.ClassStats(train.features, train.class_id, train.num_classes)
        codes = test.session_codes()
        order = np.lexsort((test.seq, codes, test.class_id))
        # stored transposed: one wide product per trial beats many narrow ones
        self.test_xt = np.ascontiguousarray(test.features[order].T, dtype=np.float64)
        y = test.class_id[order]
        self.bounds = np.searchsorted(y, np.arange(self.num_classes + 1))
        # a session split across classes restarts at each class block
        key = codes[order] * self.num_classes + y
        self.starts = _starts_from_codes(key)

    def run(self, subset, windows=(1,), tie_rule=kernels.TIE_SUMMED_SCORE, session_reset=True) -> list:
        """Test accuracy of the subset model, one value per window length."""
        subset = np.asarray(subset, dtype=np.int64)
        model = self.stats.fit_subset(subset, self.lam)
        all_scores = model.weights.T @ self.test_xt
        correct = np.zeros(len(windows), dtype=np.int64)
        total = 0
        for j, c in enumerate(subset):
            lo, hi = self.bounds[c], self.bounds[c + 1]
            scores = np.ascontiguousarray(all_scores[:, lo:hi].T)
            pred = np.argmax(scores, axis=1)
            total += hi - lo
            starts = None
            for k, w in enumerate(windows):
                if w == 1:
                    correct[k] += np.count_nonzero(pred == j)
                    continue
                if starts is None:
                    starts = self.starts[lo:hi] - lo if session_reset else np.zeros(hi - lo, dtype=np.int64)
                correct[k] += np.count_nonzero(kernels.window_vote(pred, scores, starts, w, tie_rule) == j)
        return [int(n) / total for n in correct]


def _starts_from_codes(codes) -> np.ndarray:
    n = codes.size
    boundary = np.ones(n, dtype=bool)
    boundary[1:] = codes[1:] != codes[:-1]
    return np.maximum.accumulate(np.where(boundary, np.arange(n), 0)).astype(np.int64)


def default_t_range(num_classes: int) -> range:
    """``2 .. T-2``; collapses to ``2 .. T`` for very small ``T``."""
    hi = num_classes - 2 if num_classes >= 4 else num_classes
    return range(2, hi + 1)


def run_trials(
    evaluator: SubsetEvaluator,
    t_values,
    num_trials: int = DEFAULT_TRIALS,
    dedupe: bool = True,
    seed: int = 0,
    windows=(1,),
    tie_rule=kernels.TIE_SUMMED_SCORE,
    session_reset: bool = True,
    workers: int = 1,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> dict:
    """``{w: {t: AccuracyDistribution}}``; every window shares the same fitted models."""
    windows = [int(w) for w in windows]
    if any(w < 1 for w in windows):
        raise InvalidArgument("window lengths must be positive")
    result = {w: {} for w in windows}
    for t in t_values:
        plan = SubsetTrialPlan(int(t), num_trials, dedupe, seed)
        subsets = sample_class_subsets(evaluator.num_classes, plan)
        accs = np.array(
            ordered_map(lambda s: evaluator.run(s, windows, tie_rule, session_reset), subsets, workers)
        )
        for j, w in enumerate(windows):
            result[w][int(t)] = AccuracyDistribution(int(t), accs[:, j], bin_width)
    return result


def subset_accuracy_distribution(
    train: FeatureDataset,
    test: FeatureDataset,
    plan: SubsetTrialPlan,
    lam: float = rls.DEFAULT_LAMBDA,
    workers: int = 1,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> AccuracyDistribution:
    """Empirical ``P(acc | t)`` for one subset size."""
    ev = SubsetEvaluator(train, test, lam)
    res = run_trials(ev, [plan.t], plan.num_trials, plan.dedupe, plan.master_seed, workers=workers, bin_width=bin_width)
    return res[1][plan.t]


def accuracy_distributions(
    train: FeatureDataset,
    test: FeatureDataset,
    t_values=None,
    num_trials: int = DEFAULT_TRIALS,
    dedupe: bool = True,
    seed: int = 0,
    lam: float = rls.DEFAULT_LAMBDA,
    workers: int = 1,
) -> dict:
    """``{t: AccuracyDistribution}`` over a range of subset sizes."""
    ev = SubsetEvaluator(train, test, lam)
    if t_values is None:
        t_values = default_t_range(train.num_classes)
    return run_trials(ev, t_values, num_trials, dedupe, seed, workers=workers)[1]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def write_distribution_csv(dists: dict, path) -> Path:
    rows = [["t", "bin_center", "mass"]]
    for t, d in sorted(dists.items()):
        rows += [[str(t), fmt(c), fmt(m)] for c, m in zip(d.bin_centers, d.bins)]
    return write_rows(path, rows)


def write_summary_csv(dists: dict, path) -> Path:
    rows = [["t", "mean", "std", "num_trials"]]
    rows += [[str(t), fmt(d.mean), fmt(d.std), str(d.num_trials)] for t, d in sorted(dists.items())]
    return write_rows(path, rows)


def write_level_curves_csv(curves, path) -> Path:
    rows = [["C", "t", "A_star"]]
    for curve in curves:
        rows += [[fmt(curve.level), str(t), fmt(a)] for t, a in curve.points.items()]
    return write_rows(path, rows)


def _pct(c: float) -> str:
    return f"{c * 100:g}%"
