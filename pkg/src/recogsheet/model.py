"""One-vs-all regularized least squares with exact rank-one updates.

The model keeps the normal equations ``(X^T X + lam I) W = X^T Y`` in factored
form: an upper Cholesky factor ``R`` with ``R^T R = X^T X + lam I`` and the
cross moment ``B = X^T Y``. Labels are encoded one-vs-all as +1 for the true
class and -1 elsewhere. There is no bias column; append a constant feature if
one is wanted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .errors import DataIOError, InvalidArgument, InvalidData

CHECKPOINT_MAGIC = b"RLS1"
_HEADER = struct.Struct("<4sIIdQ")

DEFAULT_LAMBDA = 1.0
LAMBDA_GRID = tuple(10.0 ** k for k in range(-4, 5))


@dataclass
class RlsModel:
    """Factored normal-equation state of a one-vs-all ridge classifier.

    Readers (``decision_scores``, ``predict``) never mutate the model and may
    share it across threads; ``update`` mutates in place and needs exclusive
    access.
    """

    dim: int
    num_classes: int
    lam: float
    factor: np.ndarray
    cross_moment: np.ndarray
    weights: np.ndarray
    num_seen: int = 0

    def decision_scores(self, x):
        return decision_scores(self, x)

    def predict(self, x):
        return predict(self, x)

    def update(self, x, label):
        return update(self, x, label)

    def normal_residual(self) -> float:
        """``||R^T R W - B||_inf / (1 + ||B||_inf)``."""
        lhs = self.factor.T @ (self.factor @ self.weights)
        b = np.abs(self.cross_moment).max() if self.cross_moment.size else 0.0
        return float(np.abs(lhs - self.cross_moment).max() / (1.0 + b))

    def copy(self) -> RlsModel:
        return RlsModel(
            self.dim,
            self.num_classes,
            self.lam,
            self.factor.copy(),
            self.cross_moment.copy(),
            self.weights.copy(),
            self.num_seen,
        )


def _check_params(dim, num_classes, lam):
    if int(dim) != dim or dim < 1:
        raise InvalidArgument(f"dim must be a positive integer, got {dim!r}")
    if int(num_classes) != num_classes or num_classes < 2:
        raise InvalidArgument(f"num_classes must be an integer >= 2, got {num_classes!r}")
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidArgument(f"lambda must be positive and finite, got {lam!r}")


def new_model(dim: int, num_classes: int, lam: float = DEFAULT_LAMBDA) -> RlsModel:
    """Empty model: ``R = sqrt(lam) I``, ``B = 0``, ``W = 0``."""
    _check_params(dim, num_classes, lam)
    dim, num_classes = int(dim), int(num_classes)
    return RlsModel(
        dim=dim,
        num_classes=num_classes,
        lam=float(lam),
        factor=np.sqrt(float(lam)) * np.eye(dim),
        cross_moment=np.zeros((dim, num_classes)),
        weights=np.zeros((dim, num_classes)),
        num_seen=0,
    )


def encode_labels(labels, num_classes: int) -> np.ndarray:
    """One-vs-all encoding: row i is -1 everywhere except +1 at ``labels[i]``."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InvalidArgument("labels must be one-dimensional")
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)):
        if not np.all(labels == np.round(labels)):
            raise InvalidArgument("class ids must be integers")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise InvalidArgument(f"class id {bad} outside [0, {num_classes})")
    Y = -np.ones((labels.size, num_classes))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def _as_features(features, dim=None) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise InvalidArgument(f"features must be a matrix, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise InvalidArgument(f"expected {dim} features per row, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        row = int(np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0])
        raise InvalidData(f"non-finite feature value in row {row}")
    return X


def _refresh_weights(model: RlsModel) -> None:
    z = solve_triangular(model.factor, model.cross_moment, trans="T", lower=False)
    model.weights = solve_triangular(model.factor, z, lower=False)


def fit_batch(features, labels, lam: float = DEFAULT_LAMBDA, num_classes: int | None = None) -> RlsModel:
    """Exact ridge fit ``W = (X^T X + lam I)^-1 X^T Y`` via a Cholesky factor.

    ``num_classes`` defaults to ``max(labels) + 1``.
    """
    X = _as_features(features)
    labels = np.asarray(labels)
    if X.shape[0] < 1:
        raise InvalidArgument("fit_batch needs at least one row")
    if labels.shape != (X.shape[0],):
        raise InvalidArgument(f"{X.shape[0]} feature rows but {labels.size} labels")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    _check_params(X.shape[1], num_classes, lam)
    Y = encode_labels(labels, num_classes)
    gram = X.T @ X
    gram[np.diag_indices_from(gram)] += lam
    model = RlsModel(
        dim=X.shape[1],
        num_classes=int(num_classes),
        lam=float(lam),
        factor=np.linalg.cholesky(gram).T.copy(),
        cross_moment=X.T @ Y,
        weights=np.zeros((X.shape[1], num_classes)),
        num_seen=X.shape[0],
    )
    _refresh_weights(model)
    return model


def update(model: RlsModel, x, label: int) -> RlsModel:
    """Absorb one example in place and return the model.

    Rank-one update of the factor, additive update of the cross moment, then
    two triangular solves for the weights.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument(f"update takes a single feature vector, got shape {x.shape}")
    return update_batch(model, x[None, :], [label])


def update_batch(model: RlsModel, features, labels) -> RlsModel:
    """Absorb rows one at a time, refreshing the weights once at the end.

    The resulting state equals calling :func:`update` per row, because the
    weights are a function of the factor and cross moment alone.
    """
    X = _as_features(features, model.dim)
    Y = encode_labels(labels, model.num_classes)
    if Y.shape[0] != X.shape[0]:
        raise InvalidArgument(f"{X.shape[0]} feature rows but {Y.shape[0]} labels")
    if X.shape[0] == 0:
        return model
    kernels.chol_update_rows(model.factor, X)
    model.cross_moment += X.T @ Y
    model.num_seen += X.shape[0]
    _refresh_weights(model)
    return model


def decision_scores(model: RlsModel, x) -> np.ndarray:
    """Per-class scores ``x^T W``; a matrix of row vectors gives a score matrix."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1:] != (model.dim,) or arr.ndim > 2:
        raise InvalidArgument(f"expected vectors of length {model.dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidData("non-finite feature value in query")
    return arr @ model.weights


def predict(model: RlsModel, x):
    """Argmax of the scores; ties go to the lowest class id."""
    s = decision_scores(model, x)
    if s.ndim == 1:
        return int(np.argmax(s))
    return np.argmax(s, axis=1)


class ClassStats:
    """Per-class Gram matrices and feature sums.

    Lets a model restricted to any subset of classes be fitted in
    ``O(t d^2 + d^3)`` without touching the raw rows again. With +-1 encoding,
    column ``j`` of ``X^T Y`` over a subset ``S`` is ``2 s_j - sum_{c in S} s_c``.
    """

    def __init__(self, features, labels, num_classes: int):
        X = _as_features(features)
        labels = np.asarray(labels, dtype=np.int64)
        d = X.shape[1]
        self.dim = d
        self.num_classes = int(num_classes)
        self.grams = np.zeros((num_classes, d, d))
        self.sums = np.zeros((num_classes, d))
        self.counts = np.zeros(num_classes, dtype=np.int64)
        for c in range(num_classes):
            Xc = X[labels == c]
            self.grams[c] = Xc.T @ Xc
            self.sums[c] = Xc.sum(axis=0)
            self.counts[c] = Xc.shape[0]

    def fit_subset(self, classes, lam: float = DEFAULT_LAMBDA) -> RlsModel:
        """Model over ``classes`` re-indexed densely in the given order."""
        classes = np.asarray(classes, dtype=np.int64)
        _check_params(self.dim, classes.size, lam)
        gram = self.grams[classes].sum(axis=0)
        gram[np.diag_indices_from(gram)] += lam
        total = self.sums[classes].sum(axis=0)
        B = 2.0 * self.sums[classes].T - total[:, None]
        model = RlsModel(
            dim=self.dim,
            num_classes=int(classes.size),
            lam=float(lam),
            factor=np.linalg.cholesky(gram).T.copy(),
            cross_moment=B,
            weights=np.zeros_like(B),
            num_seen=int(self.counts[classes].sum()),
        )
        _refresh_weights(model)
        return model


def select_lambda(features, labels, num_classes=None, grid=LAMBDA_GRID, folds: int = 5, seed: int = 0) -> float:
    """k-fold grid search over ``lam`` by held-out accuracy. Never called implicitly."""
    X = _as_features(features)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    if folds < 2 or folds > X.shape[0]:
        raise InvalidArgument(f"folds must be in [2, {X.shape[0]}], got {folds}")
    order = np.random.default_rng(seed).permutation(X.shape[0])
    parts = np.array_split(order, folds)
    best_lam, best_acc = None, -1.0
    for lam in grid:
        correct = 0
        for k in range(folds):
            held = parts[k]
            kept = np.concatenate([parts[j] for j in range(folds) if j != k])
            m = fit_batch(X[kept], labels[kept], lam, num_classes)
            correct += int(np.sum(predict(m, X[held]) == labels[held]))
        acc = correct / X.shape[0]
        if acc > best_acc:
            best_lam, best_acc = float(lam), acc
    return best_lam


def save_checkpoint(model: RlsModel, path) -> Path:
    """Write the binary ``RLS1`` checkpoint; see FORMATS.md."""
    path = Path(path)
    header = _HEADER.pack(CHECKPOINT_MAGIC, model.dim, model.num_classes, model.lam, model.num_seen)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            for arr in (model.factor, model.cross_moment, model.weights):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    except OSError as exc:
        raise DataIOError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> RlsModel:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise InvalidData(f"{path}: truncated checkpoint header")
    magic, d, T, lam, seen = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise InvalidData(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    expected = _HEADER.size + 8 * (d * d + 2 * d * T)
    if len(raw) != expected:
        raise InvalidData(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    factor = body[: d * d].reshape(d, d).copy()
    cross = body[d * d: d * d + d * T].reshape(d, T).copy()
    weights = body[d * d + d * T:].reshape(d, T).copy()
    return RlsModel(d, T, lam, factor, cross, weights, seen)
