"""Hot inner loops, each with a numba path and a pure-numpy path.

Both paths perform the same floating-point operations in the same order, so
they agree bit for bit; ``benchmarks/bench_kernels.py`` times them against
each other. The active implementation is chosen by
:data:`recogsheet._accel.NUMBA_ENABLED`.
"""

import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

TIE_SUMMED_SCORE = 0
TIE_MOST_RECENT = 1


# ---------------------------------------------------------------------------
# Rank-one Cholesky update, upper-triangular factor: R'^T R' = R^T R + x x^T
# ---------------------------------------------------------------------------


def _chol_update_loop(R, x):
    d = R.shape[0]
    for k in range(d):
        rkk = R[k, k]
        xk = x[k]
        r = math.sqrt(rkk * rkk + xk * xk)
        c = r / rkk
        s = xk / rkk
        R[k, k] = r
        for j in range(k + 1, d):
            rkj = (R[k, j] + s * x[j]) / c
            R[k, j] = rkj
            x[j] = c * x[j] - s * rkj


def _chol_update_rows_loop(R, X):
    d = R.shape[0]
    x = np.empty(d)
    for i in range(X.shape[0]):
        for j in range(d):
            x[j] = X[i, j]
        _chol_update_jit(R, x)


def _chol_update_vec(R, x):
    d = R.shape[0]
    for k in range(d):
        rkk = R[k, k]
        xk = x[k]
        r = math.sqrt(rkk * rkk + xk * xk)
        c = r / rkk
        s = xk / rkk
        R[k, k] = r
        if k + 1 < d:
            row = (R[k, k + 1:] + s * x[k + 1:]) / c
            R[k, k + 1:] = row
            x[k + 1:] = c * x[k + 1:] - s * row


def _chol_update_rows_vec(R, X):
    for i in range(X.shape[0]):
        _chol_update_vec(R, np.array(X[i], dtype=np.float64))


# ---------------------------------------------------------------------------
# Causal sliding-window majority vote over a label stream
# ---------------------------------------------------------------------------


def _resolve_tie(counts, best, labels, scores, lo, i, tie_rule):
    # Called only when several labels share the top count.
    if tie_rule == TIE_MOST_RECENT:
        for j in range(i, lo - 1, -1):
            if counts[labels[j]] == best:
                return labels[j]
        return labels[i]
    out = -1
    out_sum = 0.0
    for c in range(counts.shape[0]):
        if counts[c] != best:
            continue
        acc = 0.0
        for j in range(lo, i + 1):
            acc += scores[j, c]
        if out < 0 or acc > out_sum:
            out = c
            out_sum = acc
    return out


def _window_vote_loop(labels, scores, starts, window, tie_rule):
    n = labels.shape[0]
    T = scores.shape[1]
    out = np.empty(n, dtype=np.int64)
    counts = np.zeros(T, dtype=np.int64)
    for i in range(n):
        if i == 0 or starts[i] != starts[i - 1]:
            counts[:] = 0
        elif i - window >= starts[i]:
            counts[labels[i - window]] -= 1
        counts[labels[i]] += 1
        lo = max(starts[i], i - window + 1)
        best = 0
        arg = 0
        ties = 0
        for c in range(T):
            if counts[c] > best:
                best = counts[c]
                arg = c
                ties = 1
            elif counts[c] == best and best > 0:
                ties += 1
        if ties > 1:
            arg = _resolve_tie_jit(counts, best, labels, scores, lo, i, tie_rule)
        out[i] = arg
    return out


def _window_vote_vec(labels, scores, starts, window, tie_rule):
    n = labels.shape[0]
    T = scores.shape[1]
    idx = np.arange(n)
    counts = np.zeros((n, T), dtype=np.int64)
    for k in range(window):
        src = idx - k
        valid = src >= starts
        np.add.at(counts, (idx[valid], labels[src[valid]]), 1)
    best = counts.max(axis=1)
    out = counts.argmax(axis=1).astype(np.int64)
    tied = np.flatnonzero((counts == best[:, None]).sum(axis=1) > 1)
    for i in tied:
        lo = max(starts[i], i - window + 1)
        out[i] = _resolve_tie(counts[i], best[i], labels, scores, lo, i, tie_rule)
    return out


if NUMBA_ENABLED:
    _chol_update_jit = njit(cache=True)(_chol_update_loop)
    _resolve_tie_jit = njit(cache=True)(_resolve_tie)
    chol_update_numba = _chol_update_jit
    chol_update_rows_numba = njit(cache=True)(_chol_update_rows_loop)
    window_vote_numba = njit(cache=True)(_window_vote_loop)
else:
    _chol_update_jit = _chol_update_loop
    _resolve_tie_jit = _resolve_tie
    chol_update_numba = None
    chol_update_rows_numba = None
    window_vote_numba = None

chol_update_numpy = _chol_update_vec
chol_update_rows_numpy = _chol_update_rows_vec
window_vote_numpy = _window_vote_vec


def chol_update(R, x):
    """In-place rank-one update of an upper Cholesky factor.

    ``R`` is overwritten with the factor of ``R.T @ R + outer(x, x)``; ``x`` is
    left untouched.
    """
    x = np.array(x, dtype=np.float64)
    if NUMBA_ENABLED:
        chol_update_numba(R, x)
    else:
        chol_update_numpy(R, x)


def chol_update_rows(R, X):
    """Apply one rank-one update per row of ``X``, in row order."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if NUMBA_ENABLED:
        chol_update_rows_numba(R, X)
    else:
        chol_update_rows_numpy(R, X)


def window_vote(labels, scores, starts, window, tie_rule=TIE_SUMMED_SCORE):
    """Modal label over the causal window ``[max(starts[i], i-window+1), i]``.

    ``starts[i]`` is the index of the first frame of frame ``i``'s session;
    frames of one session must be contiguous.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if NUMBA_ENABLED:
        return window_vote_numba(labels, scores, starts, int(window), int(tie_rule))
    return window_vote_numpy(labels, scores, starts, int(window), int(tie_rule))
