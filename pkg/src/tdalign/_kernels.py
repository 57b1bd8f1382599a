"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``TDALIGN_DISABLE_NUMBA=1`` (or run without numba installed) to use the
numpy implementations.  Both paths are kept importable as ``numba_*`` and
``numpy_*`` so tests and the benchmark can compare them directly.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    HAS_NUMBA = False


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAS_NUMBA and not _flag("TDALIGN_DISABLE_NUMBA")


# ---------------------------------------------------------------------------
# moving average with replicate padding, along axis 1 of a (B, L, N) array


def numpy_moving_average(x, kernel):
    half = (kernel - 1) // 2
    if half == 0:
        return x.copy()
    padded = np.concatenate(
        [np.repeat(x[:, :1], half, axis=1), x, np.repeat(x[:, -1:], half, axis=1)],
        axis=1,
    )
    csum = np.cumsum(padded, axis=1)
    csum = np.concatenate([np.zeros_like(csum[:, :1]), csum], axis=1)
    return (csum[:, kernel:] - csum[:, :-kernel]) / kernel


def _numba_moving_average_py(x, kernel):
    B, L, N = x.shape
    half = (kernel - 1) // 2
    out = np.empty_like(x)
    for b in range(B):
        for n in range(N):
            # running window over clamped indices
            acc = 0.0
            for j in range(-half, half + 1):
                idx = min(max(j, 0), L - 1)
                acc += x[b, idx, n]
            out[b, 0, n] = acc / kernel
            for i in range(1, L):
                add = min(i + half, L - 1)
                drop = min(max(i - half - 1, 0), L - 1)
                acc += x[b, add, n] - x[b, drop, n]
                out[b, i, n] = acc / kernel
    return out


# ---------------------------------------------------------------------------
# fused first-difference loss terms (order 1, interval 1)
#
# Returns the *sums* (not means) of the point error, the difference error and
# the sign mismatch count, plus the gradients of the two sums w.r.t. yhat.


def _sign_py(v):
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


def numpy_first_diff_terms(y, yhat, anchor, mse):
    d = np.diff(y, axis=1, prepend=anchor[:, None, :])
    dhat = np.diff(yhat, axis=1, prepend=anchor[:, None, :])
    err = yhat - y
    derr = dhat - d
    if mse:
        ly = np.sum(err * err)
        ld = np.sum(derr * derr)
        gy = 2.0 * err
        gd_local = 2.0 * derr
    else:
        ly = np.sum(np.abs(err))
        ld = np.sum(np.abs(derr))
        gy = np.sign(err)
        gd_local = np.sign(derr)
    gd = gd_local.copy()
    gd[:, :-1] -= gd_local[:, 1:]
    mismatches = int(np.count_nonzero(np.sign(d) != np.sign(dhat)))
    return ly, ld, mismatches, gy, gd


def _numba_first_diff_terms_py(y, yhat, anchor, mse):
    B, H, N = y.shape
    gy = np.empty_like(y)
    gd = np.empty_like(y)
    ly = 0.0
    ld = 0.0
    mismatches = 0
    for b in range(B):
        for n in range(N):
            next_g = 0.0
            # walk backwards so the adjoint term of step i+1 is already known
            for i in range(H - 1, -1, -1):
                if i > 0:
                    prev_y = y[b, i - 1, n]
                    prev_p = yhat[b, i - 1, n]
                else:
                    prev_y = anchor[b, n]
                    prev_p = anchor[b, n]
                d = y[b, i, n] - prev_y
                dh = yhat[b, i, n] - prev_p
                e = yhat[b, i, n] - y[b, i, n]
                de = dh - d
                if mse:
                    ly += e * e
                    ld += de * de
                    gy[b, i, n] = 2.0 * e
                    g = 2.0 * de
                else:
                    ly += abs(e)
                    ld += abs(de)
                    gy[b, i, n] = _sign(e)
                    g = _sign(de)
                gd[b, i, n] = g - next_g
                next_g = g
                if _sign(d) != _sign(dh):
                    mismatches += 1
    return ly, ld, mismatches, gy, gd


# ---------------------------------------------------------------------------
# sign mismatch count between two equally shaped arrays


def numpy_sign_mismatches(d, dhat):
    return int(np.count_nonzero(np.sign(d) != np.sign(dhat)))


def _numba_sign_mismatches_py(d, dhat):
    flat_d = d.ravel()
    flat_h = dhat.ravel()
    count = 0
    for i in range(flat_d.size):
        a = flat_d[i]
        c = flat_h[i]
        if _sign(a) != _sign(c):
            count += 1
    return count


if HAS_NUMBA:
    _sign = njit(cache=True, inline="always")(_sign_py)
    numba_moving_average = njit(cache=True)(_numba_moving_average_py)
    numba_first_diff_terms = njit(cache=True)(_numba_first_diff_terms_py)
    numba_sign_mismatches = njit(cache=True)(_numba_sign_mismatches_py)
else:  # pragma: no cover
    _sign = _sign_py
    numba_moving_average = _numba_moving_average_py
    numba_first_diff_terms = _numba_first_diff_terms_py
    numba_sign_mismatches = _numba_sign_mismatches_py


def moving_average(x, kernel):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return numba_moving_average(x, kernel)
    return numpy_moving_average(x, kernel)


def first_diff_terms(y, yhat, anchor, mse):
    if USE_NUMBA:
        ly, ld, mm, gy, gd = numba_first_diff_terms(
            np.ascontiguousarray(y, dtype=np.float64),
            np.ascontiguousarray(yhat, dtype=np.float64),
            np.ascontiguousarray(anchor, dtype=np.float64),
            bool(mse),
        )
        return float(ly), float(ld), int(mm), gy, gd
    ly, ld, mm, gy, gd = numpy_first_diff_terms(y, yhat, anchor, mse)
    return float(ly), float(ld), mm, gy, gd


def sign_mismatches(d, dhat):
    if USE_NUMBA:
        return int(
            numba_sign_mismatches(
                np.ascontiguousarray(d, dtype=np.float64),
                np.ascontiguousarray(dhat, dtype=np.float64),
            )
        )
    return numpy_sign_mismatches(d, dhat)


def backend():
    return "numba" if USE_NUMBA else "numpy"
