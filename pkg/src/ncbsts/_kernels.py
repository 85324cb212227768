"""Hot loops for banded factorisation and triangular solves.

Band storage is column aligned (LAPACK lower form): ``ab[i - j, j] = A[i, j]``
for ``0 <= i - j <= p``.  Every kernel exists twice: an explicit-loop version
compiled by numba and a vectorised numpy version.  Both return the pivot index
of a failed factorisation (``-1`` on success) instead of raising, so the numba
path stays in nopython mode.
"""
import numpy as np

from ._jit import USE_NUMBA, njit


# --- numba kernels -----------------------------------------------------------


@njit(cache=True, nogil=True)
def _cholesky_band_nb(ab):
    p = ab.shape[0] - 1
    n = ab.shape[1]
    lb = np.zeros_like(ab)
    for j in range(n):
        s = ab[0, j]
        k0 = max(0, j - p)
        for k in range(k0, j):
            v = lb[j - k, k]
            s -= v * v
        if not s > 0.0:
            return lb, j
        ljj = np.sqrt(s)
        lb[0, j] = ljj
        for i in range(j + 1, min(n, j + p + 1)):
            t = ab[i - j, j]
            for k in range(max(0, i - p), j):
                t -= lb[i - k, k] * lb[j - k, k]
            lb[i - j, j] = t / ljj
    return lb, -1


@njit(cache=True, nogil=True)
def _forward_band_nb(lb, b):
    # solves L x = b, b is (n, m)
    p = lb.shape[0] - 1
    n, m = b.shape
    x = np.empty_like(b)
    for i in range(n):
        for c in range(m):
            t = b[i, c]
            for k in range(1, min(p, i) + 1):
                t -= lb[k, i - k] * x[i - k, c]
            x[i, c] = t / lb[0, i]
    return x


@njit(cache=True, nogil=True)
def _backward_band_nb(lb, b):
    # solves L' x = b, b is (n, m)
    p = lb.shape[0] - 1
    n, m = b.shape
    x = np.empty_like(b)
    for i in range(n - 1, -1, -1):
        for c in range(m):
            t = b[i, c]
            for k in range(1, min(p, n - 1 - i) + 1):
                t -= lb[k, i] * x[i + k, c]
            x[i, c] = t / lb[0, i]
    return x


@njit(cache=True, nogil=True)
def _band_matvec_nb(ab, lower, upper, x):
    # general banded A (LAPACK general layout ab[upper + i - j, j]) times x (n, m)
    n, m = x.shape
    out = np.zeros_like(x)
    for j in range(n):
        for i in range(max(0, j - upper), min(n, j + lower + 1)):
            a = ab[upper + i - j, j]
            for c in range(m):
                out[i, c] += a * x[j, c]
    return out


# --- numpy kernels -----------------------------------------------------------


def _cholesky_band_np(ab):
    p = ab.shape[0] - 1
    n = ab.shape[1]
    work = np.array(ab, dtype=float, copy=True)
    for j in range(n):
        d = work[0, j]
        if not d > 0.0:
            return work, j
        ljj = np.sqrt(d)
        work[0, j] = ljj
        h = min(p, n - 1 - j)
        if h == 0:
            continue
        col = work[1 : h + 1, j] / ljj
        work[1 : h + 1, j] = col
        # rank-one update of the trailing band, one diagonal at a time
        for dd in range(h):
            work[dd, j + 1 : j + 1 + h - dd] -= col[dd:] * col[: h - dd]
    # zero the unused corner of the band
    for k in range(1, p + 1):
        work[k, n - k :] = 0.0
    return work, -1


def _forward_band_np(lb, b):
    p = lb.shape[0] - 1
    n = b.shape[0]
    x = np.empty_like(b)
    for i in range(n):
        k = min(p, i)
        t = b[i]
        if k:
            # lb[r, i - r] holds L[i, i - r]
            coef = lb[np.arange(1, k + 1), i - np.arange(1, k + 1)]
            t = t - coef @ x[i - k : i][::-1]
        x[i] = t / lb[0, i]
    return x


def _backward_band_np(lb, b):
    p = lb.shape[0] - 1
    n = b.shape[0]
    x = np.empty_like(b)
    for i in range(n - 1, -1, -1):
        k = min(p, n - 1 - i)
        t = b[i]
        if k:
            t = t - lb[1 : k + 1, i] @ x[i + 1 : i + k + 1]
        x[i] = t / lb[0, i]
    return x


def _band_matvec_np(ab, lower, upper, x):
    n = x.shape[0]
    out = np.zeros_like(x)
    for d in range(-upper, lower + 1):
        # diagonal d holds A[j + d, j]
        row = upper + d
        if d >= 0:
            out[d:] += ab[row, : n - d, None] * x[: n - d]
        else:
            out[: n + d] += ab[row, -d:, None] * x[-d:]
    return out


NUMBA_KERNELS = {
    "cholesky": _cholesky_band_nb,
    "forward": _forward_band_nb,
    "backward": _backward_band_nb,
    "matvec": _band_matvec_nb,
}
NUMPY_KERNELS = {
    "cholesky": _cholesky_band_np,
    "forward": _forward_band_np,
    "backward": _backward_band_np,
    "matvec": _band_matvec_np,
}
KERNELS = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
