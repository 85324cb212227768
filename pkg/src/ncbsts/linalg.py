"""Banded matrices and Gaussian sampling in precision form."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._kernels import KERNELS


class InvalidDimensionError(ValueError):
    pass


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky breakdown; ``pivot`` is the zero-based index of the failing column."""

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {self.pivot})")


@dataclass(frozen=True)
class BandedMatrix:
    """Square banded matrix in LAPACK general band layout.

    ``bands[upper + i - j, j] == A[i, j]`` for ``-upper <= i - j <= lower``.
    With ``symmetric=True`` only the lower triangle is stored (``upper == 0``)
    and the upper triangle is its mirror.
    """

    dim: int
    lower_bandwidth: int
    upper_bandwidth: int
    bands: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidDimensionError("dim must be >= 1")
        if self.lower_bandwidth < 0 or self.upper_bandwidth < 0:
            raise InvalidDimensionError("bandwidths must be non-negative")
        if self.dim > 1 and max(self.lower_bandwidth, self.upper_bandwidth) >= self.dim:
            raise InvalidDimensionError("bandwidth must be smaller than dim")
        if self.symmetric and self.upper_bandwidth != 0:
            raise InvalidDimensionError("symmetric storage keeps the lower triangle only")
        expected = (self.lower_bandwidth + self.upper_bandwidth + 1, self.dim)
        if self.bands.shape != expected:
            raise InvalidDimensionError(f"bands has shape {self.bands.shape}, expected {expected}")

    @classmethod
    def from_dense(cls, a, lower, upper, symmetric=False):
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if symmetric:
            upper = 0
        ab = np.zeros((lower + upper + 1, n))
        for d in range(-upper, lower + 1):
            if d >= 0:
                ab[upper + d, : n - d] = np.diagonal(a, -d)
            else:
                ab[upper + d, -d:] = np.diagonal(a, -d)
        return cls(n, lower, upper, ab, symmetric)

    def diagonal(self, offset=0):
        """Entries ``A[j + offset, j]`` (``offset > 0`` is below the main diagonal)."""
        n = self.dim
        if self.symmetric and offset < 0:
            return self.diagonal(-offset)
        if offset > self.lower_bandwidth or -offset > self.upper_bandwidth:
            return np.zeros(n - abs(offset))
        row = self.upper_bandwidth + offset
        return self.bands[row, : n - offset] if offset >= 0 else self.bands[row, -offset:]

    def to_dense(self):
        n = self.dim
        a = np.zeros((n, n))
        for d in range(-self.upper_bandwidth, self.lower_bandwidth + 1):
            idx = np.arange(n - abs(d))
            vals = self.diagonal(d)
            if d >= 0:
                a[idx + d, idx] = vals
            else:
                a[idx, idx - d] = vals
        if self.symmetric:
            a = a + np.tril(a, -1).T
        return a

    def transpose(self):
        if self.symmetric:
            return self
        return BandedMatrix.from_dense(self.to_dense().T, self.upper_bandwidth, self.lower_bandwidth)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        vec = x.ndim == 1
        xm = np.ascontiguousarray(x.reshape(self.dim, -1))
        if self.symmetric:
            full = BandedMatrix.from_dense(self.to_dense(), self.lower_bandwidth, self.lower_bandwidth)
            out = full.matvec(xm)
        else:
            out = KERNELS["matvec"](
                np.ascontiguousarray(self.bands), self.lower_bandwidth, self.upper_bandwidth, xm
            )
        return out[:, 0] if vec else out

    def __matmul__(self, other):
        if isinstance(other, BandedMatrix):
            # product of banded matrices stays banded
            dense = self.to_dense() @ other.to_dense()
            lo = min(self.dim - 1, self.lower_bandwidth + other.lower_bandwidth)
            up = min(self.dim - 1, self.upper_bandwidth + other.upper_bandwidth)
            return BandedMatrix.from_dense(dense, lo, up)
        return self.matvec(other)


def build_first_difference(T):
    """``T x T`` first-difference operator: 1 on the diagonal, -1 just below."""
    if T < 2:
        raise InvalidDimensionError(f"first difference needs T >= 2, got {T}")
    ab = np.zeros((2, T))
    ab[0] = 1.0
    ab[1, :-1] = -1.0
    return BandedMatrix(T, 1, 0, ab)


def build_second_difference(T):
    """Square of the first-difference operator (diagonals 1, -2, 1)."""
    if T < 3:
        raise InvalidDimensionError(f"second difference needs T >= 3, got {T}")
    ab = np.zeros((3, T))
    ab[0] = 1.0
    ab[1, :-1] = -2.0
    ab[2, :-2] = 1.0
    return BandedMatrix(T, 2, 0, ab)


def _lower_storage(P):
    if P.symmetric:
        return P.bands
    if P.lower_bandwidth != P.upper_bandwidth:
        raise InvalidDimensionError("Cholesky needs a symmetric band (lower == upper)")
    return P.bands[P.upper_bandwidth :]


def banded_cholesky(P):
    """Lower Cholesky factor of a symmetric positive definite banded matrix.

    The factor keeps the bandwidth of ``P``.  Raises :class:`FactorizationError`
    with the failing pivot when ``P`` is not positive definite.
    """
    ab = np.ascontiguousarray(_lower_storage(P), dtype=float)
    lb, info = KERNELS["cholesky"](ab)
    if info >= 0:
        raise FactorizationError(info)
    return BandedMatrix(P.dim, ab.shape[0] - 1, 0, lb)


def solve_lower(L, b):
    """Solve ``L x = b`` for a banded lower-triangular ``L``."""
    b = np.asarray(b, dtype=float)
    bm = np.ascontiguousarray(b.reshape(L.dim, -1))
    x = KERNELS["forward"](np.ascontiguousarray(L.bands), bm)
    return x.reshape(b.shape)


def solve_lower_transpose(L, b):
    """Solve ``L' x = b`` for a banded lower-triangular ``L``."""
    b = np.asarray(b, dtype=float)
    bm = np.ascontiguousarray(b.reshape(L.dim, -1))
    x = KERNELS["backward"](np.ascontiguousarray(L.bands), bm)
    return x.reshape(b.shape)


@dataclass(frozen=True)
class PrecisionGaussian:
    """``N(precision^-1 shift, precision^-1)``.

    ``precision`` is a symmetric :class:`BandedMatrix` or, for systems that are
    not banded, a dense array (scipy sparse matrices are densified).
    """

    precision: object
    shift: np.ndarray

    @property
    def dim(self):
        return len(self.shift)


def _dense_cholesky(a):
    a = np.asarray(a.toarray() if hasattr(a, "toarray") else a, dtype=float)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        # locate the first failing leading minor for the error message
        for k in range(1, a.shape[0] + 1):
            try:
                np.linalg.cholesky(a[:k, :k])
            except np.linalg.LinAlgError:
                raise FactorizationError(k - 1) from None
        raise


def precision_mean(g):
    """Mean ``precision^-1 shift`` without drawing."""
    if isinstance(g.precision, BandedMatrix):
        L = banded_cholesky(g.precision)
        return solve_lower_transpose(L, solve_lower(L, g.shift))
    return scipy.linalg.cho_solve((_dense_cholesky(g.precision), True), g.shift)


def sample_precision_gaussian(g, rng, size=None):
    """Exact draw(s) from a Gaussian given in precision form.

    Factor ``precision = L L'``; the mean solves ``L L' mu = shift`` and the noise
    is ``L'^-1 z`` with ``z`` standard normal.  With ``size`` the result has shape
    ``(size, dim)`` and shares a single factorisation.
    """
    n = g.dim
    z = rng.standard_normal(n if size is None else (size, n))
    shift = np.asarray(g.shift, dtype=float)
    if isinstance(g.precision, BandedMatrix):
        L = banded_cholesky(g.precision)
        mean = solve_lower_transpose(L, solve_lower(L, shift))
        noise = solve_lower_transpose(L, z.T).T
    else:
        C = _dense_cholesky(g.precision)
        mean = scipy.linalg.cho_solve((C, True), shift)
        noise = scipy.linalg.solve_triangular(C, z.T, lower=True, trans="T").T
    return mean + noise
