"""Dense row-major matrix kernels with deterministic parallelism.

A "matrix" throughout this package is a 2-D C-contiguous float64
``numpy.ndarray``: ``rows, cols = m.shape`` and the underlying buffer is the
row-major value sequence of length ``rows * cols``.

The kernels fan work out over fixed-size blocks of output rows.  Every output
element is produced by exactly one task using a left-to-right summation over
the shared dimension, so results are bitwise identical to a naive triple loop
and independent of the active thread count.  Compiled without fastmath: the
compiler may not reassociate or fuse the accumulation.
"""

import os

# Raise the numba thread cap before the first numba import so callers may ask
# for more threads than cores (results do not depend on the thread count).
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))

import numba
import numpy as np
from numba import njit, prange

from .errors import ShapeError

# Output rows per parallel task; tuning constant, not part of any contract.
ROW_BLOCK = 64


def set_threads(n: int) -> None:
    """Cap kernel parallelism at n threads. Never changes numerical results."""
    numba.set_num_threads(n)


def get_threads() -> int:
    return numba.get_num_threads()


def max_threads() -> int:
    return numba.config.NUMBA_NUM_THREADS


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate/coerce m to a 2-D C-contiguous float64 array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {a.shape}")
    return np.ascontiguousarray(a)


def transpose(m: np.ndarray) -> np.ndarray:
    """Materialized row-major transpose."""
    return np.ascontiguousarray(as_matrix(m).T)


@njit(cache=True, parallel=True)
def _matmul_tn_kernel(a, b, out):  # pragma: no cover - exercised via matmul_tn
    k, m = a.shape
    n = b.shape[1]
    nblocks = (m + ROW_BLOCK - 1) // ROW_BLOCK
    for ib in prange(nblocks):
        i0 = ib * ROW_BLOCK
        i1 = min(i0 + ROW_BLOCK, m)
        for i in range(i0, i1):
            for j in range(n):
                acc = 0.0
                for t in range(k):
                    acc += a[t, i] * b[t, j]
                out[i, j] = acc


@njit(cache=True, parallel=True)
def _matmul_nt_kernel(a, b, out):  # pragma: no cover
    m, k = a.shape
    n = b.shape[0]
    nblocks = (m + ROW_BLOCK - 1) // ROW_BLOCK
    for ib in prange(nblocks):
        i0 = ib * ROW_BLOCK
        i1 = min(i0 + ROW_BLOCK, m)
        for i in range(i0, i1):
            for j in range(n):
                acc = 0.0
                for t in range(k):
                    acc += a[i, t] * b[j, t]
                out[i, j] = acc


@njit(cache=True, parallel=True)
def _sigmoid_kernel(m, out):  # pragma: no cover
    rows, cols = m.shape
    nblocks = (rows + ROW_BLOCK - 1) // ROW_BLOCK
    for ib in prange(nblocks):
        i0 = ib * ROW_BLOCK
        i1 = min(i0 + ROW_BLOCK, rows)
        for i in range(i0, i1):
            for j in range(cols):
                x = m[i, j]
                # Complement form keeps sig(x) + sig(-x) == 1 exactly and
                # saturates cleanly instead of overflowing.
                if x >= 0.0:
                    e = np.exp(-x)
                    out[i, j] = 1.0 - e / (1.0 + e)
                else:
                    e = np.exp(x)
                    out[i, j] = e / (1.0 + e)


def matmul_tn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Transpose(a) @ b without materializing the transpose.

    a is [k x m], b is [k x n]; the result is [m x n] with
    out[i, j] = sum over t of a[t, i] * b[t, j], summed left to right.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul_tn needs a.rows == b.rows, got {a.shape} and {b.shape}")
    out = np.empty((a.shape[1], b.shape[1]), dtype=np.float64)
    _matmul_tn_kernel(a, b, out)
    return out


def matmul_nt(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ transpose(b) without materializing the transpose.

    a is [m x k], b is [n x k]; the result is [m x n] with
    out[i, j] = sum over t of a[i, t] * b[j, t], summed left to right.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"matmul_nt needs a.cols == b.cols, got {a.shape} and {b.shape}")
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    _matmul_nt_kernel(a, b, out)
    return out


def axpy_inplace(target: np.ndarray, scale: float, source: np.ndarray) -> None:
    """target += scale * source, elementwise. Requires exclusive access to target."""
    if target.shape != source.shape:
        raise ShapeError(f"axpy_inplace needs equal shapes, got {target.shape} and {source.shape}")
    target += scale * source


def map_sigmoid(m: np.ndarray) -> np.ndarray:
    """Elementwise logistic sigmoid 1 / (1 + exp(-x)); stable for any finite input."""
    m = as_matrix(m)
    out = np.empty_like(m)
    _sigmoid_kernel(m, out)
    return out


def warmup() -> None:
    """Force JIT compilation of all kernels (first call per process is slow)."""
    a = np.ones((2, 2))
    matmul_tn(a, a)
    matmul_nt(a, a)
    map_sigmoid(a)
