"""SpMV kernels computing ``y <- alpha * A @ x + beta * y``.

Every kernel updates ``y`` in place and returns it.  With ``beta == 0`` the
incoming ``y`` is never read, so it may hold garbage; with ``alpha == 0`` the
matrix is never touched.

Row-parallel kernels (``csr_classical``, ``ell``, ``sell``) give each worker
a disjoint block of rows.  Nonzero-parallel kernels (``csr_balanced``,
``coo_balanced``) split the stored entries into equal chunks; rows that
straddle a chunk boundary receive partial sums that are merged afterwards in
chunk order, so results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from ._parallel import even_splits, pmap
from .formats import (
    CooMatrix,
    CsrMatrix,
    EllMatrix,
    HybridMatrix,
    Percentile,
    RowStats,
    SellMatrix,
    SplitStrategy,
    csr_to_coo,
    csr_to_ell,
    csr_to_hybrid,
    csr_to_sell,
    row_nnz_stats,
)


class KernelId(str, Enum):
    coo_balanced = "coo_balanced"
    csr_classical = "csr_classical"
    csr_balanced = "csr_balanced"
    csr_auto = "csr_auto"
    ell = "ell"
    sell = "sell"
    hybrid = "hybrid"

    def __str__(self):
        return self.value


ALL_KERNELS = tuple(KernelId)


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ApplyCoeffs:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"coefficients must be finite, got alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class SpmvConfig:
    workers: int = 1
    over_decomposition: int = 4
    # csr_auto thresholds
    cov_threshold: float = 1.0
    imbalance_factor: float = 4.0
    rows_per_worker: int = 4
    # format parameters
    slice_size: int = 32
    ell_max_blowup: float = 8.0
    hybrid_strategy: SplitStrategy = field(default_factory=Percentile)

    @property
    def num_chunks(self) -> int:
        return max(self.workers, 1) * max(self.over_decomposition, 1)


DEFAULT_CONFIG = SpmvConfig()


def flop_count(nnz: int, num_rows: int, beta: float = 0.0) -> int:
    """Flops of one apply: a multiply-add per entry, plus the ``beta`` update."""
    return 2 * nnz + (3 * num_rows if beta != 0 else 0)


def partition_nonzeros(nnz: int, num_chunks: int) -> list[int]:
    """Chunk boundaries over ``nnz`` entries; chunk sizes differ by at most 1."""
    return even_splits(nnz, min(num_chunks, max(nnz, 1)))


# -- shared pieces ------------------------------------------------------------

def _prepare(shape, x, y):
    nrows, ncols = shape
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (ncols,):
        raise DimensionError(f"x has shape {x.shape}, expected ({ncols},)")
    if y is None:
        y = np.zeros(nrows)
    elif not isinstance(y, np.ndarray) or y.dtype != np.float64:
        raise DimensionError("y must be a float64 numpy array (it is updated in place)")
    if y.shape != (nrows,):
        raise DimensionError(f"y has shape {y.shape}, expected ({nrows},)")
    return x, y


def _scale_only(y: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0.0:
        y.fill(0.0)
    elif beta != 1.0:
        y *= beta
    return y


def _finish(y: np.ndarray, acc: np.ndarray, coeffs: ApplyCoeffs) -> np.ndarray:
    a, b = coeffs.alpha, coeffs.beta
    if b == 0.0:
        if a == 1.0:
            np.copyto(y, acc)
        else:
            np.multiply(acc, a, out=y)
    else:
        if b != 1.0:
            y *= b
        if a != 1.0:
            acc *= a
        y += acc
    return y


def _segment_sums(prod: np.ndarray, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    out = np.zeros(len(starts))
    nz = lengths > 0
    if nz.any():
        out[nz] = np.add.reduceat(prod, starts[nz])
    return out


def _merge(acc: np.ndarray, partials) -> None:
    # boundary partial sums, folded in chunk order
    for rows, sums in partials:
        for r, s in zip(rows, sums):
            acc[r] += s


# -- CSR ----------------------------------------------------------------------

def _csr_rows(A: CsrMatrix, x: np.ndarray, acc: np.ndarray, r0: int, r1: int) -> None:
    lo, hi = A.row_ptr[r0], A.row_ptr[r1]
    if hi == lo:
        return
    prod = A.values[lo:hi] * x[A.col_idx[lo:hi]]
    starts = A.row_ptr[r0:r1] - lo
    acc[r0:r1] = _segment_sums(prod, starts, np.diff(A.row_ptr[r0 : r1 + 1]))


def spmv_csr_classical(A: CsrMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
                       config: SpmvConfig = DEFAULT_CONFIG):
    """One worker per block of rows; no two workers write the same output."""
    x, y = _prepare(A.shape, x, y)
    if coeffs.alpha == 0.0:
        return _scale_only(y, coeffs.beta)
    acc = np.zeros(A.dims.num_rows)
    bounds = even_splits(A.dims.num_rows, config.workers)
    pmap(lambda k: _csr_rows(A, x, acc, bounds[k], bounds[k + 1]), range(len(bounds) - 1), config.workers)
    return _finish(y, acc, coeffs)


def _csr_chunk(A: CsrMatrix, x, acc, lo: int, hi: int):
    rp = A.row_ptr
    r0 = int(np.searchsorted(rp, lo, side="right")) - 1
    r1 = int(np.searchsorted(rp, hi - 1, side="right")) - 1
    prod = A.values[lo:hi] * x[A.col_idx[lo:hi]]
    starts = np.maximum(rp[r0 : r1 + 1], lo) - lo
    ends = np.minimum(rp[r0 + 1 : r1 + 2], hi) - lo
    sums = _segment_sums(prod, starts, ends - starts)
    if r1 - r0 > 1:
        acc[r0 + 1 : r1] = sums[1:-1]
    if r1 == r0:
        return [r0], sums[:1]
    return [r0, r1], sums[[0, -1]]


def spmv_csr_balanced(A: CsrMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
                      config: SpmvConfig = DEFAULT_CONFIG):
    """Equal nonzero chunks; rows split across chunks are merged by addition."""
    x, y = _prepare(A.shape, x, y)
    if coeffs.alpha == 0.0:
        return _scale_only(y, coeffs.beta)
    acc = np.zeros(A.dims.num_rows)
    if A.nnz:
        b = partition_nonzeros(A.nnz, config.num_chunks)
        partials = pmap(lambda k: _csr_chunk(A, x, acc, b[k], b[k + 1]), range(len(b) - 1), config.workers)
        _merge(acc, partials)
    return _finish(y, acc, coeffs)


def select_csr_strategy(stats: RowStats, worker_count: int = 1, config: SpmvConfig = DEFAULT_CONFIG) -> KernelId:
    """Pick the row-parallel kernel for regular patterns, otherwise the
    nonzero-balanced one."""
    w = max(worker_count, 1)
    if stats.cov > config.cov_threshold:
        return KernelId.csr_balanced
    if stats.max_row_nnz > config.imbalance_factor * stats.mean * w:
        return KernelId.csr_balanced
    if stats.num_rows < config.rows_per_worker * w:
        return KernelId.csr_balanced
    return KernelId.csr_classical


def spmv_csr_auto(A: CsrMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
                  config: SpmvConfig = DEFAULT_CONFIG, stats: Optional[RowStats] = None):
    if A.dims.num_rows == 0:
        x, y = _prepare(A.shape, x, y)
        return y
    choice = select_csr_strategy(stats or row_nnz_stats(A), config.workers, config)
    kernel = spmv_csr_balanced if choice is KernelId.csr_balanced else spmv_csr_classical
    return kernel(A, x, y, coeffs, config)


def spmv_csr_transposed(A: CsrMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
                        config: SpmvConfig = DEFAULT_CONFIG):
    """``y <- alpha * A.T @ x + beta * y`` without forming the transpose."""
    x, y = _prepare(A.shape[::-1], x, y)
    if coeffs.alpha == 0.0:
        return _scale_only(y, coeffs.beta)
    weights = A.values * x[A.row_of_entry()]
    acc = np.bincount(A.col_idx, weights=weights, minlength=A.dims.num_cols).astype(np.float64)
    return _finish(y, acc, coeffs)


# -- COO ----------------------------------------------------------------------

def _coo_chunk(A: CooMatrix, x, acc, lo: int, hi: int):
    rows = A.row_idx[lo:hi]
    prod = A.values[lo:hi] * x[A.col_idx[lo:hi]]
    starts = np.flatnonzero(np.diff(rows)) + 1
    starts = np.concatenate([[0], starts])
    sums = np.add.reduceat(prod, starts)
    urows = rows[starts]
    if len(urows) > 2:
        acc[urows[1:-1]] = sums[1:-1]
    if len(urows) == 1:
        return urows[:1], sums[:1]
    return urows[[0, -1]], sums[[0, -1]]


def spmv_coo_balanced(A: CooMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
                      config: SpmvConfig = DEFAULT_CONFIG):
    x, y = _prepare(A.shape, x, y)
    if coeffs.alpha == 0.0:
        return _scale_only(y, coeffs.beta)
    acc = np.zeros(A.dims.num_rows)
    if A.nnz:
        b = partition_nonzeros(A.nnz, config.num_chunks)
        partials = pmap(lambda k: _coo_chunk(A, x, acc, b[k], b[k + 1]), range(len(b) - 1), config.workers)
        _merge(acc, partials)
    return _finish(y, acc, coeffs)


# -- ELL / SELL ---------------------------------------------------------------

def _ell_rows(A: EllMatrix, x, acc, r0: int, r1: int) -> None:
    cols = A.slot_matrix(A.col_idx)
    vals = A.slot_matrix(A.values)
    part = acc[r0:r1]
    for j in range(A.width):
        part += vals[j, r0:r1] * x[cols[j, r0:r1]]


def spmv_ell(A: EllMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
             config: SpmvConfig = DEFAULT_CONFIG):
    """Width-major sweep over the padded slots; pad values are zero."""
    x, y = _prepare(A.shape, x, y)
    if coeffs.alpha == 0.0:
        return _scale_only(y, coeffs.beta)
    acc = np.zeros(A.dims.num_rows)
    bounds = even_splits(A.dims.num_rows, config.workers)
    pmap(lambda k: _ell_rows(A, x, acc, bounds[k], bounds[k + 1]), range(len(bounds) - 1), config.workers)
    return _finish(y, acc, coeffs)


def _sell_slices(A: SellMatrix, x, acc, s0: int, s1: int) -> None:
    size = A.slice_size
    n = A.dims.num_rows
    widths = A.slice_widths[s0:s1]
    for w in np.unique(widths):
        if w == 0:
            continue
        sl = s0 + np.flatnonzero(widths == w)
        idx = A.slice_ptr[sl][:, None] + np.arange(w * size)
        vals = A.values[idx].reshape(len(sl), w, size)
        cols = A.col_idx[idx].reshape(len(sl), w, size)
        sums = np.zeros((len(sl), size))
        for j in range(w):
            sums += vals[:, j, :] * x[cols[:, j, :]]
        rows = (sl[:, None] * size + np.arange(size)).ravel()
        keep = rows < n
        acc[rows[keep]] = sums.ravel()[keep]


def spmv_sell(A: SellMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
              config: SpmvConfig = DEFAULT_CONFIG):
    """Each slice is an independent small ELL block with its own width."""
    x, y = _prepare(A.shape, x, y)
    if coeffs.alpha == 0.0:
        return _scale_only(y, coeffs.beta)
    acc = np.zeros(A.dims.num_rows)
    bounds = even_splits(A.num_slices, config.workers)
    pmap(lambda k: _sell_slices(A, x, acc, bounds[k], bounds[k + 1]), range(len(bounds) - 1), config.workers)
    return _finish(y, acc, coeffs)


def spmv_hybrid(A: HybridMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
                config: SpmvConfig = DEFAULT_CONFIG):
    """ELL kernel on the regular part, then COO on the overflow with beta=1."""
    x, y = _prepare(A.shape, x, y)
    if coeffs.alpha == 0.0:
        return _scale_only(y, coeffs.beta)
    spmv_ell(A.ell_part, x, y, coeffs, config)
    if A.coo_part.nnz:
        spmv_coo_balanced(A.coo_part, x, y, ApplyCoeffs(coeffs.alpha, 1.0), config)
    return y


KERNELS: dict[KernelId, Callable] = {
    KernelId.coo_balanced: spmv_coo_balanced,
    KernelId.csr_classical: spmv_csr_classical,
    KernelId.csr_balanced: spmv_csr_balanced,
    KernelId.csr_auto: spmv_csr_auto,
    KernelId.ell: spmv_ell,
    KernelId.sell: spmv_sell,
    KernelId.hybrid: spmv_hybrid,
}


def convert_for(kernel: KernelId, A: CsrMatrix, config: SpmvConfig = DEFAULT_CONFIG):
    """Storage format a kernel consumes, converted from CSR.

    May raise :class:`~sparsebench.formats.EllBlowupError` for ``ell``.
    """
    kernel = KernelId(kernel)
    if kernel is KernelId.coo_balanced:
        return csr_to_coo(A)
    if kernel is KernelId.ell:
        return csr_to_ell(A, config.ell_max_blowup)
    if kernel is KernelId.sell:
        return csr_to_sell(A, config.slice_size)
    if kernel is KernelId.hybrid:
        return csr_to_hybrid(A, config.hybrid_strategy)
    return A


class SpmvOperator:
    """A CSR matrix bound to one kernel, converted once up front.

    >>> from sparsebench.ingest import gen_laplacian_2d
    >>> op = SpmvOperator(gen_laplacian_2d(2), "ell")
    >>> op.matvec(np.ones(4)).tolist()
    [2.0, 2.0, 2.0, 2.0]
    """

    def __init__(self, A: CsrMatrix, kernel=KernelId.csr_auto, config: SpmvConfig = DEFAULT_CONFIG):
        self.csr = A
        self.kernel = KernelId(kernel)
        self.config = config
        self.matrix = convert_for(self.kernel, A, config)
        self.resolved = self.kernel
        if self.kernel is KernelId.csr_auto:
            self.resolved = (
                select_csr_strategy(row_nnz_stats(A), config.workers, config)
                if A.dims.num_rows
                else KernelId.csr_classical
            )
        self._fn = KERNELS[self.resolved]

    @property
    def shape(self):
        return self.csr.shape

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def apply(self, x, y=None, alpha: float = 1.0, beta: float = 0.0):
        return self._fn(self.matrix, x, y, ApplyCoeffs(alpha, beta), self.config)

    def matvec(self, x):
        return self.apply(x)

    def rmatvec(self, x, y=None, alpha: float = 1.0, beta: float = 0.0):
        return spmv_csr_transposed(self.csr, x, y, ApplyCoeffs(alpha, beta), self.config)

    def flops(self, beta: float = 0.0) -> int:
        return flop_count(self.nnz, self.csr.dims.num_rows, beta)


def spmv(kernel, A: CsrMatrix, x, y=None, coeffs: ApplyCoeffs = ApplyCoeffs(),
         config: SpmvConfig = DEFAULT_CONFIG):
    """Convert ``A`` for ``kernel`` and apply it once."""
    return SpmvOperator(A, kernel, config).apply(x, y, coeffs.alpha, coeffs.beta)
