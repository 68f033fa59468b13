"""Sparse storage formats: COO, CSR, ELL, sliced ELL and hybrid ELL+COO.

All matrices are immutable containers of numpy arrays.  Index arrays use
``int64`` and values ``float64``.  Conversions are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

INDEX_DTYPE = np.int64
VALUE_DTYPE = np.float64

DEFAULT_MAX_BLOWUP = 8.0
DEFAULT_HYBRID_PERCENTILE = 80.0


class FormatError(ValueError):
    """Raised when a matrix cannot be constructed or converted."""


class EllBlowupError(FormatError):
    """ELL padding would exceed the allowed storage blowup."""

    def __init__(self, storage: int, nnz: int, max_blowup: float):
        self.storage = storage
        self.nnz = nnz
        self.max_blowup = max_blowup
        super().__init__(
            f"ELL storage of {storage} slots exceeds {max_blowup:g} x nnz ({nnz})"
        )


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True, order="C").ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dims:
    num_rows: int
    num_cols: int
    nnz: int

    def __post_init__(self):
        if self.num_rows < 0 or self.num_cols < 0:
            raise FormatError(f"negative dimensions {self.num_rows}x{self.num_cols}")
        if self.nnz < 0 or self.nnz > self.num_rows * self.num_cols:
            raise FormatError(
                f"nnz={self.nnz} impossible for a {self.num_rows}x{self.num_cols} matrix"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_rows, self.num_cols)


@dataclass(frozen=True, eq=False)
class CooMatrix:
    dims: Dims
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_idx", _frozen(self.row_idx, INDEX_DTYPE))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, INDEX_DTYPE))
        object.__setattr__(self, "values", _frozen(self.values, VALUE_DTYPE))

    @property
    def shape(self):
        return self.dims.shape

    @property
    def nnz(self) -> int:
        return self.dims.nnz

    def validate(self) -> None:
        n = self.nnz
        if not (len(self.row_idx) == len(self.col_idx) == len(self.values) == n):
            raise FormatError("COO arrays must all have length nnz")
        if n == 0:
            return
        _check_bounds(self.row_idx, self.dims.num_rows, "row")
        _check_bounds(self.col_idx, self.dims.num_cols, "column")
        key = self.row_idx * max(self.dims.num_cols, 1) + self.col_idx
        if np.any(np.diff(key) <= 0):
            raise FormatError("COO entries must be sorted by (row, col) without duplicates")

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.row_idx, self.col_idx), self.values)
        return out

    def triplets(self) -> list[tuple[int, int, float]]:
        return list(zip(self.row_idx.tolist(), self.col_idx.tolist(), self.values.tolist()))

    def __eq__(self, other):
        if not isinstance(other, CooMatrix):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.row_idx, other.row_idx)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values.view(np.int64), other.values.view(np.int64))
        )


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    dims: Dims
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", _frozen(self.row_ptr, INDEX_DTYPE))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, INDEX_DTYPE))
        object.__setattr__(self, "values", _frozen(self.values, VALUE_DTYPE))

    @property
    def shape(self):
        return self.dims.shape

    @property
    def nnz(self) -> int:
        return self.dims.nnz

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def validate(self) -> None:
        rp = self.row_ptr
        if len(rp) != self.dims.num_rows + 1:
            raise FormatError("row_ptr must have num_rows + 1 entries")
        if rp[0] != 0 or rp[-1] != self.nnz:
            raise FormatError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(rp) < 0):
            raise FormatError("row_ptr must be non-decreasing")
        if len(self.col_idx) != self.nnz or len(self.values) != self.nnz:
            raise FormatError("col_idx and values must have length nnz")
        if self.nnz == 0:
            return
        _check_bounds(self.col_idx, self.dims.num_cols, "column")
        # strictly increasing columns inside each row
        step = np.diff(self.col_idx)
        row_start = np.zeros(self.nnz, dtype=bool)
        row_start[rp[:-1][rp[:-1] < self.nnz]] = True
        if np.any((step <= 0) & ~row_start[1:]):
            raise FormatError("column indices must be strictly increasing within a row")

    def row_of_entry(self) -> np.ndarray:
        """Expanded row index of every stored entry."""
        return np.repeat(np.arange(self.dims.num_rows, dtype=INDEX_DTYPE), self.row_lengths())

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_of_entry(), self.col_idx] = self.values
        return out


@dataclass(frozen=True, eq=False)
class EllMatrix:
    """Padded rows, column-major: slot ``j`` of row ``i`` sits at ``j*num_rows + i``."""

    dims: Dims
    width: int
    col_idx: np.ndarray
    values: np.ndarray
    row_nnz: np.ndarray  # real entries per row; the rest of each row is padding

    def __post_init__(self):
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, INDEX_DTYPE))
        object.__setattr__(self, "values", _frozen(self.values, VALUE_DTYPE))
        object.__setattr__(self, "row_nnz", _frozen(self.row_nnz, INDEX_DTYPE))

    @property
    def shape(self):
        return self.dims.shape

    @property
    def nnz(self) -> int:
        return self.dims.nnz

    @property
    def storage(self) -> int:
        return self.dims.num_rows * self.width

    @property
    def padding(self) -> int:
        return self.storage - self.nnz

    def slot_matrix(self, arr: np.ndarray) -> np.ndarray:
        """View a slot array as ``(width, num_rows)``."""
        return arr.reshape(self.width, self.dims.num_rows)


@dataclass(frozen=True, eq=False)
class SellMatrix:
    """Sliced ELL.

    Rows are grouped into slices of ``slice_size`` rows.  Slice ``s`` occupies
    ``[slice_ptr[s], slice_ptr[s+1])`` of the packed arrays, stored
    column-major as ``(width_s, slice_size)``.  The last slice is padded with
    phantom rows so every slice has exactly ``slice_size`` rows.
    """

    dims: Dims
    slice_size: int
    slice_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    row_nnz: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "slice_ptr", _frozen(self.slice_ptr, INDEX_DTYPE))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, INDEX_DTYPE))
        object.__setattr__(self, "values", _frozen(self.values, VALUE_DTYPE))
        object.__setattr__(self, "row_nnz", _frozen(self.row_nnz, INDEX_DTYPE))

    @property
    def shape(self):
        return self.dims.shape

    @property
    def nnz(self) -> int:
        return self.dims.nnz

    @property
    def num_slices(self) -> int:
        return len(self.slice_ptr) - 1

    @property
    def slice_widths(self) -> np.ndarray:
        return np.diff(self.slice_ptr) // self.slice_size

    @property
    def storage(self) -> int:
        return int(self.slice_ptr[-1])


@dataclass(frozen=True, eq=False)
class HybridMatrix:
    dims: Dims
    ell_part: EllMatrix
    coo_part: CooMatrix
    split_width: int

    @property
    def shape(self):
        return self.dims.shape

    @property
    def nnz(self) -> int:
        return self.dims.nnz


SparseMatrix = Union[CooMatrix, CsrMatrix, EllMatrix, SellMatrix, HybridMatrix]


@dataclass(frozen=True)
class Fixed:
    """Hybrid split at a fixed ELL width."""

    width: int

    def split_width(self, row_nnz: np.ndarray) -> int:
        if self.width < 0:
            raise FormatError("fixed split width must be non-negative")
        return self.width


@dataclass(frozen=True)
class Percentile:
    """Hybrid split at the given percentile of the nnz-per-row distribution."""

    p: float = DEFAULT_HYBRID_PERCENTILE

    def split_width(self, row_nnz: np.ndarray) -> int:
        if not 0.0 <= self.p <= 100.0:
            raise FormatError(f"percentile {self.p} outside [0, 100]")
        if len(row_nnz) == 0:
            return 1
        k = int(np.percentile(row_nnz, self.p, method="higher"))
        return max(k, 1)


SplitStrategy = Union[Fixed, Percentile]


@dataclass(frozen=True)
class RowStats:
    per_row_nnz: np.ndarray = field(repr=False)
    mean: float
    variance: float
    stddev: float
    cov: float
    max_row_nnz: int

    @property
    def num_rows(self) -> int:
        return len(self.per_row_nnz)

    @property
    def nnz(self) -> int:
        return int(self.per_row_nnz.sum())

    @property
    def variance_to_mean(self) -> float:
        """Literal variance/mean dispersion index (0 for empty patterns)."""
        return self.variance / self.mean if self.mean > 0 else 0.0


def _check_bounds(idx: np.ndarray, bound: int, what: str) -> None:
    bad = np.flatnonzero((idx < 0) | (idx >= bound))
    if len(bad):
        raise FormatError(f"{what} index {idx[bad[0]]} out of range [0, {bound}) at entry {bad[0]}")


# -- construction -------------------------------------------------------------

def coo_from_arrays(rows, cols, vals, num_rows: int, num_cols: int) -> CooMatrix:
    """Build a canonical COO matrix from unsorted arrays, summing duplicates."""
    rows = np.asarray(rows, dtype=INDEX_DTYPE).ravel()
    cols = np.asarray(cols, dtype=INDEX_DTYPE).ravel()
    vals = np.asarray(vals, dtype=VALUE_DTYPE).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise FormatError("row, column and value arrays differ in length")
    bad = np.flatnonzero((rows < 0) | (rows >= num_rows) | (cols < 0) | (cols >= num_cols))
    if len(bad):
        k = bad[0]
        raise FormatError(
            f"triplet ({rows[k]}, {cols[k]}, {vals[k]!r}) out of bounds for "
            f"{num_rows}x{num_cols} matrix"
        )
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows) > 1:
        new = np.empty(len(rows), dtype=bool)
        new[0] = True
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        if not new.all():
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
    return CooMatrix(Dims(num_rows, num_cols, len(vals)), rows, cols, vals)


def coo_from_triplets(
    entries: Iterable[Sequence], num_rows: int, num_cols: int
) -> CooMatrix:
    """Build a COO matrix from ``(row, col, value)`` triplets.

    Entries are sorted by (row, col); duplicates are summed and explicit
    zeros are kept.

    >>> coo_from_triplets([(0, 0, 1.0), (0, 0, 2.0)], 1, 1).values.tolist()
    [3.0]
    """
    entries = list(entries)
    for t in entries:
        r, c = t[0], t[1]
        if not (0 <= r < num_rows and 0 <= c < num_cols):
            raise FormatError(
                f"triplet {tuple(t)} out of bounds for {num_rows}x{num_cols} matrix"
            )
    if not entries:
        return coo_from_arrays([], [], [], num_rows, num_cols)
    r, c, v = zip(*entries)
    return coo_from_arrays(r, c, v, num_rows, num_cols)


def csr_from_dense(a) -> CsrMatrix:
    a = np.asarray(a, dtype=VALUE_DTYPE)
    r, c = np.nonzero(a)
    return coo_to_csr(coo_from_arrays(r, c, a[r, c], *a.shape))


# -- conversions --------------------------------------------------------------

def coo_to_csr(m: CooMatrix) -> CsrMatrix:
    counts = np.bincount(m.row_idx, minlength=m.dims.num_rows)
    row_ptr = np.zeros(m.dims.num_rows + 1, dtype=INDEX_DTYPE)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(m.dims, row_ptr, m.col_idx, m.values)


def csr_to_coo(m: CsrMatrix) -> CooMatrix:
    return CooMatrix(m.dims, m.row_of_entry(), m.col_idx, m.values)


def _pad_columns(m: CsrMatrix, lengths: np.ndarray) -> np.ndarray:
    # pad slots reuse the row's last real column so padded gathers stay in bounds
    last = np.zeros(m.dims.num_rows, dtype=INDEX_DTYPE)
    nonempty = lengths > 0
    last[nonempty] = m.col_idx[m.row_ptr[1:][nonempty] - 1]
    return last


def _ell_layout(m: CsrMatrix, width: int, lengths: np.ndarray):
    """Column-major (width, num_rows) slot arrays holding the leading
    ``min(row_nnz, width)`` entries of every row."""
    n = m.dims.num_rows
    cols = np.broadcast_to(_pad_columns(m, lengths), (width, n)).copy()
    vals = np.zeros((width, n))
    kept = np.minimum(lengths, width)
    rows = np.repeat(np.arange(n, dtype=INDEX_DTYPE), kept)
    slot = np.arange(len(rows), dtype=INDEX_DTYPE) - np.repeat(
        np.cumsum(kept) - kept, kept
    )
    src = m.row_ptr[rows] + slot
    cols[slot, rows] = m.col_idx[src]
    vals[slot, rows] = m.values[src]
    return cols.ravel(), vals.ravel(), kept


def csr_to_ell(m: CsrMatrix, max_blowup: float = DEFAULT_MAX_BLOWUP) -> EllMatrix:
    """Pad every row to the longest row.

    Raises :class:`EllBlowupError` when ``num_rows * width`` exceeds
    ``max_blowup * nnz``.
    """
    lengths = m.row_lengths()
    width = int(lengths.max()) if len(lengths) else 0
    storage = m.dims.num_rows * width
    if storage > max_blowup * m.nnz:
        raise EllBlowupError(storage, m.nnz, max_blowup)
    cols, vals, kept = _ell_layout(m, width, lengths)
    return EllMatrix(m.dims, width, cols, vals, kept)


def csr_to_sell(m: CsrMatrix, slice_size: int) -> SellMatrix:
    if slice_size < 1:
        raise FormatError(f"slice_size must be >= 1, got {slice_size}")
    n = m.dims.num_rows
    num_slices = -(-n // slice_size)
    padded_rows = num_slices * slice_size
    lengths = np.zeros(padded_rows, dtype=INDEX_DTYPE)
    lengths[:n] = m.row_lengths()
    widths = lengths.reshape(num_slices, slice_size).max(axis=1) if num_slices else lengths[:0]
    slice_ptr = np.zeros(num_slices + 1, dtype=INDEX_DTYPE)
    np.cumsum(widths * slice_size, out=slice_ptr[1:])

    total = int(slice_ptr[-1])
    cols = np.zeros(total, dtype=INDEX_DTYPE)
    vals = np.zeros(total)
    pad_col = np.zeros(padded_rows, dtype=INDEX_DTYPE)
    pad_col[:n] = _pad_columns(m, lengths[:n])

    # pad slots first: every slot of row r in slice s gets r's pad column
    row_ids = np.arange(padded_rows, dtype=INDEX_DTYPE)
    sl = row_ids // slice_size
    local = row_ids % slice_size
    slot_counts = widths[sl]
    slot_rows = np.repeat(row_ids, slot_counts)
    slot_j = np.arange(len(slot_rows), dtype=INDEX_DTYPE) - np.repeat(
        np.cumsum(slot_counts) - slot_counts, slot_counts
    )
    pos = slice_ptr[sl[slot_rows]] + slot_j * slice_size + local[slot_rows]
    cols[pos] = pad_col[slot_rows]

    entry_rows = m.row_of_entry()
    entry_j = np.arange(m.nnz, dtype=INDEX_DTYPE) - m.row_ptr[entry_rows]
    pos = slice_ptr[sl[entry_rows]] + entry_j * slice_size + local[entry_rows]
    cols[pos] = m.col_idx
    vals[pos] = m.values
    return SellMatrix(m.dims, slice_size, slice_ptr, cols, vals, lengths[:n])


def csr_to_hybrid(m: CsrMatrix, strategy: SplitStrategy | None = None) -> HybridMatrix:
    """Leading ``split_width`` entries of each row go to ELL, the rest to COO."""
    strategy = strategy or Percentile()
    lengths = m.row_lengths()
    k = strategy.split_width(lengths)
    kept = np.minimum(lengths, k)
    ell_width = int(kept.max()) if len(kept) else 0
    cols, vals, kept = _ell_layout(m, ell_width, lengths)
    ell = EllMatrix(Dims(m.dims.num_rows, m.dims.num_cols, int(kept.sum())), ell_width, cols, vals, kept)

    rows = m.row_of_entry()
    overflow = (np.arange(m.nnz, dtype=INDEX_DTYPE) - m.row_ptr[rows]) >= k
    coo = CooMatrix(
        Dims(m.dims.num_rows, m.dims.num_cols, int(overflow.sum())),
        rows[overflow],
        m.col_idx[overflow],
        m.values[overflow],
    )
    return HybridMatrix(m.dims, ell, coo, k)


def csr_transpose(m: CsrMatrix) -> CsrMatrix:
    rows = m.row_of_entry()
    # stable sort by column keeps rows ascending inside each output row
    order = np.argsort(m.col_idx, kind="stable")
    counts = np.bincount(m.col_idx, minlength=m.dims.num_cols)
    row_ptr = np.zeros(m.dims.num_cols + 1, dtype=INDEX_DTYPE)
    np.cumsum(counts, out=row_ptr[1:])
    dims = Dims(m.dims.num_cols, m.dims.num_rows, m.nnz)
    return CsrMatrix(dims, row_ptr, rows[order], m.values[order])


# -- back to COO (for element-set comparisons) --------------------------------

def ell_to_coo(m: EllMatrix) -> CooMatrix:
    n = m.dims.num_rows
    real = np.arange(m.width)[:, None] < m.row_nnz[None, :]
    j, i = np.nonzero(real)
    flat = j * n + i
    return coo_from_arrays(i, m.col_idx[flat], m.values[flat], *m.shape)


def sell_to_coo(m: SellMatrix) -> CooMatrix:
    s = m.slice_size
    rows = np.repeat(np.arange(m.dims.num_rows, dtype=INDEX_DTYPE), m.row_nnz)
    j = np.arange(len(rows), dtype=INDEX_DTYPE) - np.repeat(np.cumsum(m.row_nnz) - m.row_nnz, m.row_nnz)
    pos = m.slice_ptr[rows // s] + j * s + rows % s
    return coo_from_arrays(rows, m.col_idx[pos], m.values[pos], *m.shape)


def hybrid_to_coo(m: HybridMatrix) -> CooMatrix:
    e = ell_to_coo(m.ell_part)
    c = m.coo_part
    return coo_from_arrays(
        np.concatenate([e.row_idx, c.row_idx]),
        np.concatenate([e.col_idx, c.col_idx]),
        np.concatenate([e.values, c.values]),
        *m.shape,
    )


def to_coo(m: SparseMatrix) -> CooMatrix:
    if isinstance(m, CooMatrix):
        return m
    if isinstance(m, CsrMatrix):
        return csr_to_coo(m)
    if isinstance(m, EllMatrix):
        return ell_to_coo(m)
    if isinstance(m, SellMatrix):
        return sell_to_coo(m)
    if isinstance(m, HybridMatrix):
        return hybrid_to_coo(m)
    raise TypeError(f"not a sparse matrix: {type(m).__name__}")


# -- statistics ---------------------------------------------------------------

def row_stats_from_counts(per_row_nnz) -> RowStats:
    counts = np.asarray(per_row_nnz, dtype=INDEX_DTYPE)
    if len(counts) == 0:
        raise FormatError("row statistics need at least one row")
    c = counts.astype(np.float64)
    mean = float(c.mean())
    variance = float(np.mean((c - mean) ** 2))
    stddev = math.sqrt(variance)
    cov = stddev / mean if mean > 0 else 0.0
    return RowStats(counts, mean, variance, stddev, cov, int(counts.max()))


def row_nnz_stats(m: CsrMatrix) -> RowStats:
    """Distribution of stored entries per row (population variance)."""
    return row_stats_from_counts(m.row_lengths())
