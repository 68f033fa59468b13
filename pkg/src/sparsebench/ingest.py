"""Matrix Market input, corpus scanning and synthetic test matrices."""

from __future__ import annotations

import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Union

import numpy as np

from .formats import (
    CooMatrix,
    CsrMatrix,
    Dims,
    RowStats,
    coo_from_arrays,
    coo_to_csr,
    csr_to_coo,
    row_nnz_stats,
)

log = logging.getLogger(__name__)

BANNER = "%%MatrixMarket"
SUPPORTED_FIELDS = ("real", "integer", "pattern")
SUPPORTED_SYMMETRIES = ("general", "symmetric")


class MatrixMarketError(ValueError):
    """Base class for parse failures; ``line`` is 1-based (0 if unknown)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class BannerError(MatrixMarketError):
    pass


class UnsupportedFormatError(MatrixMarketError):
    pass


class SizeLineError(MatrixMarketError):
    pass


class EntryCountError(MatrixMarketError):
    pass


class TruncatedError(EntryCountError):
    """The input ended before the declared number of entries."""


class IndexRangeError(MatrixMarketError):
    pass


class TokenError(MatrixMarketError):
    pass


@dataclass(frozen=True)
class MatrixHeader:
    object: str
    format: str
    field: str
    symmetry: str

    @classmethod
    def parse(cls, line: str, lineno: int = 1) -> "MatrixHeader":
        parts = line.split()
        if not parts or parts[0] != BANNER:
            raise BannerError(f"expected '{BANNER}' banner, got {line.strip()[:40]!r}", lineno)
        if len(parts) != 5:
            raise BannerError("banner must have object, format, field and symmetry", lineno)
        obj, fmt, fld, sym = (p.lower() for p in parts[1:])
        header = cls(obj, fmt, fld, sym)
        if obj != "matrix":
            raise UnsupportedFormatError(f"object '{obj}' is not 'matrix'", lineno)
        if fmt != "coordinate":
            raise UnsupportedFormatError(f"format '{fmt}' not supported (coordinate only)", lineno)
        if fld not in SUPPORTED_FIELDS:
            raise UnsupportedFormatError(f"field '{fld}' not supported", lineno)
        if sym not in SUPPORTED_SYMMETRIES:
            raise UnsupportedFormatError(f"symmetry '{sym}' not supported", lineno)
        return header


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    path: Path
    dims: Dims
    stats: RowStats
    field: str = "real"


@dataclass(frozen=True)
class SkipReport:
    path: Path
    reason: str


def _data_lines(lines: Iterable[tuple[int, str]]):
    for lineno, raw in lines:
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        yield lineno, s


def read_matrix_market_header(source: Union[BinaryIO, bytes, str, os.PathLike]):
    """Return ``(header, coo)``; see :func:`read_matrix_market`."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return _parse(fh.read())
    if isinstance(source, bytes):
        return _parse(source)
    return _parse(source.read())


def read_matrix_market(source) -> CooMatrix:
    """Parse a coordinate Matrix Market body into a canonical COO matrix.

    ``source`` is a binary stream, raw bytes, or a path.  Indices are
    converted to 0-based, symmetric storage is mirrored to full storage and
    pattern entries get value 1.0.
    """
    return read_matrix_market_header(source)[1]


def _parse(data: bytes):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TokenError(f"file is not valid UTF-8 text ({exc.reason})") from None
    lines = text.splitlines()
    if not lines:
        raise BannerError("empty input", 1)
    header = MatrixHeader.parse(lines[0], 1)

    body = _data_lines(enumerate(lines[1:], start=2))
    try:
        size_lineno, size_line = next(body)
    except StopIteration:
        raise SizeLineError("missing size line", len(lines)) from None
    parts = size_line.split()
    if len(parts) != 3:
        raise SizeLineError(f"size line needs 3 integers, got {size_line!r}", size_lineno)
    try:
        nrows, ncols, nentries = (int(p) for p in parts)
    except ValueError:
        raise SizeLineError(f"non-integer size line {size_line!r}", size_lineno) from None
    if min(nrows, ncols, nentries) < 0:
        raise SizeLineError("negative size", size_lineno)

    want = 2 if header.field == "pattern" else 3
    rows = np.empty(nentries, dtype=np.int64)
    cols = np.empty(nentries, dtype=np.int64)
    vals = np.ones(nentries, dtype=np.float64)
    k = 0
    last_lineno = size_lineno
    for lineno, s in body:
        last_lineno = lineno
        if k >= nentries:
            raise EntryCountError(f"more than the declared {nentries} entries", lineno)
        tok = s.split()
        if len(tok) != want:
            raise TokenError(f"expected {want} tokens, got {len(tok)}: {s!r}", lineno)
        try:
            i, j = int(tok[0]), int(tok[1])
        except ValueError:
            raise TokenError(f"malformed index in {s!r}", lineno) from None
        if want == 3:
            try:
                v = int(tok[2]) if header.field == "integer" else float(tok[2])
            except ValueError:
                raise TokenError(f"malformed {header.field} value {tok[2]!r}", lineno) from None
            vals[k] = v
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise IndexRangeError(f"index ({i}, {j}) outside {nrows}x{ncols}", lineno)
        rows[k] = i - 1
        cols[k] = j - 1
        k += 1
    if k != nentries:
        raise TruncatedError(f"input ends after {k} of the declared {nentries} entries", last_lineno)

    if header.symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return header, coo_from_arrays(rows, cols, vals, nrows, ncols)


def write_matrix_market(m: CooMatrix, dest: Union[str, os.PathLike, BinaryIO], comment: str = "") -> None:
    buf = io.StringIO()
    buf.write(f"{BANNER} matrix coordinate real general\n")
    for line in comment.splitlines():
        buf.write(f"% {line}\n")
    buf.write(f"{m.dims.num_rows} {m.dims.num_cols} {m.nnz}\n")
    for r, c, v in zip(m.row_idx.tolist(), m.col_idx.tolist(), m.values.tolist()):
        buf.write(f"{r + 1} {c + 1} {v!r}\n")
    data = buf.getvalue().encode("utf-8")
    if isinstance(dest, (str, os.PathLike)):
        Path(dest).write_bytes(data)
    else:
        dest.write(data)


def load_csr(path) -> CsrMatrix:
    return coo_to_csr(read_matrix_market(path))


def _scan_one(path: Path):
    try:
        header, coo = read_matrix_market_header(path)
        csr = coo_to_csr(coo)
        return CorpusEntry(path.stem, path, csr.dims, row_nnz_stats(csr), header.field)
    except (MatrixMarketError, ValueError, OSError) as exc:
        return SkipReport(path, str(exc))


def scan_corpus(directory, workers: int = 1) -> tuple[list[CorpusEntry], list[SkipReport]]:
    """Parse every ``*.mtx`` file in ``directory``.

    Unparseable files are skipped and reported, never fatal.  Results are
    ordered by file name regardless of ``workers``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(f"corpus directory {directory} is not readable")
    paths = sorted(directory.glob("*.mtx"))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(_scan_one, paths))
    else:
        results = [_scan_one(p) for p in paths]
    entries = [r for r in results if isinstance(r, CorpusEntry)]
    skipped = [r for r in results if isinstance(r, SkipReport)]
    for s in skipped:
        log.warning("skipping %s: %s", s.path.name, s.reason)
    return entries, skipped


# -- generators ---------------------------------------------------------------

def gen_laplacian_2d(n: int) -> CsrMatrix:
    """Five-point Laplacian on an ``n x n`` grid (SPD, ``n**2`` unknowns)."""
    if n < 1:
        raise ValueError("grid size must be >= 1")
    idx = np.arange(n * n).reshape(n, n)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [np.full(n * n, 4.0)]
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        a, b = a.ravel(), b.ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(len(a), -1.0)] * 2
    coo = coo_from_arrays(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n * n, n * n)
    return coo_to_csr(coo)


def gen_random_rowdist(num_rows: int, num_cols: int, row_nnz, seed: int = 0) -> CsrMatrix:
    """Random matrix with exactly ``row_nnz[i]`` entries in row ``i`` (a
    scalar ``row_nnz`` applies to every row).

    Columns are distinct and uniformly sampled, values uniform in (-1, 1).
    """
    row_nnz = np.asarray(row_nnz, dtype=np.int64)
    if row_nnz.ndim == 0:
        row_nnz = np.full(num_rows, int(row_nnz), dtype=np.int64)
    if len(row_nnz) != num_rows:
        raise ValueError(f"row_nnz has {len(row_nnz)} entries for {num_rows} rows")
    too_long = np.flatnonzero((row_nnz > num_cols) | (row_nnz < 0))
    if len(too_long):
        i = too_long[0]
        raise ValueError(f"row {i} requests {row_nnz[i]} entries but there are {num_cols} columns")
    rng = np.random.default_rng(seed)
    cols = []
    for k in row_nnz.tolist():
        if k == 0:
            continue
        if 4 * k < num_cols:
            # sparse rows: rejection keeps this O(k)
            c = np.unique(rng.integers(0, num_cols, size=2 * k))
            while len(c) < k:
                c = np.unique(np.concatenate([c, rng.integers(0, num_cols, size=k)]))
            c = rng.permutation(c)[:k]
        else:
            c = rng.choice(num_cols, size=k, replace=False)
        cols.append(np.sort(c))
    col_idx = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    nnz = int(row_nnz.sum())
    # open interval (-1, 1): resample the (measure-zero) endpoint
    values = rng.uniform(-1.0, 1.0, size=nnz)
    values[values == -1.0] = 0.5
    row_ptr = np.concatenate([[0], np.cumsum(row_nnz)])
    return CsrMatrix(Dims(num_rows, num_cols, nnz), row_ptr, col_idx, values)


def gen_random_density(num_rows: int, num_cols: int, density: float, seed: int = 0) -> CsrMatrix:
    """Random matrix with binomially distributed row lengths at ``density``."""
    rng = np.random.default_rng(seed)
    row_nnz = rng.binomial(num_cols, density, size=num_rows) if num_cols else np.zeros(num_rows, int)
    return gen_random_rowdist(num_rows, num_cols, row_nnz, seed=int(rng.integers(2**31)))


MINI_CORPUS = {
    # name: (kind, args)
    "lap2d_16": ("laplacian", (16,)),
    "lap2d_40": ("laplacian", (40,)),
    "uniform_500": ("rowdist", (500, 500, "uniform", 8)),
    "uniform_2000": ("rowdist", (2000, 2000, "uniform", 12)),
    "powerlaw_1000": ("rowdist", (1000, 1000, "powerlaw", 10)),
    "arrow_800": ("rowdist", (800, 800, "arrow", 3)),
    "uniform_1500": ("rowdist", (1500, 1500, "uniform", 5)),
    "skewed_1200": ("rowdist", (1200, 1200, "skewed", 6)),
    "rect_600x900": ("rowdist", (600, 900, "uniform", 7)),
    "sparse_3000": ("rowdist", (3000, 3000, "powerlaw", 3)),
}


def _row_profile(kind: str, n: int, ncols: int, k: int, rng) -> np.ndarray:
    if kind == "uniform":
        return np.full(n, k)
    if kind == "powerlaw":
        return np.minimum(np.ceil(rng.pareto(1.5, n) * k / 2 + 1).astype(np.int64), ncols)
    if kind == "arrow":
        out = np.full(n, k)
        out[0] = ncols
        return out
    if kind == "skewed":
        out = np.full(n, k)
        out[rng.choice(n, size=max(n // 50, 1), replace=False)] = min(ncols, 40 * k)
        return out
    raise ValueError(f"unknown row profile {kind!r}")


def write_mini_corpus(directory, seed: int = 2020) -> list[Path]:
    """Write the ten-matrix benchmark corpus used by the end-to-end tests."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for name, (kind, args) in MINI_CORPUS.items():
        if kind == "laplacian":
            m = gen_laplacian_2d(*args)
        else:
            n, ncols, profile, k = args
            m = gen_random_rowdist(n, ncols, _row_profile(profile, n, ncols, k, rng), int(rng.integers(2**31)))
        path = directory / f"{name}.mtx"
        write_matrix_market(csr_to_coo(m), path, comment=f"{kind} {args}")
        paths.append(path)
    return paths
