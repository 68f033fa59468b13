import io
import math
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MINICORPUS, MM, canonical_coo, random_csr
from sparsebench import ingest
from sparsebench.formats import csr_to_coo, row_nnz_stats


def test_canonical_file():
    assert ingest.read_matrix_market(MM / "canonical.mtx") == canonical_coo()


def test_symmetric_expansion():
    m = ingest.read_matrix_market(MM / "symmetric.mtx")
    assert m.nnz == 3
    assert sorted(m.triplets()) == [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0)]


def test_pattern_values():
    header, m = ingest.read_matrix_market_header(MM / "pattern.mtx")
    assert header.field == "pattern"
    assert m.triplets() == [(1, 2, 1.0)]


def test_reads_bytes_and_streams():
    raw = (MM / "canonical.mtx").read_bytes()
    assert ingest.read_matrix_market(raw) == ingest.read_matrix_market(io.BytesIO(raw))


@pytest.mark.parametrize("fname, err, line", [
    ("bad_banner.mtx", ingest.BannerError, 1),
    ("count_mismatch.mtx", ingest.EntryCountError, 5),
    ("out_of_range.mtx", ingest.IndexRangeError, 4),
    ("bad_token.mtx", ingest.TokenError, 4),
    ("truncated.mtx", ingest.TruncatedError, 4),
])
def test_malformed(fname, err, line):
    with pytest.raises(err) as info:
        ingest.read_matrix_market(MM / fname)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


@pytest.mark.parametrize("text, err", [
    (b"%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n", ingest.UnsupportedFormatError),
    (b"%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n", ingest.UnsupportedFormatError),
    (b"%%MatrixMarket matrix coordinate real hermitian\n1 1 1\n1 1 1\n", ingest.UnsupportedFormatError),
    (b"%%MatrixMarket matrix coordinate real general\n3 3\n", ingest.SizeLineError),
    (b"%%MatrixMarket matrix coordinate real general\n", ingest.SizeLineError),
    (b"", ingest.BannerError),
    (b"%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1\n", ingest.TokenError),
])
def test_other_errors(text, err):
    with pytest.raises(err):
        ingest.read_matrix_market(text)


def test_integer_field_and_comments():
    text = b"%%MatrixMarket matrix coordinate integer general\n% c\n\n2 2 1\n% mid\n2 1 7\n"
    assert ingest.read_matrix_market(text).triplets() == [(1, 0, 7.0)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.floats(0, 0.4), st.integers(0, 2**32 - 1))
def test_write_read_round_trip(n, m, density, seed):
    coo = csr_to_coo(random_csr(np.random.default_rng(seed), n, m, density))
    buf = io.BytesIO()
    ingest.write_matrix_market(coo, buf)
    assert ingest.read_matrix_market(buf.getvalue()) == coo


def test_scan_corpus(tmp_path):
    shutil.copy(MM / "canonical.mtx", tmp_path / "a.mtx")
    shutil.copy(MM / "symmetric.mtx", tmp_path / "b.mtx")
    shutil.copy(MM / "bad_token.mtx", tmp_path / "c.mtx")
    entries, skipped = ingest.scan_corpus(tmp_path)
    assert [e.id for e in entries] == ["a", "b"]
    assert [s.path.name for s in skipped] == ["c.mtx"]
    a = entries[0]
    assert a.dims.nnz == 5 and a.stats.max_row_nnz == 2
    assert [e.path for e in ingest.scan_corpus(tmp_path, workers=3)[0]] == [e.path for e in entries]


def test_scan_empty_and_missing(tmp_path):
    assert ingest.scan_corpus(tmp_path) == ([], [])
    with pytest.raises(NotADirectoryError):
        ingest.scan_corpus(tmp_path / "nope")


def test_laplacian():
    assert ingest.gen_laplacian_2d(1).to_dense().tolist() == [[4.0]]
    d = ingest.gen_laplacian_2d(2).to_dense()
    assert np.all(np.diag(d) == 4) and np.count_nonzero(d == -1) == 8
    assert d.sum(axis=1).tolist() == [2, 2, 2, 2]
    assert ingest.gen_laplacian_2d(10).nnz == 460
    big = ingest.gen_laplacian_2d(7).to_dense()
    assert np.array_equal(big, big.T) and np.all(np.linalg.eigvalsh(big) > 0)


def test_rowdist_generator():
    m = ingest.gen_random_rowdist(10, 10, 3, seed=4)
    assert row_nnz_stats(m).cov == 0 and m.nnz == 30
    s = row_nnz_stats(ingest.gen_random_rowdist(4, 100, [1, 1, 1, 97], seed=4))
    assert s.max_row_nnz == 97
    assert math.isclose(s.cov, math.sqrt(1728) / 25)  # mean 25, population variance 1728
    a = ingest.gen_random_rowdist(50, 60, 5, seed=9)
    b = ingest.gen_random_rowdist(50, 60, 5, seed=9)
    for f in ("row_ptr", "col_idx", "values"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_bundled_corpus_is_current(tmp_path):
    # the checked-in files are exactly what the generator writes
    paths = ingest.write_mini_corpus(tmp_path)
    assert len(paths) == 10
    for p in paths:
        assert p.read_bytes() == (MINICORPUS / p.name).read_bytes()
