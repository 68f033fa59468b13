import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import canonical_csr, random_csr
from sparsebench.formats import EllBlowupError, csr_from_dense, row_stats_from_counts
from sparsebench.ingest import gen_laplacian_2d, gen_random_rowdist
from sparsebench.spmv import (
    ALL_KERNELS,
    ApplyCoeffs,
    DimensionError,
    KernelId,
    SpmvConfig,
    SpmvOperator,
    flop_count,
    partition_nonzeros,
    select_csr_strategy,
    spmv,
    spmv_csr_transposed,
)

KERNELS = list(ALL_KERNELS)


@pytest.mark.parametrize("kernel", KERNELS)
def test_canonical_product(kernel):
    assert spmv(kernel, canonical_csr(), np.ones(3)).tolist() == [3.0, 3.0, 9.0]


@pytest.mark.parametrize("kernel", KERNELS)
def test_identity(kernel):
    x = np.arange(6.0) - 2.5
    assert np.array_equal(spmv(kernel, csr_from_dense(np.eye(6)), x), x)


class Poisoned:
    """Exposes only a matrix's shape; reading any stored entry fails."""

    def __init__(self, m):
        self.shape = m.shape
        self.dims = m.dims

    def __getattr__(self, name):
        raise AssertionError(f"matrix attribute {name} was read")


@pytest.mark.parametrize("kernel", KERNELS)
def test_alpha_zero_scales_only(kernel):
    op = SpmvOperator(canonical_csr(), kernel)
    op.matrix = Poisoned(op.matrix)
    y = np.array([1.0, 2.0, 3.0])
    op.apply(np.ones(3), y, alpha=0.0, beta=2.0)
    assert y.tolist() == [2.0, 4.0, 6.0]


@pytest.mark.parametrize("kernel", KERNELS)
def test_beta_zero_ignores_nan_y(kernel):
    y = np.full(3, np.nan)
    out = SpmvOperator(canonical_csr(), kernel).apply(np.ones(3), y)
    assert out is y and y.tolist() == [3.0, 3.0, 9.0]


@pytest.mark.parametrize("kernel", KERNELS)
def test_dimension_errors(kernel):
    op = SpmvOperator(canonical_csr(), kernel)
    with pytest.raises(DimensionError):
        op.apply(np.ones(4))
    with pytest.raises(DimensionError):
        op.apply(np.ones(3), np.zeros(2))
    with pytest.raises(DimensionError):
        op.apply(np.ones(3), np.zeros(3, dtype=np.float32))


def test_non_finite_coefficients_rejected():
    with pytest.raises(ValueError):
        ApplyCoeffs(math.inf, 0.0)


def test_transposed():
    assert spmv_csr_transposed(canonical_csr(), np.ones(3)).tolist() == [6.0, 3.0, 6.0]
    L = gen_laplacian_2d(5)
    x = np.random.default_rng(1).standard_normal(25)
    assert np.allclose(spmv_csr_transposed(L, x), spmv("csr_classical", L, x), rtol=0, atol=1e-14)
    d = np.random.default_rng(2).standard_normal((2, 5))
    out = spmv_csr_transposed(csr_from_dense(d), np.array([1.0, -2.0]))
    assert out.shape == (5,)
    assert np.allclose(out, d.T @ np.array([1.0, -2.0]), rtol=1e-14, atol=1e-15)


def test_strategy_selection():
    assert select_csr_strategy(row_stats_from_counts([5] * 1000), 4) is KernelId.csr_classical
    # one row holds half of the entries
    counts = [1] * 100
    counts[0] = 99
    s = row_stats_from_counts(counts)
    assert s.max_row_nnz * 2 == s.nnz and s.cov > 4.5
    assert select_csr_strategy(s, 1) is KernelId.csr_balanced
    assert select_csr_strategy(row_stats_from_counts([7]), 1) is KernelId.csr_balanced
    # regular pattern but too few rows to spread over the workers
    assert select_csr_strategy(row_stats_from_counts([3] * 10), 4) is KernelId.csr_balanced
    # tunable thresholds
    cfg = SpmvConfig(cov_threshold=10.0, imbalance_factor=1e9)
    assert select_csr_strategy(s, 1, cfg) is KernelId.csr_classical


def test_flops():
    A = canonical_csr()
    op = SpmvOperator(A, "csr_classical")
    assert op.flops() == 10 and op.flops(beta=1.0) == 19
    assert flop_count(100, 7, 0.5) == 221


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 64))
def test_partition_conserves_work(nnz, chunks):
    b = partition_nonzeros(nnz, chunks)
    sizes = np.diff(b)
    assert b[0] == 0 and b[-1] == nnz
    assert int(sizes.sum()) == nnz
    assert sizes.max() - sizes.min() <= 1


@st.composite
def spmv_problems(draw):
    n = draw(st.integers(0, 60))
    m = draw(st.integers(0, 60))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    A = random_csr(rng, n, m, draw(st.floats(0.0, 0.5)))
    x = rng.uniform(-10, 10, m)
    y = rng.uniform(-10, 10, n)
    alpha = draw(st.sampled_from([0.0, 1.0, -1.0, 0.3]))
    beta = draw(st.sampled_from([0.0, 1.0, -2.0, 0.7]))
    cfg = SpmvConfig(workers=draw(st.integers(1, 5)), slice_size=draw(st.integers(1, 40)),
                     over_decomposition=draw(st.integers(1, 6)), ell_max_blowup=math.inf)
    return A, x, y, alpha, beta, cfg


@settings(max_examples=80, deadline=None)
@given(spmv_problems())
def test_all_kernels_match_dense_oracle(problem):
    A, x, y0, alpha, beta, cfg = problem
    dense = A.to_dense()
    want = alpha * (dense @ x) + beta * y0
    scale = abs(alpha) * (np.abs(dense) @ np.abs(x)) + abs(beta) * np.abs(y0)
    values, cols = A.values.copy(), A.col_idx.copy()
    x_before = x.copy()
    for k in KERNELS:
        y = y0.copy()
        SpmvOperator(A, k, cfg).apply(x, y, alpha, beta)
        assert np.all(np.abs(y - want) <= 1e-12 * scale), k
    assert np.array_equal(x, x_before)
    assert np.array_equal(A.values, values) and np.array_equal(A.col_idx, cols)


@settings(max_examples=40, deadline=None)
@given(spmv_problems())
def test_merged_kernels_are_bitwise_repeatable(problem):
    A, x, y0, alpha, beta, cfg = problem
    for k in (KernelId.csr_balanced, KernelId.coo_balanced, KernelId.hybrid):
        op = SpmvOperator(A, k, cfg)
        first = op.apply(x, y0.copy(), alpha, beta)
        for _ in range(3):
            assert np.array_equal(op.apply(x, y0.copy(), alpha, beta), first)


def test_worker_count_does_not_change_row_parallel_results():
    A = gen_random_rowdist(500, 500, np.random.default_rng(0).integers(0, 60, 500), seed=3)
    x = np.random.default_rng(1).standard_normal(500)
    for k in (KernelId.csr_classical, KernelId.ell, KernelId.sell):
        ref = SpmvOperator(A, k, SpmvConfig(workers=1, ell_max_blowup=math.inf)).matvec(x)
        for w in (2, 3, 8):
            assert np.array_equal(SpmvOperator(A, k, SpmvConfig(workers=w, ell_max_blowup=math.inf)).matvec(x), ref)


def test_ell_refusal_propagates():
    d = np.eye(50)
    d[0] = 1.0
    with pytest.raises(EllBlowupError):
        SpmvOperator(csr_from_dense(d), "ell")
    # the other formats are unaffected
    SpmvOperator(csr_from_dense(d), "hybrid").matvec(np.ones(50))
