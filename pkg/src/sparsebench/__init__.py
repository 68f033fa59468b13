"""Sparse matrix formats, SpMV kernels, STREAM probes, Krylov solvers and
benchmark analysis for multicore CPUs."""

__version__ = "0.1.0"

from .analysis import (
    BenchRecord,
    PerformanceProfile,
    RooflineInputs,
    cov_correlation,
    performance_profile,
    roofline_bound,
    speedup_scatter,
)
from .formats import (
    CooMatrix,
    CsrMatrix,
    Dims,
    EllMatrix,
    Fixed,
    HybridMatrix,
    Percentile,
    RowStats,
    SellMatrix,
    coo_from_triplets,
    coo_to_csr,
    csr_to_coo,
    csr_to_ell,
    csr_to_hybrid,
    csr_to_sell,
    csr_transpose,
    row_nnz_stats,
    to_coo,
)
from .ingest import gen_laplacian_2d, gen_random_rowdist, load_csr, read_matrix_market, scan_corpus
from .krylov import SolveResult, SolverConfig, SolverId, solve
from .spmv import ApplyCoeffs, KernelId, SpmvConfig, SpmvOperator
from .stream import StreamKernel, run_stream, stream_sweep

__all__ = [n for n in dir() if not n.startswith("_")]
