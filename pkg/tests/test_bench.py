import math

import numpy as np
import pytest

from conftest import MINICORPUS
from sparsebench import spmv
from sparsebench.bench import HarnessConfig, bench_matrix, run_solvers, select_corpus, time_reps
from sparsebench.formats import csr_from_dense
from sparsebench.ingest import gen_laplacian_2d, scan_corpus
from sparsebench.krylov import SolverConfig
from sparsebench.spmv import DimensionError, KernelId, SpmvConfig


def test_warmup_excluded_from_timings():
    calls = []
    times = time_reps(lambda: calls.append(1), warmup=3, reps=4)
    assert len(calls) == 7 and len(times) == 4


def test_select_corpus_inclusive_threshold():
    entries, _ = scan_corpus(MINICORPUS)
    nnz = sorted(e.dims.nnz for e in entries)
    kept = select_corpus(entries, min_nnz=nnz[3])
    assert len(kept) == 7
    assert select_corpus(entries, real_only=True) == entries


def test_wrong_results_are_flagged(monkeypatch):
    def broken(A, x, y=None, coeffs=spmv.ApplyCoeffs(), config=spmv.DEFAULT_CONFIG):
        out = spmv.spmv_sell(A, x, y, coeffs, config)
        out[0] += 1.0
        return out

    monkeypatch.setitem(spmv.KERNELS, KernelId.sell, broken)
    recs = bench_matrix("lap", gen_laplacian_2d(5), [KernelId.csr_classical, KernelId.sell],
                        HarnessConfig(warmup=0, reps=2), SpmvConfig())
    assert [r.status for r in recs] == ["ok", "wrong"]
    assert math.isinf(recs[1].median_seconds)


def test_run_solvers():
    res = run_solvers(gen_laplacian_2d(6), ["cg", "gmres"], SolverConfig(rel_tol=1e-10), reps=3)
    assert list(res) == ["cg", "gmres"]
    assert all(r.converged and np.allclose(r.x, 1.0) for r in res.values())
    with pytest.raises(DimensionError):
        run_solvers(csr_from_dense(np.ones((2, 3))))
