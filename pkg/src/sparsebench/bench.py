"""Benchmark campaigns: timed SpMV over a corpus and timed solver runs."""

from __future__ import annotations

import logging
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ._parallel import default_workers
from .analysis import BenchRecord
from .formats import EllBlowupError, FormatError
from .ingest import CorpusEntry, load_csr, scan_corpus
from .krylov import ALL_SOLVERS, SolveResult, SolverConfig, SolverId, solve
from .spmv import ALL_KERNELS, DimensionError, KernelId, SpmvConfig, SpmvOperator, spmv_csr_classical

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HarnessConfig:
    warmup: int = 2
    reps: int = 10
    workers: int = field(default_factory=default_workers)
    seed: int = 0
    min_nnz: int = 0
    real_only: bool = False
    output_format: str = "csv"

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("timed reps must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup reps must be >= 0")
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if self.output_format not in ("csv", "json"):
            raise ValueError(f"unknown output format {self.output_format!r}")

    def protocol(self) -> dict:
        return {"warmup": self.warmup, "reps": self.reps, "statistic": "median",
                "workers": self.workers, "seed": self.seed}


def time_reps(fn: Callable[[], object], warmup: int, reps: int) -> list[float]:
    """Run ``fn`` ``warmup`` times untimed, then return ``reps`` timings."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def select_corpus(entries: Iterable[CorpusEntry], min_nnz: int = 0, real_only: bool = False) -> list[CorpusEntry]:
    """Keep matrices with at least ``min_nnz`` entries (and a ``real`` value
    field when ``real_only``)."""
    return [e for e in entries
            if e.dims.nnz >= min_nnz and (not real_only or e.field == "real")]


def _agrees(y, ref, scale) -> bool:
    return bool(np.all(np.abs(y - ref) <= 1e-12 * scale))


def bench_matrix(matrix_id: str, A, kernels: Sequence[KernelId], cfg: HarnessConfig,
                 spmv_cfg: SpmvConfig, cov: float = math.nan) -> list[BenchRecord]:
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(-1.0, 1.0, A.dims.num_cols)
    ref = spmv_csr_classical(A, x)
    absA = type(A)(A.dims, A.row_ptr, A.col_idx, np.abs(A.values))
    scale = spmv_csr_classical(absA, np.abs(x))
    out = []
    for k in kernels:
        common = dict(matrix=matrix_id, kernel=k.value, nnz=A.nnz, num_rows=A.dims.num_rows, cov=cov)
        try:
            op = SpmvOperator(A, k, spmv_cfg)
        except EllBlowupError as exc:
            log.info("%s/%s unsupported: %s", matrix_id, k, exc)
            out.append(BenchRecord(median_seconds=math.inf, reps=0, status="unsupported", **common))
            continue
        y = np.empty(A.dims.num_rows)
        times = time_reps(lambda: op.apply(x, y), cfg.warmup, cfg.reps)
        status = "ok" if _agrees(y, ref, scale) else "wrong"
        if status != "ok":
            log.error("%s/%s result disagrees with the reference kernel", matrix_id, k)
        med = statistics.median(times) if status == "ok" else math.inf
        out.append(BenchRecord(median_seconds=max(med, 1e-12), reps=cfg.reps, min_seconds=min(times),
                               max_seconds=max(times), status=status, **common))
    return out


def run_spmv_campaign(corpus_dir, kernels: Sequence = ALL_KERNELS, cfg: HarnessConfig = HarnessConfig(),
                      spmv_cfg: Optional[SpmvConfig] = None) -> tuple[list[BenchRecord], list[str]]:
    """Benchmark every kernel on every selected corpus matrix.

    Returns the records (ordered by matrix id, then kernel order) and a list
    of human-readable problems.  A failing matrix never stops the campaign.
    """
    kernels = [KernelId(k) for k in kernels]
    spmv_cfg = spmv_cfg or SpmvConfig(workers=cfg.workers)
    entries, skipped = scan_corpus(corpus_dir)
    problems = [f"skipped {s.path.name}: {s.reason}" for s in skipped]
    records = []
    for e in select_corpus(entries, cfg.min_nnz, cfg.real_only):
        try:
            A = load_csr(e.path)
            records.extend(bench_matrix(e.id, A, kernels, cfg, spmv_cfg, e.stats.cov))
        except (FormatError, ValueError, OSError, MemoryError) as exc:
            log.error("matrix %s failed: %s", e.id, exc)
            problems.append(f"{e.id}: {exc}")
    return records, problems


SOLVE_COLUMNS = ["matrix", "solver", "kernel", "iterations", "converged", "final_relres",
                 "seconds_total", "seconds_spmv", "seconds_ortho", "seconds_axpy", "termination"]


def solve_row(matrix_id: str, res: SolveResult) -> dict:
    ct = res.component_times
    return {
        "matrix": matrix_id,
        "solver": res.solver,
        "kernel": res.kernel,
        "iterations": res.iterations,
        "converged": res.converged,
        "final_relres": res.final_relres,
        "seconds_total": res.seconds_total,
        "seconds_spmv": ct["spmv"],
        "seconds_ortho": ct["orthogonalization"],
        "seconds_axpy": ct["vector_updates"],
        "termination": res.termination,
    }


def run_solvers(A, solvers=ALL_SOLVERS, base: SolverConfig = SolverConfig(), b=None, reps: int = 1):
    """Solve ``A x = b`` (default ``b = A @ 1``, ``x0 = 0``) with each solver.

    With ``reps > 1`` the run with the median total time is kept.
    """
    if A.dims.num_rows != A.dims.num_cols:
        raise DimensionError(f"solvers need a square matrix, got {A.dims.num_rows}x{A.dims.num_cols}")
    if b is None:
        b = spmv_csr_classical(A, np.ones(A.dims.num_cols))
    results = {}
    for s in solvers:
        cfg = replace(base, solver=SolverId(s))
        op = SpmvOperator(A, cfg.kernel, cfg.spmv)
        runs = sorted((solve(op, b, cfg=cfg) for _ in range(max(reps, 1))), key=lambda r: r.seconds_total)
        results[cfg.solver.value] = runs[len(runs) // 2]
    return results
