"""Evaluation tables for SpMV campaigns: GFLOP/s, roofline bounds,
performance profiles, speedup scatter data and imbalance correlation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import KeyMismatchError, require_same_keys
from .formats import RowStats

# Published GPU figures, kept for side-by-side comparison with local runs.
# They are measurements of specific hardware and are not targets here.
REFERENCE = {
    "v100_stream_gbs": (800.0, 840.0),
    "a100_stream_gbs": (1330.0, 1400.0),
    "a100_over_v100_bandwidth": 1.7,
    "a100_over_v100_krylov": 1.8,
    "a100_csr_roofline_gflops": 230.0,
    "v100_peak_bandwidth_gbs": 900.0,
    "a100_peak_bandwidth_gbs": 1555.0,
    "profile_min_nnz": 100_000,
}


class MissingRecordError(KeyError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"no record for (problem, kernel) pairs: {self.missing}")

    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class BenchRecord:
    """One timed kernel on one matrix; failures carry ``median_seconds = inf``."""

    matrix: str
    kernel: str
    nnz: int
    median_seconds: float
    num_rows: int = 0
    reps: int = 0
    min_seconds: float = math.nan
    max_seconds: float = math.nan
    status: str = "ok"
    cov: float = math.nan

    def __post_init__(self):
        if not self.median_seconds > 0:
            raise ValueError(f"median_seconds must be positive, got {self.median_seconds}")

    @property
    def gflops(self) -> float:
        if math.isinf(self.median_seconds):
            return 0.0
        return 2.0 * self.nnz / self.median_seconds / 1e9

    def gbs(self, bytes_per_nnz: float = 12.0) -> float:
        if math.isinf(self.median_seconds):
            return 0.0
        return bytes_per_nnz * self.nnz / self.median_seconds / 1e9

    @property
    def key(self) -> tuple[str, str]:
        return (self.matrix, self.kernel)

    def row(self) -> dict:
        d = asdict(self)
        d["gflops"] = self.gflops
        return d

    @classmethod
    def from_row(cls, row: Mapping) -> "BenchRecord":
        kw = {}
        for f in fields(cls):
            if f.name not in row:
                continue
            v = row[f.name]
            if f.type in ("int",):
                v = int(v)
            elif f.type in ("float",):
                v = float(v)
            kw[f.name] = v
        return cls(**kw)


RECORD_COLUMNS = [f.name for f in fields(BenchRecord)] + ["gflops"]


@dataclass(frozen=True)
class RooflineInputs:
    bandwidth_gbs: float
    bytes_per_nnz: float = 12.0
    flops_per_nnz: float = 2.0

    def __post_init__(self):
        for name in ("bandwidth_gbs", "bytes_per_nnz", "flops_per_nnz"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def roofline_bound(inputs: RooflineInputs) -> float:
    """Bandwidth-limited GFLOP/s ceiling: flops per entry over bytes per entry
    times bandwidth.

    >>> round(roofline_bound(RooflineInputs(1400.0, 12.0, 2.0)), 2)
    233.33
    """
    return inputs.flops_per_nnz * inputs.bandwidth_gbs / inputs.bytes_per_nnz


@dataclass(frozen=True)
class PerformanceProfile:
    kernels: tuple
    problems: tuple
    ratios: Mapping[str, np.ndarray]  # sorted ascending, one per problem

    def fraction(self, kernel: str, theta: float) -> float:
        r = self.ratios[kernel]
        return int(np.searchsorted(r, theta, side="right")) / len(self.problems)

    __call__ = fraction

    def breakpoints(self) -> list[float]:
        pts = set()
        for r in self.ratios.values():
            pts.update(float(v) for v in r if math.isfinite(v))
        return sorted(pts)

    def max_ratio(self, kernel: str) -> float:
        return float(self.ratios[kernel][-1])

    def table(self, thetas: Optional[Sequence[float]] = None) -> list[dict]:
        """Rows ``{kernel, theta, fraction}``; by default evaluated at every
        step of the profile."""
        thetas = self.breakpoints() if thetas is None else list(thetas)
        return [
            {"kernel": k, "theta": t, "fraction": self.fraction(k, t)}
            for k in self.kernels
            for t in thetas
        ]


def performance_profile(records: Iterable[BenchRecord], kernels=None, problems=None) -> PerformanceProfile:
    """Fraction of problems on which each kernel is within ``theta`` of the
    fastest kernel for that problem.

    Every (problem, kernel) pair must be present exactly once.
    """
    records = list(records)
    kernels = tuple(sorted({r.kernel for r in records})) if kernels is None else tuple(kernels)
    problems = tuple(sorted({r.matrix for r in records})) if problems is None else tuple(problems)
    if not kernels or not problems:
        raise ValueError("a profile needs at least one kernel and one problem")
    times: dict[tuple[str, str], float] = {}
    for r in records:
        if r.kernel not in kernels or r.matrix not in problems:
            continue
        if r.key in times:
            raise ValueError(f"duplicate record for {r.key}")
        times[r.key] = r.median_seconds
    missing = [(p, k) for p in problems for k in kernels if (p, k) not in times]
    if missing:
        raise MissingRecordError(missing)

    ratios = {k: [] for k in kernels}
    for p in problems:
        best = min(times[(p, k)] for k in kernels)
        for k in kernels:
            t = times[(p, k)]
            ratios[k].append(t / best if math.isfinite(best) else math.inf)
    return PerformanceProfile(kernels, problems, {k: np.sort(np.array(v)) for k, v in ratios.items()})


@dataclass(frozen=True)
class SpeedupPoint:
    matrix: str
    kernel: str
    nnz: int
    seconds_a: float
    seconds_b: float

    @property
    def speedup(self) -> float:
        if math.isinf(self.seconds_a):
            # both failed: neither run is faster
            return 0.0 if math.isfinite(self.seconds_b) else 1.0
        return self.seconds_b / self.seconds_a

    def row(self) -> dict:
        d = asdict(self)
        d["speedup"] = self.speedup
        return d


def _index(records: Iterable[BenchRecord]) -> dict:
    out = {}
    for r in records:
        if r.key in out:
            raise ValueError(f"duplicate record for {r.key}")
        out[r.key] = r
    return out


def speedup_scatter(records_a: Iterable[BenchRecord], records_b: Iterable[BenchRecord]) -> list[SpeedupPoint]:
    """Per (matrix, kernel) ratio ``time_b / time_a``; above 1 when run ``a``
    is faster.  Points are ordered by nnz, then matrix and kernel."""
    a, b = _index(records_a), _index(records_b)
    require_same_keys(a, b, "(matrix, kernel)")
    pts = [SpeedupPoint(m, k, a[(m, k)].nnz, a[(m, k)].median_seconds, b[(m, k)].median_seconds)
           for (m, k) in a]
    pts.sort(key=lambda p: (p.nnz, p.matrix, p.kernel))
    return pts


@dataclass(frozen=True)
class CovPoint:
    matrix: str
    kernel: str
    cov: float
    speedup: float


def cov_correlation(records_a, records_b, stats: Mapping[str, RowStats | float]) -> list[CovPoint]:
    """Join speedups with each matrix's nnz-per-row coefficient of variation,
    sorted by cov.  ``stats`` values may be :class:`RowStats` or plain cov
    numbers."""
    pts = speedup_scatter(records_a, records_b)
    absent = sorted({p.matrix for p in pts} - set(stats))
    if absent:
        raise KeyMismatchError(absent, [], "row-stats matrix id")
    out = [CovPoint(p.matrix, p.kernel, float(getattr(stats[p.matrix], "cov", stats[p.matrix])), p.speedup) for p in pts]
    out.sort(key=lambda c: (c.cov, c.matrix, c.kernel))
    return out
