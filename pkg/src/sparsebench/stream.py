"""STREAM-style memory bandwidth probes: copy, mul, add, triad and dot.

Arrays start at a=1, b=2, c=0 and the kernels are

    copy:  c = a
    mul:   b = s * c
    add:   c = a + b
    triad: a = b + s * c
    dot:   sum(a * b)

Bandwidth is the bytes a kernel must move divided by the median rep time.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ._parallel import even_splits, pmap
from .errors import require_same_keys

ELEMENT_BYTES = 8
DEFAULT_SCALAR = 0.4
INIT_A, INIT_B, INIT_C = 1.0, 2.0, 0.0


class StreamKernel(str, Enum):
    copy = "copy"
    mul = "mul"
    add = "add"
    triad = "triad"
    dot = "dot"

    def __str__(self):
        return self.value


KERNEL_ORDER = tuple(StreamKernel)

# arrays touched per element (reads + writes); dot's scalar result is not counted
ARRAYS_MOVED = {
    StreamKernel.copy: 2,
    StreamKernel.mul: 2,
    StreamKernel.add: 3,
    StreamKernel.triad: 3,
    StreamKernel.dot: 2,
}


def moved_bytes(kernel, array_bytes: int) -> int:
    return ARRAYS_MOVED[StreamKernel(kernel)] * array_bytes


@dataclass
class StreamArrays:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @classmethod
    def initial(cls, n: int) -> "StreamArrays":
        return cls(np.full(n, INIT_A), np.full(n, INIT_B), np.full(n, INIT_C))

    def __len__(self):
        return len(self.a)


def _run_slice(kernel: StreamKernel, arr: StreamArrays, scalar: float, lo: int, hi: int):
    a, b, c = arr.a[lo:hi], arr.b[lo:hi], arr.c[lo:hi]
    if kernel is StreamKernel.copy:
        np.copyto(c, a)
    elif kernel is StreamKernel.mul:
        np.multiply(c, scalar, out=b)
    elif kernel is StreamKernel.add:
        np.add(a, b, out=c)
    elif kernel is StreamKernel.triad:
        np.multiply(c, scalar, out=a)
        a += b
    else:
        return float(np.dot(a, b))
    return None


def apply_kernel(kernel, arrays: StreamArrays, scalar: float = DEFAULT_SCALAR, workers: int = 1):
    """One pass of ``kernel`` over ``arrays`` in place; returns the dot value
    for ``dot`` and ``None`` otherwise."""
    kernel = StreamKernel(kernel)
    bounds = even_splits(len(arrays), workers)
    out = pmap(lambda k: _run_slice(kernel, arrays, scalar, bounds[k], bounds[k + 1]),
               range(len(bounds) - 1), workers)
    if kernel is StreamKernel.dot:
        total = 0.0
        for part in out:  # fixed combine order
            total += part
        return total
    return None


@dataclass(frozen=True)
class StreamResult:
    kernel: StreamKernel
    array_bytes: int
    reps: int
    times: tuple
    dot_values: tuple = ()
    final: Optional[StreamArrays] = field(default=None, compare=False, repr=False)
    warmup: int = 0
    scalar: float = DEFAULT_SCALAR

    @property
    def array_len(self) -> int:
        return self.array_bytes // ELEMENT_BYTES

    @property
    def sorted_times(self) -> list[float]:
        return sorted(self.times)

    @property
    def median_seconds(self) -> float:
        return statistics.median(self.times)

    @property
    def min_seconds(self) -> float:
        return min(self.times)

    @property
    def max_seconds(self) -> float:
        return max(self.times)

    @property
    def mad_seconds(self) -> float:
        med = self.median_seconds
        return statistics.median(abs(t - med) for t in self.times)

    @property
    def moved_bytes(self) -> int:
        return moved_bytes(self.kernel, self.array_bytes)

    @property
    def bandwidth_gbs(self) -> float:
        return self.moved_bytes / self.median_seconds / 1e9

    def row(self) -> dict:
        return {
            "kernel": self.kernel.value,
            "array_bytes": self.array_bytes,
            "reps": self.reps,
            "median_seconds": self.median_seconds,
            "bandwidth_gbs": self.bandwidth_gbs,
        }


def run_stream(kernel, array_len: int, reps: int, scalar: float = DEFAULT_SCALAR, *,
               warmup: int = 0, workers: int = 1, arrays: Optional[StreamArrays] = None) -> StreamResult:
    """Time ``reps`` passes of one kernel after ``warmup`` untimed passes.

    ``arrays`` injects initial contents (their length overrides ``array_len``).
    """
    kernel = StreamKernel(kernel)
    if arrays is None:
        if array_len < 1:
            raise ValueError("array length must be >= 1")
        arrays = StreamArrays.initial(array_len)
    elif len(arrays) < 1:
        raise ValueError("array length must be >= 1")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for _ in range(warmup):
        apply_kernel(kernel, arrays, scalar, workers)
    times, dots = [], []
    for _ in range(reps):
        t0 = time.perf_counter()
        v = apply_kernel(kernel, arrays, scalar, workers)
        times.append(time.perf_counter() - t0)
        if v is not None:
            dots.append(v)
    return StreamResult(kernel, len(arrays) * ELEMENT_BYTES, reps, tuple(times), tuple(dots),
                        arrays, warmup, scalar)


def expected_state(kernel, passes: int, scalar: float = DEFAULT_SCALAR,
                   start=(INIT_A, INIT_B, INIT_C)):
    """Per-element (a, b, c) after ``passes`` sequential applications,
    replayed on scalars."""
    kernel = StreamKernel(kernel)
    a, b, c = start
    for _ in range(passes):
        if kernel is StreamKernel.copy:
            c = a
        elif kernel is StreamKernel.mul:
            b = scalar * c
        elif kernel is StreamKernel.add:
            c = a + b
        elif kernel is StreamKernel.triad:
            a = b + scalar * c
    return a, b, c


def check_result(result: StreamResult) -> list[str]:
    """Compare the final arrays of a run started from the standard
    initialization against the replayed closed form; returns mismatches."""
    problems = []
    if result.final is None:
        return ["run kept no arrays"]
    a, b, c = expected_state(result.kernel, result.warmup + result.reps, result.scalar)
    for name, want in zip("abc", (a, b, c)):
        got = getattr(result.final, name)
        if not np.all(got == want):
            problems.append(f"{name}: expected {want!r} everywhere, max deviation "
                            f"{float(np.max(np.abs(got - want)))!r}")
    if result.kernel is StreamKernel.dot:
        want = a * b * result.array_len
        bad = [v for v in result.dot_values if v != want]
        if bad:
            problems.append(f"dot: expected {want!r}, got {bad[0]!r}")
    return problems


def stream_sweep(sizes: Sequence[int], reps: int, scalar: float = DEFAULT_SCALAR, *,
                 warmup: int = 0, workers: int = 1, kernels=KERNEL_ORDER) -> list[StreamResult]:
    """Run every kernel at every array size (bytes per array).

    Results are grouped by size in the given order, kernels in fixed order.
    Each run is validated against the closed form before its arrays are freed.
    """
    if not sizes:
        raise ValueError("at least one array size is required")
    out = []
    for size in sizes:
        n = int(size) // ELEMENT_BYTES
        if n < 1:
            raise ValueError(f"array size {size} bytes holds no fp64 element")
        for k in kernels:
            r = run_stream(k, n, reps, scalar, warmup=warmup, workers=workers)
            problems = check_result(r)
            if problems:
                raise StreamValidationError(f"{r.kernel} at {r.array_bytes} bytes: " + "; ".join(problems))
            # drop the arrays; only timings are kept across a sweep
            out.append(StreamResult(r.kernel, r.array_bytes, r.reps, r.times, r.dot_values,
                                    None, r.warmup, r.scalar))
    return out


class StreamValidationError(RuntimeError):
    pass


def bandwidth_ratio(run_a: Sequence[StreamResult], run_b: Sequence[StreamResult]) -> dict:
    """``{(kernel, array_bytes): bandwidth_a / bandwidth_b}``."""
    a = {(r.kernel.value, r.array_bytes): r.bandwidth_gbs for r in run_a}
    b = {(r.kernel.value, r.array_bytes): r.bandwidth_gbs for r in run_b}
    require_same_keys(a, b, "(kernel, array_bytes)")
    return {k: a[k] / b[k] for k in a}
