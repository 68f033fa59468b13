"""Unpreconditioned Krylov solvers built from SpMV and level-1 vector kernels.

Short-recurrence methods (CG, FCG, BiCG, CGS) and restarted GMRES with
classical Gram-Schmidt.  Each solve records the time spent in SpMV, in
orthogonalization (inner products, norms and Gram-Schmidt) and in vector
updates (axpy-style work).
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, NamedTuple, Optional, Union

import numpy as np

from .errors import require_same_keys
from .formats import CsrMatrix
from .spmv import DEFAULT_CONFIG, DimensionError, KernelId, SpmvConfig, SpmvOperator

COMPONENTS = ("spmv", "orthogonalization", "vector_updates")
BREAKDOWN_TOL = 1e-30
HAPPY_TOL = 1e-12


class SolverId(str, Enum):
    cg = "cg"
    fcg = "fcg"
    bicg = "bicg"
    cgs = "cgs"
    gmres = "gmres"

    def __str__(self):
        return self.value


ALL_SOLVERS = tuple(SolverId)


@dataclass(frozen=True)
class SolverConfig:
    solver: SolverId = SolverId.cg
    rel_tol: float = 1e-8
    max_iters: int = 1000
    gmres_restart: int = 30
    kernel: KernelId = KernelId.coo_balanced
    reorthogonalize: bool = False
    breakdown_tol: float = BREAKDOWN_TOL
    spmv: SpmvConfig = DEFAULT_CONFIG

    def __post_init__(self):
        object.__setattr__(self, "solver", SolverId(self.solver))
        object.__setattr__(self, "kernel", KernelId(self.kernel))
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.gmres_restart < 1:
            raise ValueError("gmres_restart must be >= 1")


@dataclass
class SolveResult:
    x: np.ndarray
    residual_history: np.ndarray
    iterations: int
    converged: bool
    termination: str  # "converged" | "max_iters" | "breakdown"
    breakdown: Optional[str] = None
    component_times: dict = field(default_factory=lambda: dict.fromkeys(COMPONENTS, 0.0))
    seconds_total: float = 0.0
    solver: str = ""
    kernel: str = ""
    cycle_starts: list = field(default_factory=lambda: [0])

    @property
    def initial_residual(self) -> float:
        return float(self.residual_history[0])

    @property
    def final_residual(self) -> float:
        return float(self.residual_history[-1])

    @property
    def final_relres(self) -> float:
        r0 = self.initial_residual
        return self.final_residual / r0 if r0 > 0 else 0.0

    @property
    def spmv_fraction(self) -> float:
        total = sum(self.component_times.values())
        return self.component_times["spmv"] / total if total > 0 else 0.0


_SPLITTER = 134217729.0  # 2**27 + 1


def _two_product(a: np.ndarray, b: np.ndarray):
    """``a*b == p + e`` exactly (Dekker), barring overflow."""
    p = a * b
    t = _SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    e = al * bl - (((p - ah * bh) - al * bh) - ah * bl)
    return p, e


def accurate_residual(A: CsrMatrix, x, b) -> np.ndarray:
    """``b - A @ x`` with every component correctly rounded.

    Products are split into exact (value, error) pairs and each row is
    summed with :func:`math.fsum`, so the result does not depend on
    summation order even at the rounding floor of a converged solve.
    """
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p, e = _two_product(A.values, x[A.col_idx])
    p, e = (-p).tolist(), (-e).tolist()
    bl = b.tolist()
    rp = A.row_ptr.tolist()
    out = np.empty(A.dims.num_rows)
    for i in range(A.dims.num_rows):
        lo, hi = rp[i], rp[i + 1]
        out[i] = math.fsum([bl[i], *p[lo:hi], *e[lo:hi]]) if hi > lo else bl[i]
    return out


class GramSchmidtResult(NamedTuple):
    coefficients: np.ndarray
    vector: np.ndarray
    norm: float
    happy_breakdown: bool


def classical_gram_schmidt(basis, w, reorthogonalize: bool = False,
                           happy_tol: float = HAPPY_TOL) -> GramSchmidtResult:
    """Orthogonalize ``w`` against the orthonormal rows of ``basis``.

    All projection coefficients are taken against the original ``w`` in one
    pass.  A resulting norm at or below ``happy_tol * ||w||`` means ``w`` lies
    in the span; this is flagged, not raised.
    """
    w = np.asarray(w, dtype=np.float64)
    V = np.asarray(basis, dtype=np.float64).reshape(-1, len(w))
    wnorm = float(np.linalg.norm(w))
    if len(V) == 0:
        return GramSchmidtResult(np.zeros(0), w.copy(), wnorm, wnorm == 0.0)
    h = V @ w
    v = w - V.T @ h
    if reorthogonalize:
        h2 = V @ v
        v -= V.T @ h2
        h = h + h2
    norm = float(np.linalg.norm(v))
    return GramSchmidtResult(h, v, norm, norm <= happy_tol * wnorm)


class _Timers:
    def __init__(self):
        self.times = dict.fromkeys(COMPONENTS, 0.0)

    @contextmanager
    def __call__(self, key):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.times[key] += time.perf_counter() - t0


class _Run:
    """Bookkeeping shared by all solvers."""

    def __init__(self, op: SpmvOperator, b, x0, cfg: SolverConfig, callback):
        self.op = op
        self.b = b
        self.cfg = cfg
        self.callback = callback
        self.t = _Timers()
        self.x = np.array(x0, dtype=np.float64, copy=True)
        with self.t("spmv"):
            self.r = accurate_residual(op.csr, self.x, b)
        self.r0 = float(np.linalg.norm(self.r))
        self.history = [self.r0]
        self.breakdown = None
        self.cycle_starts = [0]

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    def target(self) -> float:
        return self.cfg.rel_tol * self.r0

    def record(self, res: float, x=None) -> None:
        self.history.append(res)
        if self.callback is not None:
            self.callback(self.iterations, x, res)

    def confirm(self, r) -> bool:
        """Recompute ``r = b - A x`` accurately in place, make it the last
        recorded residual, and report whether it meets the tolerance."""
        with self.t("spmv"):
            r[:] = accurate_residual(self.op.csr, self.x, self.b)
        with self.t("orthogonalization"):
            res = float(np.linalg.norm(r))
        self.history[-1] = res
        return res <= self.target()

    def fail(self, name: str, value: float) -> bool:
        if abs(value) < self.cfg.breakdown_tol:
            self.breakdown = f"{name}={value!r}"
            return True
        return False

    def done(self) -> bool:
        return self.iterations >= self.cfg.max_iters

    def result(self, wall: float) -> SolveResult:
        final = self.history[-1]
        converged = final <= self.target()
        if converged:
            term = "converged"
        elif self.breakdown:
            term = "breakdown"
        else:
            term = "max_iters"
        return SolveResult(
            x=self.x,
            residual_history=np.asarray(self.history),
            iterations=self.iterations,
            converged=converged,
            termination=term,
            breakdown=self.breakdown,
            component_times=dict(self.t.times),
            seconds_total=wall,
            solver=self.cfg.solver.value,
            kernel=self.op.kernel.value,
            cycle_starts=list(self.cycle_starts),
        )


def _cg(run: _Run, flexible: bool = False) -> None:
    t, op, x, r = run.t, run.op, run.x, run.r
    p = r.copy()
    q = np.empty_like(r)
    r_old = np.empty_like(r) if flexible else None
    with t("orthogonalization"):
        rho = float(r @ r)
    while not run.done():
        with t("spmv"):
            op.apply(p, q)
        with t("orthogonalization"):
            pq = float(p @ q)
        if run.fail("p.Ap", pq):
            run.confirm(r)
            return
        alpha = rho / pq
        with t("vector_updates"):
            if flexible:
                np.copyto(r_old, r)
            x += alpha * p
            r -= alpha * q
        with t("orthogonalization"):
            rho_new = float(r @ r)
            res = math.sqrt(rho_new)
        run.record(res, x)
        if res <= run.target() or run.done():
            if run.confirm(r) or run.done():
                return
            with t("orthogonalization"):
                rho_new = float(r @ r)
            if flexible:
                # residual was replaced; restart the direction
                with t("vector_updates"):
                    np.copyto(p, r)
                rho = rho_new
                continue
        if flexible:
            with t("orthogonalization"):
                num = float(r @ (r - r_old))
        else:
            num = rho_new
        if run.fail("rho", rho):
            run.confirm(r)
            return
        beta = num / rho
        with t("vector_updates"):
            p *= beta
            p += r
        rho = rho_new


def _bicg(run: _Run) -> None:
    t, op, x, r = run.t, run.op, run.x, run.r
    rt = r.copy()
    p, pt = r.copy(), rt.copy()
    q, qt = np.empty_like(r), np.empty_like(r)
    with t("orthogonalization"):
        rho = float(rt @ r)
    if run.fail("rho", rho):
        return
    while not run.done():
        with t("spmv"):
            op.apply(p, q)
            op.rmatvec(pt, qt)
        with t("orthogonalization"):
            sigma = float(pt @ q)
        if run.fail("sigma", sigma):
            run.confirm(r)
            return
        alpha = rho / sigma
        with t("vector_updates"):
            x += alpha * p
            r -= alpha * q
            rt -= alpha * qt
        with t("orthogonalization"):
            res = float(np.linalg.norm(r))
        run.record(res, x)
        if res <= run.target() or run.done():
            if run.confirm(r) or run.done():
                return
        with t("orthogonalization"):
            rho_new = float(rt @ r)
        if run.fail("rho", rho_new):
            run.confirm(r)
            return
        beta = rho_new / rho
        with t("vector_updates"):
            p *= beta
            p += r
            pt *= beta
            pt += rt
        rho = rho_new


def _cgs(run: _Run) -> None:
    t, op, x, r = run.t, run.op, run.x, run.r
    rt = r.copy()
    u, p, q = np.empty_like(r), np.empty_like(r), np.zeros_like(r)
    vhat, qhat = np.empty_like(r), np.empty_like(r)
    rho_prev = None
    while not run.done():
        with t("orthogonalization"):
            rho = float(rt @ r)
        if run.fail("rho", rho):
            run.confirm(r)
            return
        with t("vector_updates"):
            if rho_prev is None:
                np.copyto(u, r)
                np.copyto(p, u)
            else:
                beta = rho / rho_prev
                np.multiply(q, beta, out=u)
                u += r
                p *= beta
                p += q
                p *= beta
                p += u
        with t("spmv"):
            op.apply(p, vhat)
        with t("orthogonalization"):
            sigma = float(rt @ vhat)
        if run.fail("sigma", sigma):
            run.confirm(r)
            return
        alpha = rho / sigma
        with t("vector_updates"):
            np.multiply(vhat, -alpha, out=q)
            q += u
            uhat = u + q
            x += alpha * uhat
        with t("spmv"):
            op.apply(uhat, qhat)
        with t("vector_updates"):
            r -= alpha * qhat
        with t("orthogonalization"):
            res = float(np.linalg.norm(r))
        run.record(res, x)
        if res <= run.target() or run.done():
            if run.confirm(r) or run.done():
                return
        rho_prev = rho


def _givens(a: float, b: float):
    if b == 0.0:
        return 1.0, 0.0
    h = math.hypot(a, b)
    return a / h, b / h


def _gmres(run: _Run) -> None:
    t, op, x, r = run.t, run.op, run.x, run.r
    n = len(r)
    m = run.cfg.gmres_restart
    V = np.empty((m + 1, n))
    H = np.zeros((m + 1, m))
    cs, sn = np.zeros(m), np.zeros(m)
    g = np.zeros(m + 1)
    beta = run.r0
    while True:
        if beta == 0.0:
            return
        with t("vector_updates"):
            np.multiply(r, 1.0 / beta, out=V[0])
        H.fill(0.0)
        g.fill(0.0)
        g[0] = beta
        k = 0
        for j in range(m):
            with t("spmv"):
                op.apply(V[j], V[j + 1])
            with t("orthogonalization"):
                gs = classical_gram_schmidt(V[: j + 1], V[j + 1], run.cfg.reorthogonalize)
            H[: j + 1, j] = gs.coefficients
            H[j + 1, j] = gs.norm
            with t("vector_updates"):
                if not gs.happy_breakdown:
                    np.multiply(gs.vector, 1.0 / gs.norm, out=V[j + 1])
                for i in range(j):
                    hi, hi1 = H[i, j], H[i + 1, j]
                    H[i, j] = cs[i] * hi + sn[i] * hi1
                    H[i + 1, j] = -sn[i] * hi + cs[i] * hi1
                cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
                H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
                H[j + 1, j] = 0.0
                g[j + 1] = -sn[j] * g[j]
                g[j] = cs[j] * g[j]
            k = j + 1
            if run.fail("hessenberg diagonal", H[j, j]):
                k = j
                break
            run.record(abs(g[j + 1]))
            if gs.happy_breakdown or abs(g[j + 1]) <= run.target() or run.done():
                break
        with t("vector_updates"):
            y = np.zeros(k)
            for i in range(k - 1, -1, -1):
                y[i] = (g[i] - H[i, i + 1 : k] @ y[i + 1 :]) / H[i, i]
            x += V[:k].T @ y
        if run.breakdown and k == 0:
            run.confirm(r)
            return
        ok = run.confirm(r)
        if run.callback is not None:
            run.callback(run.iterations, x, run.history[-1])
        if ok or run.done() or run.breakdown:
            return
        beta = run.history[-1]
        run.cycle_starts.append(run.iterations)


_SOLVERS: dict[SolverId, Callable[[_Run], None]] = {
    SolverId.cg: _cg,
    SolverId.fcg: lambda run: _cg(run, flexible=True),
    SolverId.bicg: _bicg,
    SolverId.cgs: _cgs,
    SolverId.gmres: _gmres,
}


def solve(A: Union[CsrMatrix, SpmvOperator], b, x0=None, cfg: SolverConfig = SolverConfig(),
          callback: Optional[Callable] = None) -> SolveResult:
    """Solve ``A x = b`` with the solver and SpMV kernel named in ``cfg``.

    ``callback(iteration, x, residual_norm)`` is invoked after every
    iteration; GMRES passes ``x=None`` inside a restart cycle.

    The last entry of ``residual_history`` is always the recomputed
    ``||b - A x||``; earlier entries are the solver's recurrence estimates.
    """
    start = time.perf_counter()
    op = A if isinstance(A, SpmvOperator) else SpmvOperator(A, cfg.kernel, cfg.spmv)
    nrows, ncols = op.shape
    if nrows != ncols:
        raise DimensionError(f"solver needs a square matrix, got {nrows}x{ncols}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (nrows,):
        raise DimensionError(f"b has shape {b.shape}, expected ({nrows},)")
    x0 = np.zeros(nrows) if x0 is None else np.asarray(x0, dtype=np.float64)
    if x0.shape != (nrows,):
        raise DimensionError(f"x0 has shape {x0.shape}, expected ({nrows},)")
    run = _Run(op, b, x0, cfg, callback)
    if run.r0 > 0:
        _SOLVERS[cfg.solver](run)
    return run.result(time.perf_counter() - start)


def solver_speedup_report(results_a: Mapping, results_b: Mapping) -> list[dict]:
    """Per ``(problem, solver)`` speedup of run ``a`` over run ``b``.

    Times are the sum of the recorded components, so a uniform per-component
    speedup carries over unchanged to the total.
    """
    require_same_keys(results_a, results_b, "(problem, solver)")
    rows = []
    for key in sorted(results_a, key=lambda k: tuple(map(str, k))):
        problem, solver = key
        ta = results_a[key].component_times
        tb = results_b[key].component_times
        sa, sb = sum(ta.values()), sum(tb.values())
        rows.append({
            "problem": problem,
            "solver": str(solver),
            "seconds_a": sa,
            "seconds_b": sb,
            "speedup": sb / sa if sa > 0 else math.inf,
            "spmv_fraction_a": ta["spmv"] / sa if sa > 0 else 0.0,
            "spmv_fraction_b": tb["spmv"] / sb if sb > 0 else 0.0,
        })
    return rows
