"""``sparsebench`` command line.

Exit codes: 0 success, 1 data or runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from ._parallel import default_workers
from .analysis import RECORD_COLUMNS, BenchRecord, cov_correlation, performance_profile, speedup_scatter
from .bench import SOLVE_COLUMNS, HarnessConfig, run_solvers, run_spmv_campaign, solve_row
from .errors import KeyMismatchError
from .ingest import MatrixMarketError, load_csr, write_mini_corpus
from .krylov import ALL_SOLVERS, SolverConfig
from .spmv import ALL_KERNELS, DimensionError, KernelId, SpmvConfig
from .stream import StreamValidationError, stream_sweep

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

STREAM_COLUMNS = ["kernel", "array_bytes", "reps", "median_seconds", "bandwidth_gbs",
                  "min_seconds", "max_seconds"]
PROFILE_COLUMNS = ["kernel", "theta", "fraction"]
COMPARE_COLUMNS = ["matrix", "kernel", "nnz", "seconds_a", "seconds_b", "speedup"]
COV_COLUMNS = ["matrix", "kernel", "cov", "speedup"]
REQUIRED_RECORD_COLUMNS = ["matrix", "kernel", "nnz", "median_seconds"]

_UNITS = {"": 1, "B": 1, "KB": 10**3, "MB": 10**6, "GB": 10**9,
          "KIB": 2**10, "MIB": 2**20, "GIB": 2**30}


class SchemaError(ValueError):
    pass


class DataError(RuntimeError):
    pass


def parse_size(text: str) -> int:
    """``"64MB"`` -> 64_000_000, ``"1MiB"`` -> 1_048_576, ``"4096"`` -> 4096."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([A-Za-z]*)\s*", text)
    if not m or m.group(2).upper() not in _UNITS:
        raise argparse.ArgumentTypeError(f"invalid size {text!r}")
    value = int(float(m.group(1)) * _UNITS[m.group(2).upper()])
    if value < 8:
        raise argparse.ArgumentTypeError(f"size {text!r} is smaller than one fp64 element")
    return value


def _size_list(text: str) -> list[int]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty size list")
    return [parse_size(p) for p in parts]


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _non_negative(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _kernel_list(text: str) -> list[KernelId]:
    if text == "all":
        return list(ALL_KERNELS)
    try:
        return [KernelId(k.strip()) for k in text.split(",") if k.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- output -------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_table(rows: list[dict], columns: Sequence[str], out, fmt: str = "csv",
                meta: Optional[dict] = None) -> None:
    """CSV with a ``#`` comment line of run metadata, or the JSON mirror."""
    meta = meta or {}
    if fmt == "json":
        doc = {"meta": meta, "columns": list(columns),
               "rows": [{c: _json_value(r.get(c)) for c in columns} for r in rows]}
        out.write(json.dumps(doc, indent=1) + "\n")
        return
    if meta:
        out.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _open_out(path: Optional[str]):
    if path in (None, "-"):
        return _NoClose(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


class _NoClose:
    def __init__(self, f):
        self.f = f

    def __enter__(self):
        return self.f

    def __exit__(self, *exc):
        self.f.flush()


def read_table(path, required: Sequence[str]) -> list[dict]:
    """Read a CSV written by :func:`write_table`; ``#`` lines are skipped.

    Raises :class:`SchemaError` naming a missing column or the line of a
    malformed row.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: no header row")
    header = next(csv.reader([lines[0][1]]))
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing required column '{col}'")
    rows = []
    for lineno, ln in lines[1:]:
        cells = next(csv.reader([ln]))
        if len(cells) != len(header):
            raise SchemaError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(cells)}")
        row = dict(zip(header, cells))
        row["_line"] = lineno
        rows.append(row)
    return rows


def read_records(path) -> list[BenchRecord]:
    out = []
    for row in read_table(path, REQUIRED_RECORD_COLUMNS):
        try:
            out.append(BenchRecord.from_row({k: v for k, v in row.items() if k in RECORD_COLUMNS and v != ""}))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: line {row['_line']}: {exc}") from None
    return out


# -- commands -----------------------------------------------------------------

def _harness(args) -> HarnessConfig:
    return HarnessConfig(warmup=args.warmup, reps=args.reps, workers=args.workers,
                         seed=args.seed, min_nnz=getattr(args, "min_nnz", 0),
                         real_only=getattr(args, "real_only", False), output_format=args.format)


def cmd_stream(args) -> int:
    cfg = _harness(args)
    results = stream_sweep(args.sizes, cfg.reps, args.scalar, warmup=cfg.warmup, workers=cfg.workers)
    rows = []
    for r in results:
        row = r.row()
        row.update(min_seconds=r.min_seconds, max_seconds=r.max_seconds)
        rows.append(row)
    with _open_out(args.out) as out:
        write_table(rows, STREAM_COLUMNS, out, cfg.output_format, {"command": "stream", **cfg.protocol()})
    return EXIT_OK


def cmd_spmv(args) -> int:
    cfg = _harness(args)
    spmv_cfg = SpmvConfig(workers=cfg.workers, slice_size=args.slice_size, ell_max_blowup=args.ell_max_blowup)
    records, problems = run_spmv_campaign(args.corpus, args.kernels, cfg, spmv_cfg)
    for p in problems:
        print(f"warning: {p}", file=sys.stderr)
    if not records:
        print(f"error: no benchmarkable matrices in {args.corpus}", file=sys.stderr)
        return EXIT_FAILURE
    with _open_out(args.out) as out:
        write_table([r.row() for r in records], RECORD_COLUMNS, out, cfg.output_format,
                    {"command": "spmv", **cfg.protocol(), "min_nnz": cfg.min_nnz})
    return EXIT_OK


def cmd_solve(args) -> int:
    A = load_csr(args.matrix)
    solvers = list(ALL_SOLVERS) if args.solver == "all" else [args.solver]
    base = SolverConfig(solvers[0], args.tol, args.max_iters, args.restart, args.kernels[0],
                        spmv=SpmvConfig(workers=args.workers))
    results = run_solvers(A, solvers, base, reps=args.reps)
    name = Path(args.matrix).stem
    rows = [solve_row(name, r) for r in results.values()]
    meta = {"command": "solve", "tol": args.tol, "max_iters": args.max_iters, "restart": args.restart,
            "reps": args.reps, "statistic": "median", "workers": args.workers}
    with _open_out(args.out) as out:
        write_table(rows, SOLVE_COLUMNS, out, args.format, meta)
    if args.residuals:
        hist = [{"solver": s, "iteration": i, "residual": float(v)}
                for s, r in results.items() for i, v in enumerate(r.residual_history)]
        with open(args.residuals, "w", encoding="utf-8", newline="") as fh:
            write_table(hist, ["solver", "iteration", "residual"], fh, "csv")
    return EXIT_OK


def _filter_nnz(records, min_nnz):
    return [r for r in records if r.nnz >= min_nnz]


def cmd_profile(args) -> int:
    records = _filter_nnz(read_records(args.records), args.min_nnz)
    if not records:
        raise DataError("no records left after filtering")
    prof = performance_profile(records)
    with _open_out(args.out) as out:
        write_table(prof.table(args.thetas), PROFILE_COLUMNS, out, args.format,
                    {"command": "profile", "problems": len(prof.problems), "kernels": len(prof.kernels)})
    return EXIT_OK


def cmd_compare(args) -> int:
    a = _filter_nnz(read_records(args.records_a), args.min_nnz)
    b = _filter_nnz(read_records(args.records_b), args.min_nnz)
    if args.by_cov:
        stats = {r.matrix: r.cov for r in a}
        missing = sorted(m for m, c in stats.items() if math.isnan(c))
        if missing:
            raise DataError(f"{args.records_a}: no cov value for matrices {missing}")
        pts = cov_correlation(a, b, stats)
        rows = [dataclasses.asdict(p) for p in pts]
        cols = COV_COLUMNS
    else:
        rows = [p.row() for p in speedup_scatter(a, b)]
        cols = COMPARE_COLUMNS
    with _open_out(args.out) as out:
        write_table(rows, cols, out, args.format, {"command": "compare"})
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    paths = write_mini_corpus(args.directory, seed=args.seed)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsebench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, timing=True):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--out", help="output file (default: stdout)")
        if timing:
            sp.add_argument("--warmup", type=_non_negative, default=2)
            sp.add_argument("--reps", type=_positive, default=10)
            sp.add_argument("--workers", type=_positive, default=default_workers())
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("stream", help="STREAM bandwidth sweep")
    sp.add_argument("--sizes", type=_size_list, default=[parse_size("64MB")],
                    help="comma-separated bytes per array, e.g. 1MB,64MB")
    sp.add_argument("--scalar", type=float, default=0.4)
    common(sp)
    sp.set_defaults(func=cmd_stream)

    sp = sub.add_parser("spmv", help="time SpMV kernels over a Matrix Market corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--kernels", type=_kernel_list, default=list(ALL_KERNELS))
    sp.add_argument("--min-nnz", type=_non_negative, default=0)
    sp.add_argument("--real-only", action="store_true")
    sp.add_argument("--slice-size", type=_positive, default=32)
    sp.add_argument("--ell-max-blowup", type=float, default=8.0)
    common(sp)
    sp.set_defaults(func=cmd_spmv)

    sp = sub.add_parser("solve", help="run Krylov solvers on one matrix with b = A*1")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--solver", choices=[s.value for s in ALL_SOLVERS] + ["all"], default="cg")
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--max-iters", type=_positive, default=1000)
    sp.add_argument("--restart", type=_positive, default=30)
    sp.add_argument("--kernels", type=_kernel_list, default=[KernelId.coo_balanced],
                    help="SpMV kernel used inside the solver")
    sp.add_argument("--residuals", help="write per-iteration residual norms here")
    common(sp)
    sp.set_defaults(func=cmd_solve, reps=1)

    sp = sub.add_parser("profile", help="performance profile from an spmv record file")
    sp.add_argument("records")
    sp.add_argument("--thetas", type=lambda s: [float(t) for t in s.split(",")],
                    help="evaluate at these ratios instead of every step")
    sp.add_argument("--min-nnz", type=_non_negative, default=0)
    common(sp, timing=False)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("compare", help="per (matrix, kernel) speedup of run A over run B")
    sp.add_argument("records_a")
    sp.add_argument("records_b")
    sp.add_argument("--by-cov", action="store_true", help="join with nnz-per-row coefficient of variation")
    sp.add_argument("--min-nnz", type=_non_negative, default=0)
    common(sp, timing=False)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("gen-corpus", help="write the bundled ten-matrix test corpus")
    sp.add_argument("directory")
    sp.add_argument("--seed", type=int, default=2020)
    sp.set_defaults(func=cmd_gen_corpus)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MatrixMarketError, SchemaError, KeyMismatchError, DimensionError, DataError,
            StreamValidationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
