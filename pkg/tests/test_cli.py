import csv
import json
import shutil

import pytest

from conftest import MINICORPUS, MM
from sparsebench.analysis import RECORD_COLUMNS
from sparsebench.bench import SOLVE_COLUMNS, HarnessConfig
from sparsebench.cli import main, parse_size, read_records
from sparsebench.formats import csr_to_coo
from sparsebench.ingest import gen_laplacian_2d, write_matrix_market
from sparsebench.spmv import ALL_KERNELS


def rows_of(path):
    body = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(body))


def test_parse_size():
    assert parse_size("1MB") == 1_000_000
    assert parse_size("1MiB") == 2**20
    assert parse_size("2kb") == 2000
    assert parse_size("4096") == 4096


def test_harness_defaults_and_validation():
    cfg = HarnessConfig()
    assert (cfg.warmup, cfg.reps) == (2, 10) and cfg.workers >= 1
    with pytest.raises(ValueError):
        HarnessConfig(reps=0)
    with pytest.raises(ValueError):
        HarnessConfig(warmup=-1)


def test_stream_rows_and_json_parity(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["stream", "--sizes", "8KB,16KiB", "--reps", "10", "--warmup", "1", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# command=stream warmup=1 reps=10 statistic=median")
    rows = rows_of(out)
    assert len(rows) == 10
    assert [r["array_bytes"] for r in rows] == ["8000"] * 5 + ["16384"] * 5
    jout = tmp_path / "s.json"
    assert main(["stream", "--sizes", "8KB,16KiB", "--reps", "3", "--format", "json", "--out", str(jout)]) == 0
    doc = json.loads(jout.read_text())
    assert doc["meta"]["reps"] == 3 and len(doc["rows"]) == 10
    assert all(list(r) == list(rows[0]) for r in doc["rows"])


@pytest.mark.parametrize("argv", [
    ["stream", "--reps", "0"],
    ["stream", "--sizes", "12 parsecs"],
    ["stream", "--sizes", ","],
    ["spmv"],
    ["spmv", "--corpus", "x", "--kernels", "bogus"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def small_corpus(tmp_path):
    d = tmp_path / "corpus"
    d.mkdir()
    for name in ("arrow_800", "lap2d_16", "uniform_500"):
        shutil.copy(MINICORPUS / f"{name}.mtx", d)
    return d


def test_spmv_campaign(tmp_path):
    corpus = small_corpus(tmp_path)
    shutil.copy(MM / "bad_token.mtx", corpus / "zz_broken.mtx")
    out = tmp_path / "r.csv"
    argv = ["spmv", "--corpus", str(corpus), "--reps", "2", "--warmup", "0", "--out", str(out)]
    assert main(argv) == 0
    rows = rows_of(out)
    assert list(rows[0]) == RECORD_COLUMNS
    assert len(rows) == 21
    unsupported = {(r["matrix"], r["kernel"]) for r in rows if r["status"] == "unsupported"}
    assert unsupported == {("arrow_800", "ell")}
    assert all(r["median_seconds"] == "inf" for r in rows if r["status"] != "ok")
    # same config, same record order
    out2 = tmp_path / "r2.csv"
    assert main(argv[:-1] + [str(out2)]) == 0
    key = lambda rs: [(r["matrix"], r["kernel"], r["nnz"], r["status"]) for r in rs]
    assert key(rows_of(out2)) == key(rows)


def test_spmv_filters(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["spmv", "--corpus", str(MINICORPUS), "--reps", "1", "--warmup", "0",
                 "--min-nnz", "10000", "--kernels", "csr_classical,coo_balanced", "--out", str(out)]) == 0
    rows = rows_of(out)
    assert rows and all(int(r["nnz"]) >= 10000 for r in rows)
    assert {r["kernel"] for r in rows} == {"csr_classical", "coo_balanced"}
    assert "min_nnz=10000" in out.read_text().splitlines()[0]
    # the large-matrix threshold used for published profiles leaves nothing here
    assert main(["spmv", "--corpus", str(MINICORPUS), "--min-nnz", "100000", "--reps", "1"]) == 1


def test_spmv_empty_corpus(tmp_path):
    assert main(["spmv", "--corpus", str(tmp_path)]) == 1
    assert main(["spmv", "--corpus", str(tmp_path / "missing")]) == 1


def write_lap(tmp_path):
    path = tmp_path / "lap64.mtx"
    write_matrix_market(csr_to_coo(gen_laplacian_2d(8)), path)
    return path


def test_solve(tmp_path):
    mtx = write_lap(tmp_path)
    out, hist = tmp_path / "s.csv", tmp_path / "h.csv"
    assert main(["solve", "--matrix", str(mtx), "--solver", "cg", "--tol", "1e-10",
                 "--out", str(out), "--residuals", str(hist)]) == 0
    (row,) = rows_of(out)
    assert list(row)[:len(SOLVE_COLUMNS)] == SOLVE_COLUMNS
    assert row["matrix"] == "lap64" and row["converged"] == "True" and float(row["final_relres"]) <= 1e-10
    h = rows_of(hist)
    assert len(h) == int(row["iterations"]) + 1


def test_solve_all(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["solve", "--matrix", str(write_lap(tmp_path)), "--solver", "all", "--out", str(out)]) == 0
    assert [r["solver"] for r in rows_of(out)] == ["cg", "fcg", "bicg", "cgs", "gmres"]


def test_solve_rectangular(tmp_path, capsys):
    assert main(["solve", "--matrix", str(MINICORPUS / "rect_600x900.mtx")]) == 1
    assert "square" in capsys.readouterr().err


def fixture_records(path, times=None):
    times = times or {"k1": [1, 2, 4], "k2": [2, 1, 1]}
    with open(path, "w", newline="") as fh:
        fh.write("# hand-made records\n")
        w = csv.writer(fh)
        w.writerow(["matrix", "kernel", "nnz", "median_seconds"])
        for k, ts in times.items():
            for i, t in enumerate(ts):
                w.writerow([f"p{i}", k, 1000, t])
    return path


def test_profile_fixture(tmp_path):
    rec = fixture_records(tmp_path / "r.csv")
    out = tmp_path / "p.csv"
    assert main(["profile", str(rec), "--thetas", "1,2", "--out", str(out)]) == 0
    got = {(r["kernel"], float(r["theta"])): float(r["fraction"]) for r in rows_of(out)}
    assert got == {("k1", 1.0): 1 / 3, ("k1", 2.0): 2 / 3, ("k2", 1.0): 2 / 3, ("k2", 2.0): 1.0}
    out2 = tmp_path / "p2.csv"
    assert main(["profile", str(rec), "--thetas", "1,2", "--out", str(out2)]) == 0
    assert out.read_bytes() == out2.read_bytes()


def test_compare(tmp_path):
    rec = fixture_records(tmp_path / "r.csv")
    out = tmp_path / "c.csv"
    assert main(["compare", str(rec), str(rec), "--out", str(out)]) == 0
    assert {r["speedup"] for r in rows_of(out)} == {"1.0"}
    slow = fixture_records(tmp_path / "slow.csv", {"k1": [2, 4, 8], "k2": [4, 2, 2]})
    assert main(["compare", str(rec), str(slow), "--out", str(out)]) == 0
    assert {r["speedup"] for r in rows_of(out)} == {"2.0"}


def test_compare_by_cov_on_campaign_output(tmp_path):
    rec = tmp_path / "r.csv"
    assert main(["spmv", "--corpus", str(small_corpus(tmp_path)), "--reps", "1", "--warmup", "0",
                 "--out", str(rec)]) == 0
    out = tmp_path / "c.csv"
    assert main(["compare", str(rec), str(rec), "--by-cov", "--out", str(out)]) == 0
    rows = rows_of(out)
    covs = [float(r["cov"]) for r in rows]
    assert covs == sorted(covs) and {r["speedup"] for r in rows} == {"1.0"}
    # hand-made records carry no cov column
    assert main(["compare", str(fixture_records(tmp_path / "f.csv")), str(tmp_path / "f.csv"), "--by-cov"]) == 1


def test_schema_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("matrix,kernel,nnz\np0,k1,10\n")
    assert main(["profile", str(bad)]) == 1
    assert "median_seconds" in capsys.readouterr().err
    bad.write_text("# c\nmatrix,kernel,nnz,median_seconds\np0,k1,10,1.0\np1,k1,10\n")
    assert main(["profile", str(bad)]) == 1
    assert "line 4" in capsys.readouterr().err
    bad.write_text("matrix,kernel,nnz,median_seconds\np0,k1,ten,1.0\n")
    assert main(["profile", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_read_records_round_trip(tmp_path):
    rec = tmp_path / "r.csv"
    assert main(["spmv", "--corpus", str(small_corpus(tmp_path)), "--reps", "1", "--warmup", "0",
                 "--out", str(rec)]) == 0
    records = read_records(rec)
    assert len(records) == 3 * len(ALL_KERNELS)
    assert {r.status for r in records} == {"ok", "unsupported"}


def test_gen_corpus(tmp_path, capsys):
    assert main(["gen-corpus", str(tmp_path / "c")]) == 0
    assert len(list((tmp_path / "c").glob("*.mtx"))) == 10
