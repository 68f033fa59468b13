from pathlib import Path

import numpy as np
import pytest

from sparsebench.formats import coo_from_triplets, coo_to_csr

DATA = Path(__file__).parent / "data"
MINICORPUS = DATA / "minicorpus"
MM = DATA / "mm"

CANONICAL_TRIPLETS = [(0, 0, 2.0), (2, 2, 5.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 4.0)]

# acceptance verdicts collected during the run, echoed in the terminal summary
VERDICTS: list[str] = []


def canonical_coo():
    return coo_from_triplets(CANONICAL_TRIPLETS, 3, 3)


def canonical_csr():
    return coo_to_csr(canonical_coo())


@pytest.fixture
def canonical():
    return canonical_csr()


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def random_csr(rng, num_rows, num_cols, density):
    """Random matrix with iid entry positions; values in [-1, 1)."""
    from sparsebench.formats import coo_from_arrays

    nnz = int(round(density * num_rows * num_cols))
    flat = rng.choice(num_rows * num_cols, size=nnz, replace=False) if nnz else np.zeros(0, dtype=np.int64)
    rows, cols = np.divmod(flat, num_cols)
    vals = rng.uniform(-1.0, 1.0, nnz)
    return coo_to_csr(coo_from_arrays(rows, cols, vals, num_rows, num_cols))
