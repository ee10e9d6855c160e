import os

import pytest

from bbelab.collision import CollisionContext, linearized_matrix
from bbelab.equilibrium import EquilibriumParams
from bbelab.spectraldiag import KernelBasis
from bbelab.vgrid import build_grid


@pytest.fixture(scope="session", autouse=True)
def _cache_dir(tmp_path_factory):
    if "BBELAB_CACHE_DIR" not in os.environ:
        os.environ["BBELAB_CACHE_DIR"] = str(tmp_path_factory.mktemp("bbelab-cache"))


@pytest.fixture(scope="session")
def small():
    """9^3 grid on [-8, 8]^3 at lambda = 1, T = 1."""
    grid = build_grid(9, 8.0)
    params = EquilibriumParams(1.0, 1.0)
    ctx = CollisionContext(grid, 1.0)
    Lop = linearized_matrix(ctx, params)
    return grid, params, ctx, Lop, KernelBasis(grid, params)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for r in sorted(RESULTS, key=lambda r: r.number):
            terminalreporter.write_line(r.line())
