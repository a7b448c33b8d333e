import numpy as np
import pytest
from hypothesis import settings

from hpsem.basis import gll_rule
from hpsem.mesh import ElementKind

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


def nodal_interpolant(problem, mesh):
    """Global vector holding the exact solution at the GLL nodes of every finite standard element."""
    U = np.zeros(mesh.n_dof)
    for e in mesh.elements:
        if e.kind is not ElementKind.STANDARD or not e.finite:
            continue
        grids = [e.bounds[a, 0] + (gll_rule(d).nodes + 1.0) * 0.5 * e.sizes[a]
                 for a, d in enumerate(e.degrees)]
        p = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1)
        u = problem.solution(e.frame, p)[1]
        U[e.dofs] = u.reshape(-1, order="F")
    return U


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
