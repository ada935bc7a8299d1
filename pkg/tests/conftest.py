import numpy as np
import pytest

from hpstokes.mesh import Mesh, make_l_shape_mesh
from hpstokes.problems import StokesProblem
from hpstokes.space import distribute_dofs
from hpstokes.stokes import solve_problem


def polynomial_problem(scale=1.0):
    """Divergence-free Q3 velocity and Q2 pressure with zero mean on the L-shape.

    u = curl of x^3 y^3, p = x^2 y^2 - 1/9, f = -lap u + grad p.
    """

    def velocity(pts):
        x, y = pts[:, 0], pts[:, 1]
        return scale * np.column_stack([3 * x**3 * y**2, -3 * x**2 * y**3])

    def gradient(pts):
        x, y = pts[:, 0], pts[:, 1]
        g = np.empty((len(pts), 2, 2))
        g[:, 0, 0] = 9 * x**2 * y**2
        g[:, 0, 1] = 6 * x**3 * y
        g[:, 1, 0] = -6 * x * y**3
        g[:, 1, 1] = -9 * x**2 * y**2
        return scale * g

    def pressure(pts):
        x, y = pts[:, 0], pts[:, 1]
        return scale * (x**2 * y**2 - 1.0 / 9.0)

    def force(pts):
        x, y = pts[:, 0], pts[:, 1]
        return scale * np.column_stack([-16 * x * y**2 - 6 * x**3, 6 * y**3 + 20 * x**2 * y])

    return StokesProblem(nu=1.0, force=force, dirichlet=velocity, velocity=velocity,
                         velocity_gradient=gradient, pressure=pressure, name="poly")


def uniform_space(mesh, p):
    return distribute_dofs(mesh, {c: p for c in mesh.active_cells()})


def hanging_mesh():
    """12-cell L-mesh with one cell split twice and a neighbor split once."""
    mesh = make_l_shape_mesh(12)
    mesh.refine([4])
    kids = mesh.children[4]
    mesh.refine([kids[2]])
    return mesh


def mixed_degrees(mesh, seed=0):
    rng = np.random.default_rng(seed)
    return {c: int(rng.integers(2, 5)) for c in mesh.active_cells()}


def two_cell_mesh(h=1.0):
    verts = [(0, 0), (h, 0), (2 * h, 0), (0, h), (h, h), (2 * h, h)]
    return Mesh(verts, [(0, 1, 4, 3), (1, 2, 5, 4)])


@pytest.fixture(scope="session")
def poly_problem():
    return polynomial_problem()


@pytest.fixture(scope="session")
def example1_p3_solution():
    from hpstokes.problems import example1

    prob = example1()
    space = uniform_space(make_l_shape_mesh(12), 3)
    return prob, solve_problem(space, prob)


# one verdict line per acceptance criterion plus indented notes, printed in the terminal summary
ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, 0, line))
    print(line)
    return ok


def report_note(number, detail):
    line = f"    note {number}: {detail}"
    ACCEPTANCE_LINES.append((number, 1, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for *_, line in sorted(ACCEPTANCE_LINES, key=lambda t: t[:2]):
            terminalreporter.write_line(line)
