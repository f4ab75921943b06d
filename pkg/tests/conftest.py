import numpy as np
import pytest

from lcfshape import samples
from lcfshape.elasticity import FIXED, FOLLOWER


def central_fd(f, x, direction, h):
    """Central difference of scalar ``f`` at ``x`` along ``direction``."""
    return (f(x + h * direction) - f(x - h * direction)) / (2 * h)


def perturbed_cube(kind="hex8", amount=0.1, seed=0):
    """Single element over a randomly jiggled unit cube or square."""
    from lcfshape.mesh import Mesh

    mesh = samples.unit_cube(kind) if kind.startswith("hex") else None
    if mesh is None:
        g = samples.structured_grid((1, 1), kind)
        mesh = Mesh(g.nodes, g.elements, kind, np.vstack(list(g.faces.values())))
    rng = np.random.default_rng(seed)
    X = mesh.nodes + amount * rng.uniform(-1, 1, mesh.nodes.shape)
    return mesh.with_nodes(X)


@pytest.fixture(scope="session")
def rod_hex8():
    return samples.bent_rod(cells=(8, 2, 2), kind="hex8")


@pytest.fixture(scope="session")
def rod_hex8_fixed():
    return samples.bent_rod(cells=(8, 2, 2), kind="hex8", mode=FIXED)


@pytest.fixture(scope="session")
def rod_hex20():
    return samples.bent_rod(cells=(6, 2, 2), kind="hex20")


@pytest.fixture(scope="session")
def rod_2d():
    return samples.rod2d()


@pytest.fixture(scope="session")
def wheel():
    return samples.wheel_sector()


@pytest.fixture(params=[FOLLOWER, FIXED])
def mode(request):
    return request.param


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
