import numpy as np
import pytest
from hypothesis import settings

from patchmg.bspline import SplineSpace
from patchmg.geometry import GeometryMap, build_dof_map, build_topology
from patchmg.assembly import GlobalOperator, patch_operators

settings.register_profile("patchmg", max_examples=25, deadline=None)
settings.load_profile("patchmg")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def discretize(patches, p, m):
    """Space, topology, DOF map and global stiffness operator for a layout."""
    space = SplineSpace(p, m)
    topo = build_topology(patches, space)
    dm = build_dof_map(topo, space)
    A = GlobalOperator([patch_operators(G, space)[0] for G in patches], dm)
    return space, topo, dm, A


def two_patches():
    return [GeometryMap.rectangle(0.0, 0.0), GeometryMap.rectangle(1.0, 0.0)]


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    def order(key):
        digits = "".join(ch for ch in key if ch.isdigit())
        return (int(digits) if digits else 99, key)

    for key in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
