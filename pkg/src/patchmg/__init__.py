"""Multigrid solvers for multi-patch spline (isogeometric) Poisson problems.

Modules
-------
bspline      univariate B-splines, quadrature, mass/stiffness matrices
tensor       tensor-product spaces and Kronecker-sum operators
geometry     geometry maps, multi-patch topology, global DOF numbering
assembly     patch and global matrices, right-hand side, Dirichlet lift
projectors   boundary-interpolating spline projectors and error norms
smoothers    additive subspace-corrected smoother and its boosted variant
multigrid    hierarchy, transfer operators, cycles, MG and MG-PCG solvers
scenarios    built-in model problems
geometry_io  text format for multi-patch geometries
cli          benchmark harness (``patchmg`` command)
"""
from .bspline import SplineSpace, make_space
from .geometry import GeometryMap, build_dof_map, build_topology
from .multigrid import MGConfig, SolveReport, build_hierarchy, solve_mg, solve_pcg
from .scenarios import scenario_l_shape, scenario_unit_square

__version__ = "0.1.0"

__all__ = [
    "SplineSpace", "make_space", "GeometryMap", "build_topology", "build_dof_map",
    "MGConfig", "SolveReport", "build_hierarchy", "solve_mg", "solve_pcg",
    "scenario_unit_square", "scenario_l_shape",
]
