"""Geometric multigrid over dyadically refined multi-patch spline spaces.

A smoothing step is damped Richardson, ``u <- u + τ L^{-1}(f - A u)``. The
coarse-grid correction restricts the defect, solves (two-grid), or recurses
once (V) or twice (W), and prolongates the result. Prolongation is the
canonical embedding of spline spaces; restriction is its exact transpose, so
the Galerkin identity ``R A_h P = A_H`` holds.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import GlobalOperator, assemble_rhs, patch_operators
from .bspline import SplineSpace, refinement_matrix
from .geometry import build_dof_map, build_topology
from .smoothers import AdditiveSmoother, BoostedSmoother

CYCLES = ("two_grid", "V", "W")
SMOOTHERS = ("additive", "boosted")


class ConvergenceError(RuntimeError):
    """Raised when an iteration diverges or exceeds its iteration cap."""


@dataclass
class MGConfig:
    """Multigrid parameters; the defaults are the W-cycle, 1+1 additive setting."""

    cycle: str = "W"
    smoother: str = "additive"
    nu_pre: int = 1
    nu_post: int = 1
    tau: float = 0.95
    sigma_scale: float = 5.0
    rho: float = 0.95
    coarsest: str = "fine_smoothing"

    def __post_init__(self):
        if self.cycle not in CYCLES:
            raise ValueError(f"unknown cycle {self.cycle!r}; expected one of {CYCLES}")
        if self.smoother not in SMOOTHERS:
            raise ValueError(f"unknown smoother {self.smoother!r}; expected one of {SMOOTHERS}")
        if self.coarsest not in COARSEST_RULES:
            raise ValueError(f"unknown coarsest-level rule {self.coarsest!r}")
        if self.nu_pre < 0 or self.nu_post < 0:
            raise ValueError("smoothing step counts must be non-negative")


# Coarsest level used by the solver for degree p:
#   "m_gt_p":         smallest l with 2^l > p (every level has m > p);
#   "fine_smoothing": smallest l with 2^(l+1) > p, i.e. every level that smooths
#                     has m > p, while the direct solve may sit on a coarser grid.
COARSEST_RULES = {
    "m_gt_p": lambda p: next(l for l in range(64) if 2 ** l > p),
    "fine_smoothing": lambda p: next(l for l in range(64) if 2 ** (l + 1) > p),
}


def coarsest_level(p, rule="fine_smoothing"):
    return COARSEST_RULES[rule](p)


@dataclass
class Level:
    ell: int
    space: SplineSpace
    topology: object
    dofmap: object
    A: GlobalOperator
    smoother: object = None
    E: object = None  # refinement matrix from the next coarser level

    @property
    def N(self):
        return self.dofmap.N


class MultigridHierarchy:
    """Levels ``ell_0 .. ell_max`` (``m = 2^ell`` intervals per patch and direction)."""

    def __init__(self, patches, p, ell_max, config=None, ell_min=None):
        self.patches = list(patches)
        self.p = p
        self.config = config or MGConfig()
        ell0 = coarsest_level(p, self.config.coarsest) if ell_min is None else ell_min
        if ell_max < ell0:
            raise ValueError(f"finest level {ell_max} below the coarsest admissible level {ell0} for p={p}")
        self.levels = []
        for ell in range(ell0, ell_max + 1):
            space = SplineSpace(p, 2 ** ell)
            topo = build_topology(self.patches, space)
            dm = build_dof_map(topo, space)
            A = GlobalOperator([patch_operators(G, space)[0] for G in self.patches], dm)
            lev = Level(ell, space, topo, dm, A)
            if self.levels:
                lev.E = refinement_matrix(self.levels[-1].space, space)
                lev.smoother = self._make_smoother(lev)
            self.levels.append(lev)
        coarse = self.levels[0]
        self._coarse = sla.cho_factor(coarse.A.to_dense()) if coarse.N else None
        self._exact = {}

    def _make_smoother(self, lev):
        c = self.config
        if c.smoother == "boosted":
            return BoostedSmoother.build(lev.A, lev.dofmap, lev.space, c.sigma_scale, c.rho)
        return AdditiveSmoother.build(lev.A, lev.dofmap, lev.space, c.sigma_scale)

    @property
    def finest(self):
        return self.levels[-1]

    @property
    def n_levels(self):
        return len(self.levels)

    def system(self, f, g):
        """Right-hand side of the finest level for source ``f`` and Dirichlet data ``g``."""
        lev = self.finest
        return assemble_rhs(f, g, self.patches, lev.space, lev.dofmap, lev.topology, lev.A)

    # transfer operators -------------------------------------------------
    def prolong(self, i, uc):
        """Embed free coefficients of level ``i-1`` into level ``i``."""
        fine, coarse = self.levels[i], self.levels[i - 1]
        E = fine.E
        cext = np.zeros(coarse.dofmap.n_total)
        cext[:coarse.N] = uc
        out = np.zeros(fine.dofmap.n_total)
        nc = coarse.dofmap.n
        for gc, gf in zip(coarse.dofmap.l2g, fine.dofmap.l2g):
            X = cext[gc].reshape(nc, nc)
            Y = E @ (E @ X.T).T
            out += np.bincount(gf, weights=np.asarray(Y).ravel(), minlength=out.size)
        out /= self._mult(i)
        return out[:fine.N]

    def restrict(self, i, rf):
        """Exact transpose of :meth:`prolong`."""
        fine, coarse = self.levels[i], self.levels[i - 1]
        E = fine.E
        fext = np.zeros(fine.dofmap.n_total)
        fext[:fine.N] = rf
        fext /= self._mult(i)
        out = np.zeros(coarse.dofmap.n_total)
        nf = fine.dofmap.n
        ET = E.T.tocsr()
        for gc, gf in zip(coarse.dofmap.l2g, fine.dofmap.l2g):
            X = fext[gf].reshape(nf, nf)
            Y = ET @ (ET @ X.T).T
            out += np.bincount(gc, weights=np.asarray(Y).ravel(), minlength=out.size)
        return out[:coarse.N]

    def _mult(self, i):
        key = ("mult", i)
        if key not in self._exact:
            self._exact[key] = self.levels[i].dofmap.multiplicity()
        return self._exact[key]

    def prolongation_matrix(self, i):
        """Dense ``P`` between levels ``i-1`` and ``i`` (small instances)."""
        return np.column_stack([self.prolong(i, e) for e in np.eye(self.levels[i - 1].N)])

    # solvers -------------------------------------------------------------
    def coarse_solve(self, f):
        if self._coarse is None:
            return np.zeros(0)
        return sla.cho_solve(self._coarse, f)

    def exact_solve(self, i, f):
        """Sparse direct solve on level ``i`` (used by the two-grid cycle)."""
        if i == 0:
            return self.coarse_solve(f)
        if i not in self._exact:
            self._exact[i] = spla.factorized(self.levels[i].A.to_sparse().tocsc())
        return self._exact[i](f)

    def smooth(self, i, u, f, nu, tau=None):
        tau = self.config.tau if tau is None else tau
        lev = self.levels[i]
        for _ in range(nu):
            u = u + tau * lev.smoother.solve(f - lev.A.matvec(u))
        return u

    def cycle(self, i, u, f, kind=None):
        """One multigrid cycle on level ``i``."""
        kind = self.config.cycle if kind is None else kind
        if i == 0:
            return self.coarse_solve(f)
        c = self.config
        lev = self.levels[i]
        u = self.smooth(i, u, f, c.nu_pre)
        rc = self.restrict(i, f - lev.A.matvec(u))
        if kind == "two_grid" or i == 1:
            ec = self.exact_solve(i - 1, rc)
        else:
            ec = np.zeros_like(rc)
            for _ in range(1 if kind == "V" else 2):
                ec = self.cycle(i - 1, ec, rc, kind)
        u = u + self.prolong(i, ec)
        return self.smooth(i, u, f, c.nu_post)


def build_hierarchy(patches, p, ell_max, config=None, **kwargs):
    """Multigrid hierarchy for the given geometry, degree and finest level."""
    return MultigridHierarchy(patches, p, ell_max, config or MGConfig(**kwargs))


@dataclass
class SolveReport:
    iterations: int
    residuals: list
    seconds: float
    config: dict = field(default_factory=dict)
    solution: np.ndarray = field(default=None, repr=False)

    @property
    def rate(self):
        """Geometric mean of the last (up to) five residual reduction factors."""
        r = np.asarray(self.residuals)
        if r.size < 2:
            return 0.0
        tail = r[-min(6, r.size):]
        return float((tail[-1] / tail[0]) ** (1.0 / (tail.size - 1)))


def _max_iter_default():
    return 1000


def solve_mg(hier, f, eps=1e-8, max_iter=None, u0=None):
    """Stationary multigrid iteration until ``||r_k|| <= eps ||r_0||``."""
    max_iter = _max_iter_default() if max_iter is None else max_iter
    lev = hier.finest
    i = hier.n_levels - 1
    t0 = time.perf_counter()
    u = np.zeros(lev.N) if u0 is None else np.array(u0, dtype=float)
    r0 = np.linalg.norm(f - lev.A.matvec(u))
    hist = [r0]
    it = 0
    while hist[-1] > eps * r0 and r0 > 0:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence within {max_iter} iterations (residual {hist[-1]:.3e})")
        u = hier.cycle(i, u, f)
        it += 1
        r = np.linalg.norm(f - lev.A.matvec(u))
        if not np.isfinite(r) or r > 1e8 * r0:
            raise ConvergenceError(f"iteration diverged at step {it} (residual {r:.3e})")
        hist.append(r)
    return SolveReport(it, hist, time.perf_counter() - t0, asdict(hier.config), u)


def solve_pcg(hier, f, eps=1e-8, max_iter=None):
    """Conjugate gradients preconditioned by one multigrid cycle."""
    max_iter = _max_iter_default() if max_iter is None else max_iter
    lev = hier.finest
    i = hier.n_levels - 1
    t0 = time.perf_counter()
    u = np.zeros(lev.N)
    r = np.array(f, dtype=float)
    r0 = np.linalg.norm(r)
    hist = [r0]
    it = 0
    if r0 == 0:
        return SolveReport(0, hist, time.perf_counter() - t0, asdict(hier.config), u)

    def precond(v):
        return hier.cycle(i, np.zeros_like(v), v)

    z = precond(r)
    rz = r @ z
    if rz <= 0:
        raise ConvergenceError("multigrid preconditioner is not positive definite")
    d = z.copy()
    while hist[-1] > eps * r0:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence within {max_iter} iterations (residual {hist[-1]:.3e})")
        Ad = lev.A.matvec(d)
        alpha = rz / (d @ Ad)
        u += alpha * d
        r -= alpha * Ad
        it += 1
        hist.append(np.linalg.norm(r))
        if not np.isfinite(hist[-1]):
            raise ConvergenceError(f"PCG diverged at step {it}")
        if hist[-1] <= eps * r0:
            break
        z = precond(r)
        rz_new = r @ z
        if rz_new <= 0:
            raise ConvergenceError("multigrid preconditioner is not positive definite")
        d = z + (rz_new / rz) * d
        rz = rz_new
    return SolveReport(it, hist, time.perf_counter() - t0, asdict(hier.config), u)
