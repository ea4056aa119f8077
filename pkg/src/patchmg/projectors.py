"""Boundary-interpolating spline projectors and quadrature error norms.

The univariate projector is orthogonal in ``(u, v)_D = (u', v') + u(0) v(0)``.
It interpolates at both endpoints and is ``H^1``-seminorm orthogonal. Its
tensor product acts on the parameter square. The multi-patch projector applies
the tensor projector to every pull-back ``u ∘ G_k``; the pieces agree on shared
edges and vertices, so they define a single continuous spline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .bspline import h1d_gram
from .geometry import side_local_indices


@dataclass
class FunctionSample:
    """A smooth function with the derivatives the projectors need.

    Callables are vectorized. In one dimension they take ``x``: ``dx`` is
    ``u'`` and ``dxx`` is ``u''``. In two dimensions they take ``(x, y)``.
    """

    u: object
    dx: object = None
    dy: object = None
    dxx: object = None
    dxy: object = None
    dyy: object = None

    def check_derivatives(self, points, step=1e-5, tol=1e-6):
        """Largest central-difference mismatch of the first derivatives at ``points``."""
        points = np.atleast_2d(points)
        worst = 0.0
        if points.shape[1] == 1:
            x = points[:, 0]
            fd = (self.u(x + step) - self.u(x - step)) / (2 * step)
            worst = np.abs(fd - self.dx(x)).max()
        else:
            x, y = points[:, 0], points[:, 1]
            fdx = (self.u(x + step, y) - self.u(x - step, y)) / (2 * step)
            fdy = (self.u(x, y + step) - self.u(x, y - step)) / (2 * step)
            worst = max(np.abs(fdx - self.dx(x, y)).max(), np.abs(fdy - self.dy(x, y)).max())
            if self.dxy is not None:
                fdxy = (self.dx(x, y + step) - self.dx(x, y - step)) / (2 * step)
                worst = max(worst, np.abs(fdxy - self.dxy(x, y)).max())
        if worst > tol:
            raise ValueError(f"derivative callables inconsistent with u (mismatch {worst:.2e})")
        return worst


@dataclass
class ProjectionResult:
    coefficients: np.ndarray
    l2_error: float
    h1_error: float
    bound: float


def _quad_order(space, q):
    return space.p + 3 if q is None else q


def _gram_solver(space):
    return spla.factorized(h1d_gram(space).tocsc())


def _h1d_load(space, du_vals, u0, x, w):
    """``[∫ u' B_i' + u(0) B_i(0)]`` from derivative samples at quadrature nodes."""
    B1 = space.collocation(x, 1)
    load = B1.T @ (w * du_vals)
    load[0] += u0
    return load


def project_1d(space, f, q=None):
    """Coefficients of the ``(.,.)_D``-orthogonal projection of ``f.u`` (needs ``f.dx``)."""
    x, w = space.quadrature_grid(_quad_order(space, q))
    load = _h1d_load(space, f.dx(x), float(f.u(np.array([0.0]))[0]), x, w)
    return _gram_solver(space)(load)


def dual_basis(space):
    """Coefficients (rows) of the dual functions ``λ_j`` with ``(B_i, λ_j)_D = δ_ij``."""
    G = h1d_gram(space).toarray()
    return np.linalg.inv(G)


def error_1d(space, coeffs, f, q=None, refine=4):
    """``(||u - u_h||_{L2}, |u - u_h|_{H1})`` on ``(0, 1)``."""
    x, w = space.quadrature_grid(_quad_order(space, q) + refine)
    e0 = f.u(x) - space.evaluate(coeffs, x, 0)
    e1 = f.dx(x) - space.evaluate(coeffs, x, 1)
    return float(np.sqrt(w @ e0 ** 2)), float(np.sqrt(w @ e1 ** 2))


def seminorm_1d(f, order, nodes=2000):
    """``|u|_{H^order}`` on ``(0, 1)`` by composite Gauss quadrature."""
    from .bspline import SplineSpace

    x, w = SplineSpace(1, nodes // 8).quadrature_grid(8)
    d = {0: f.u, 1: f.dx, 2: f.dxx}[order](x)
    return float(np.sqrt(w @ d ** 2))


# --- two dimensions, parameter domain ---------------------------------------------

def _tensor_loads(space, f, q):
    """The terms of the tensor ``(.,.)_D ⊗ (.,.)_D`` load, shape ``(n_y, n_x)``."""
    x, w = space.quadrature_grid(_quad_order(space, q))
    B1 = space.collocation(x, 1)
    X, Y = np.meshgrid(x, x)  # rows: y
    Uxy = f.dxy(X, Y) * np.outer(w, w)
    load = np.asarray(B1.T @ (B1.T @ Uxy.T).T)  # [j, i] = ∫∫ u_xy B_i' B_j'
    zero = np.zeros_like(x)
    load[0, :] += B1.T @ (w * f.dx(x, zero))
    load[:, 0] += B1.T @ (w * f.dy(zero, x))
    load[0, 0] += float(f.u(np.array([0.0]), np.array([0.0]))[0])
    return load


def project_2d_tensor(space, f, q=None):
    """Coefficient grid ``(n_y, n_x)`` of ``Π^x Π^y u`` on the unit square."""
    solve = _gram_solver(space)
    load = _tensor_loads(space, f, q)
    C = np.column_stack([solve(col) for col in load.T])  # y-direction
    return np.vstack([solve(row) for row in C])  # x-direction


def project_2d_sequential(space, f, order="xy", q=None):
    """``Π^x`` and ``Π^y`` applied one after the other, as two univariate sweeps.

    With ``order="xy"``, ``Π^x`` acts first: for every ``y`` quadrature node
    (and for ``y = 0``) the slice ``u(., y)`` is projected, the resulting
    coefficient functions of ``y`` are then projected with ``Π^y``; ``"yx"``
    swaps the roles. Used to check that the two projectors commute.
    """
    if order not in ("xy", "yx"):
        raise ValueError("order must be 'xy' or 'yx'")
    if order == "yx":
        g = FunctionSample(lambda x, y: f.u(y, x), lambda x, y: f.dy(y, x), lambda x, y: f.dx(y, x),
                           dxy=lambda x, y: f.dxy(y, x))
        return project_2d_sequential(space, g, "xy", q).T
    x, w = space.quadrature_grid(_quad_order(space, q))
    solve = _gram_solver(space)
    B1 = space.collocation(x, 1)
    zero = np.zeros_like(x)
    # derivative in y of the x-projection: Π^x applied to u_y(., y) for every y node at once
    X, Y = np.meshgrid(x, x, indexing="ij")  # rows: x nodes, columns: y nodes
    loads = np.asarray(B1.T @ (w[:, None] * f.dxy(X, Y)))  # (n_x, Qy)
    loads[0, :] += f.dy(zero, x)
    dcoef = spla.splu(h1d_gram(space).tocsc()).solve(loads).T  # (Qy, n_x)
    c0 = solve(_h1d_load(space, f.dx(x, zero), float(f.u(np.array([0.0]), np.array([0.0]))[0]), x, w))
    load = np.asarray(B1.T @ (w[:, None] * dcoef))  # (n_y, n_x)
    load[0, :] += c0
    return np.column_stack([solve(col) for col in load.T])


def eval_tensor(space, C, x, y, dx=0, dy=0):
    """Values of the tensor spline with grid ``C`` on the grid ``x`` × ``y`` (rows = y)."""
    Bx = space.collocation(x, dx)
    By = space.collocation(y, dy)
    return np.asarray(By @ (Bx @ C.T).T)


def error_2d(space, C, f, q=None, refine=3):
    """``(||u - u_h||_{L2}, |u - u_h|_{H1})`` on the unit square."""
    x, w = space.quadrature_grid(_quad_order(space, q) + refine)
    X, Y = np.meshgrid(x, x)
    W = np.outer(w, w)
    e0 = f.u(X, Y) - eval_tensor(space, C, x, x)
    ex = f.dx(X, Y) - eval_tensor(space, C, x, x, 1, 0)
    ey = f.dy(X, Y) - eval_tensor(space, C, x, x, 0, 1)
    return float(np.sqrt((W * e0 ** 2).sum())), float(np.sqrt((W * (ex ** 2 + ey ** 2)).sum()))


def seminorm_h2_2d(f, nodes=64, q=8):
    """``|u|_{H^2}`` on the unit square (``u_xx^2 + 2 u_xy^2 + u_yy^2``)."""
    from .bspline import SplineSpace

    x, w = SplineSpace(1, nodes).quadrature_grid(q)
    X, Y = np.meshgrid(x, x)
    W = np.outer(w, w)
    val = f.dxx(X, Y) ** 2 + 2 * f.dxy(X, Y) ** 2 + f.dyy(X, Y) ** 2
    return float(np.sqrt((W * val).sum()))


# --- multi-patch --------------------------------------------------------------------

def pullback(f, patch):
    """``u ∘ G`` with first derivatives and the mixed derivative, by the chain rule."""

    def geo(x, y):
        shape = np.shape(x)
        xs, ys = np.ravel(x), np.ravel(y)
        out = []
        for a, b in zip(xs, ys):
            g = patch.grid([a], [b], 2)
            out.append([g[k][0, 0] for k in ("x", "du", "dv", "duv")])
        arr = np.array(out)  # (npts, 4, 2)
        return arr, shape

    def grid_eval(x, y):
        # evaluation on tensor grids is far cheaper; detect meshgrid input
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if x.ndim == 2 and np.allclose(x, x[0:1, :]) and np.allclose(y, y[:, 0:1]):
            g = patch.grid(x[0], y[:, 0], 2)
            return g["x"], g["du"], g["dv"], g["duv"]
        arr, shape = geo(x, y)
        r = lambda k: arr[:, k, :].reshape(shape + (2,))
        return r(0), r(1), r(2), r(3)

    def u(x, y):
        P, *_ = grid_eval(x, y)
        return f.u(P[..., 0], P[..., 1])

    def grad(P):
        return f.dx(P[..., 0], P[..., 1]), f.dy(P[..., 0], P[..., 1])

    def dx(x, y):
        P, Gu, _, _ = grid_eval(x, y)
        gx, gy = grad(P)
        return gx * Gu[..., 0] + gy * Gu[..., 1]

    def dy(x, y):
        P, _, Gv, _ = grid_eval(x, y)
        gx, gy = grad(P)
        return gx * Gv[..., 0] + gy * Gv[..., 1]

    def dxy(x, y):
        P, Gu, Gv, Guv = grid_eval(x, y)
        gx, gy = grad(P)
        X, Y = P[..., 0], P[..., 1]
        hxx, hxy, hyy = f.dxx(X, Y), f.dxy(X, Y), f.dyy(X, Y)
        quad = (Gu[..., 0] * (hxx * Gv[..., 0] + hxy * Gv[..., 1])
                + Gu[..., 1] * (hxy * Gv[..., 0] + hyy * Gv[..., 1]))
        return gx * Guv[..., 0] + gy * Guv[..., 1] + quad

    return FunctionSample(u, dx, dy, dxy=dxy)


@dataclass
class MultipatchProjection:
    coefficients: np.ndarray  # free DOFs
    extended: np.ndarray  # free followed by Dirichlet DOFs
    patch_grids: list
    mismatch: float  # largest disagreement of shared coefficients between patches


def project_multipatch(patches, space, dofmap, f, q=None, tol=1e-9):
    """Multi-patch projector: tensor projection of every pull-back, glued by the DOF map."""
    grids = [project_2d_tensor(space, pullback(f, G), q) for G in patches]
    ext = np.zeros(dofmap.n_total)
    count = np.zeros(dofmap.n_total)
    for g, C in zip(dofmap.l2g, grids):
        ext += np.bincount(g, weights=C.ravel(), minlength=ext.size)
        count += np.bincount(g, minlength=ext.size)
    ext /= count
    mismatch = max(float(np.abs(C.ravel() - ext[g]).max()) for g, C in zip(dofmap.l2g, grids))
    if mismatch > tol:
        raise ValueError(f"patch projections disagree on shared DOFs by {mismatch:.2e}")
    return MultipatchProjection(ext[:dofmap.N].copy(), ext, grids, mismatch)


def gradient_load(patches, space, dofmap, f, q=None):
    """Extended vector ``[(∇u, ∇φ_i)]``."""
    q = _quad_order(space, q)
    x, w = space.quadrature_grid(q)
    B0, B1 = space.collocation(x, 0), space.collocation(x, 1)
    out = np.zeros(dofmap.n_total)
    for g, G in zip(dofmap.l2g, patches):
        P, gx, gy, det, inv = _physical_frame(G, x)
        Wq = np.outer(w, w) * det
        ux, uy = f.dx(P[..., 0], P[..., 1]), f.dy(P[..., 0], P[..., 1])
        # ∇φ = J^{-T} ∇̂φ: physical derivative = inv[0, a] φ_u + inv[1, a] φ_v
        cu = Wq * (inv[..., 0, 0] * ux + inv[..., 0, 1] * uy)
        cv = Wq * (inv[..., 1, 0] * ux + inv[..., 1, 1] * uy)
        loc = np.asarray(B0.T @ (B1.T @ cu.T).T) + np.asarray(B1.T @ (B0.T @ cv.T).T)
        out += np.bincount(g, weights=loc.ravel(), minlength=out.size)
    return out


def _physical_frame(G, x):
    geo = G.grid(x, x, 1)
    du, dv = geo["du"], geo["dv"]
    det = du[..., 0] * dv[..., 1] - du[..., 1] * dv[..., 0]
    inv = np.empty(det.shape + (2, 2))
    # rows: parameter direction, columns: physical direction (d xhat_a / d X_b)
    inv[..., 0, 0] = dv[..., 1] / det
    inv[..., 0, 1] = -dv[..., 0] / det
    inv[..., 1, 0] = -du[..., 1] / det
    inv[..., 1, 1] = du[..., 0] / det
    return geo["x"], du, dv, det, inv


def project_h1_global(A, patches, space, dofmap, f, q=None):
    """``H^1_0``-orthogonal projection: ``A_h c = [(∇u, ∇φ_i)]`` on free DOFs."""
    rhs = gradient_load(patches, space, dofmap, f, q)[:dofmap.N]
    return spla.spsolve(A.to_sparse().tocsc(), rhs)


def error_norms(patches, space, dofmap, ext, f, q=None):
    """``(||u - u_h||_{L2(Ω)}, |u - u_h|_{H1(Ω)})`` for an extended coefficient vector."""
    q = _quad_order(space, q)
    x, w = space.quadrature_grid(q)
    e0 = e1 = 0.0
    for g, G in zip(dofmap.l2g, patches):
        C = ext[g].reshape(dofmap.n, dofmap.n)
        P, _, _, det, inv = _physical_frame(G, x)
        Wq = np.outer(w, w) * det
        uh = eval_tensor(space, C, x, x)
        hu, hv = eval_tensor(space, C, x, x, 1, 0), eval_tensor(space, C, x, x, 0, 1)
        gx = inv[..., 0, 0] * hu + inv[..., 1, 0] * hv
        gy = inv[..., 0, 1] * hu + inv[..., 1, 1] * hv
        X, Y = P[..., 0], P[..., 1]
        e0 += (Wq * (f.u(X, Y) - uh) ** 2).sum()
        e1 += (Wq * ((f.dx(X, Y) - gx) ** 2 + (f.dy(X, Y) - gy) ** 2)).sum()
    return float(np.sqrt(e0)), float(np.sqrt(e1))


def boundary_trace(space, C, side):
    """Coefficients of the restriction of a tensor spline to one side."""
    return C.ravel()[side_local_indices(side, space.n)]


def sine_sample(shift=(0.0, 0.0), freq=(np.pi, np.pi)):
    """``sin(a (x - x0)) sin(b (y - y0))`` with all derivatives."""
    (x0, y0), (a, b) = shift, freq
    sx = lambda x: np.sin(a * (x - x0))
    cx = lambda x: np.cos(a * (x - x0))
    sy = lambda y: np.sin(b * (y - y0))
    cy = lambda y: np.cos(b * (y - y0))
    return FunctionSample(
        u=lambda x, y: sx(x) * sy(y),
        dx=lambda x, y: a * cx(x) * sy(y),
        dy=lambda x, y: b * sx(x) * cy(y),
        dxx=lambda x, y: -a * a * sx(x) * sy(y),
        dxy=lambda x, y: a * b * cx(x) * cy(y),
        dyy=lambda x, y: -b * b * sx(x) * sy(y),
    )


def orthogonality_residual(space, coeffs, f, q=None):
    """``max_i |(u - u_h, B_i)_D|`` relative to the load scale."""
    x, w = space.quadrature_grid(_quad_order(space, q))
    du = f.dx(x) - space.evaluate(coeffs, x, 1)
    u0 = float(f.u(np.array([0.0]))[0]) - float(space.evaluate(coeffs, np.array([0.0]))[0])
    res = _h1d_load(space, du, u0, x, w)
    return float(np.abs(res).max())


__all__ = [
    "FunctionSample", "ProjectionResult", "MultipatchProjection", "project_1d", "dual_basis",
    "error_1d", "seminorm_1d", "project_2d_tensor", "project_2d_sequential", "eval_tensor",
    "error_2d", "seminorm_h2_2d", "pullback", "project_multipatch", "gradient_load",
    "project_h1_global", "error_norms", "boundary_trace", "sine_sample", "orthogonality_residual",
]
