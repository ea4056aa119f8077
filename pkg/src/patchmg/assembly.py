"""Patch and global matrices for the Poisson problem, right-hand sides, Dirichlet lift.

Patch matrices come in two flavours sharing one interface (``matvec``,
``apply_grid``, ``submatrix``, ``to_sparse``):

* affine maps give an exact Kronecker sum of univariate matrices
  (:class:`~patchmg.tensor.KroneckerOperator`), applied in ``O(n^2 p)``;
* general spline maps are assembled by sum-factorized Gauss quadrature into a
  sparse matrix (:class:`SparsePatchOperator`).

The global stiffness matrix is applied matrix-free by gathering patch-local
coefficients, applying the patch operators and scatter-adding the results
(``A_h = sum_k A_k``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bspline import univariate_matrix
from .geometry import GeometryError, side_local_indices
from .tensor import KroneckerOperator


def default_quadrature(p):
    return p + 2


class SparsePatchOperator:
    """Patch matrix stored as an assembled sparse matrix."""

    def __init__(self, A, n):
        self.A = A.tocsr()
        self.n = n
        self.shape = A.shape

    def matvec(self, v):
        return self.A @ v

    def __matmul__(self, v):
        return self.matvec(v)

    def apply_grid(self, X):
        return (self.A @ X.ravel()).reshape(self.n, self.n)

    def submatrix(self, rows, cols=None):
        cols = rows if cols is None else cols
        return self.A[np.asarray(rows)][:, np.asarray(cols)].toarray()

    def to_sparse(self):
        return self.A

    def diagonal(self):
        return self.A.diagonal()


def _pair_products(space, x, da, db):
    """Sparse ``(n*(2p+1), len(x))`` table of ``B_i^{(da)}(x) B_{i'}^{(db)}(x)``.

    Row ``i*(2p+1) + (i'-i+p)`` holds the pair ``(i, i')``.
    """
    from .bspline import basis_funs_ders

    p, n = space.p, space.n
    spans, ders = basis_funs_ders(space.knots, p, x, max(da, db))
    a = np.arange(p + 1)
    i = spans[:, None, None] - p + a[None, :, None]
    i2 = spans[:, None, None] - p + a[None, None, :]
    vals = ders[:, da, :, None] * ders[:, db, None, :]
    rows = i * (2 * p + 1) + (i2 - i + p)
    cols = np.broadcast_to(np.arange(len(x))[:, None, None], rows.shape)
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n * (2 * p + 1), len(x)))


def _valid_pairs(space):
    p, n = space.p, space.n
    i = np.repeat(np.arange(n), 2 * p + 1)
    i2 = i + np.tile(np.arange(-p, p + 1), n)
    ok = (i2 >= 0) & (i2 < n)
    return np.nonzero(ok)[0], i[ok], i2[ok]


def _geometry_on_quadrature(patch, space, q):
    x, w = space.quadrature_grid(q)
    g = patch.grid(x, x, 1)
    du, dv = g["du"], g["dv"]
    det = du[..., 0] * dv[..., 1] - du[..., 1] * dv[..., 0]
    if np.any(det <= 0):
        raise GeometryError(f"singular or inverted Jacobian at a quadrature node (min det {det.min():.3e})")
    return x, w, g, det


def assemble_patch(patch, space, q=None):
    """Patch stiffness and mass matrices by pulled-back Gauss quadrature.

    Returns sparse ``(n^2, n^2)`` matrices in the package's flat ordering.
    """
    q = default_quadrature(space.p) if q is None else q
    x, w, g, det = _geometry_on_quadrature(patch, space, q)
    du, dv = g["du"], g["dv"]
    # inverse Jacobian rows: d(xhat)/dX and d(yhat)/dX
    inv = np.empty(det.shape + (2, 2))
    inv[..., 0, 0] = dv[..., 1] / det
    inv[..., 0, 1] = -dv[..., 0] / det
    inv[..., 1, 0] = -du[..., 1] / det
    inv[..., 1, 1] = du[..., 0] / det
    W = np.outer(w, w) * det  # (Qy, Qx)
    Gm = np.einsum("...ak,...bk->...ab", inv, inv) * W[..., None, None]

    pairs = {(a, b): _pair_products(space, x, a, b) for a in (0, 1) for b in (0, 1)}
    stiff_terms = [
        ((1, 1), (0, 0), Gm[..., 0, 0]),
        ((0, 0), (1, 1), Gm[..., 1, 1]),
        ((1, 0), (0, 1), Gm[..., 0, 1]),
        ((0, 1), (1, 0), Gm[..., 1, 0]),
    ]
    A = _sum_factorized(space, pairs, stiff_terms)
    M = _sum_factorized(space, pairs, [((0, 0), (0, 0), W)])
    return A, M


def _sum_factorized(space, pairs, terms):
    n = space.n
    valid, i, i2 = _valid_pairs(space)
    R = 0.0
    for dx, dy, C in terms:
        T = pairs[dx] @ C.T  # (npairs_x, Qy)
        R = R + pairs[dy] @ T.T  # (npairs_y, npairs_x)
    B = np.asarray(R)[np.ix_(valid, valid)]
    rows = i[None, :] + n * i[:, None]
    cols = i2[None, :] + n * i2[:, None]
    A = sp.csr_matrix((B.ravel(), (rows.ravel(), cols.ravel())), shape=(n * n, n * n))
    A.eliminate_zeros()
    return ((A + A.T) * 0.5).tocsr()


def affine_patch_operators(patch, space):
    """Exact Kronecker-sum stiffness and mass matrices for an affine map."""
    J = patch.affine_jacobian
    det = float(np.linalg.det(J))
    if det <= 0:
        raise GeometryError(f"non-positive Jacobian determinant {det:.3e}")
    Ji = np.linalg.inv(J)
    Gm = det * Ji @ Ji.T
    M = univariate_matrix(space, 0, 0)
    K = univariate_matrix(space, 1, 1)
    D = univariate_matrix(space, 1, 0)  # D[i, j] = ∫ B_i' B_j
    M, K = (M + M.T) * 0.5, (K + K.T) * 0.5
    terms = [(K, M, Gm[0, 0]), (M, K, Gm[1, 1])]
    if abs(Gm[0, 1]) > 1e-15 * abs(Gm).max():
        terms += [(D, D.T.tocsr(), Gm[0, 1]), (D.T.tocsr(), D, Gm[1, 0])]
    return KroneckerOperator(terms), KroneckerOperator([(M, M, det)])


def patch_operators(patch, space, q=None):
    """Stiffness and mass operators of one patch (Kronecker form when affine)."""
    if patch.is_affine:
        return affine_patch_operators(patch, space)
    A, M = assemble_patch(patch, space, q)
    return SparsePatchOperator(A, space.n), SparsePatchOperator(M, space.n)


class GlobalOperator:
    """Matrix-free ``sum_k`` of patch operators in the global numbering.

    Acts on free DOFs by default; :meth:`apply_extended` acts on the extended
    vector (free followed by Dirichlet DOFs).
    """

    def __init__(self, patch_ops, dofmap):
        self.patch_ops = list(patch_ops)
        self.dofmap = dofmap
        self.N = dofmap.N
        self.shape = (self.N, self.N)
        self.dtype = np.dtype(float)

    def apply_extended(self, u_ext):
        dm = self.dofmap
        out = np.zeros(dm.n_total)
        for g, op in zip(dm.l2g, self.patch_ops):
            y = op.matvec(u_ext[g])
            out += np.bincount(g, weights=y, minlength=dm.n_total)
        return out

    def matvec(self, u):
        ext = np.zeros(self.dofmap.n_total)
        ext[:self.N] = u
        return self.apply_extended(ext)[:self.N]

    def __matmul__(self, u):
        return self.matvec(u)

    def __add__(self, other):
        return GlobalOperator([a + b if isinstance(a, KroneckerOperator) and isinstance(b, KroneckerOperator)
                               else _SumOp(a, b) for a, b in zip(self.patch_ops, other.patch_ops)], self.dofmap)

    def scaled(self, c):
        return GlobalOperator([op.scaled(c) if isinstance(op, KroneckerOperator) else _ScaledOp(op, c)
                               for op in self.patch_ops], self.dofmap)

    def submatrix(self, dofs):
        """Dense ``P_T^T A_h P_T`` for the given global DOFs."""
        dofs = np.asarray(dofs)
        out = np.zeros((dofs.size, dofs.size))
        for k, op in enumerate(self.patch_ops):
            loc, pos = self.dofmap.local_positions(k, dofs)
            if loc.size:
                out[np.ix_(pos, pos)] += op.submatrix(loc)
        return out

    def to_sparse(self, extended=False):
        dm = self.dofmap
        rows, cols, vals = [], [], []
        for g, op in zip(dm.l2g, self.patch_ops):
            A = op.to_sparse().tocoo()
            rows.append(g[A.row])
            cols.append(g[A.col])
            vals.append(A.data)
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        A = sp.csr_matrix((vals, (rows, cols)), shape=(dm.n_total, dm.n_total))
        if not extended:
            A = A[:self.N][:, :self.N]
        return A.tocsr()

    def to_dense(self):
        return self.to_sparse().toarray()

    def diagonal(self):
        dm = self.dofmap
        d = np.zeros(dm.n_total)
        for g, op in zip(dm.l2g, self.patch_ops):
            d += np.bincount(g, weights=op.diagonal(), minlength=dm.n_total)
        return d[:self.N]


class _SumOp:
    def __init__(self, a, b):
        self.a, self.b = a, b

    def matvec(self, v):
        return self.a.matvec(v) + self.b.matvec(v)

    def submatrix(self, rows, cols=None):
        return self.a.submatrix(rows, cols) + self.b.submatrix(rows, cols)

    def to_sparse(self):
        return (self.a.to_sparse() + self.b.to_sparse()).tocsr()

    def diagonal(self):
        return self.a.diagonal() + self.b.diagonal()


class _ScaledOp:
    def __init__(self, op, c):
        self.op, self.c = op, c

    def matvec(self, v):
        return self.c * self.op.matvec(v)

    def submatrix(self, rows, cols=None):
        return self.c * self.op.submatrix(rows, cols)

    def to_sparse(self):
        return (self.c * self.op.to_sparse()).tocsr()

    def diagonal(self):
        return self.c * self.op.diagonal()


def assemble_global(patch_mats, dofmap):
    """Sparse ``A_h`` (or ``M_h``) on free DOFs by scatter-adding patch matrices."""
    ops = [m if hasattr(m, "to_sparse") else SparsePatchOperator(sp.csr_matrix(m), dofmap.n) for m in patch_mats]
    return GlobalOperator(ops, dofmap).to_sparse()


@dataclass
class LinearSystem:
    """Reduced system ``A u = f`` on free DOFs plus the Dirichlet data."""

    A: GlobalOperator
    f: np.ndarray
    u_g: np.ndarray
    dofmap: object
    space: object
    patches: list

    def extend(self, u):
        return np.concatenate([u, self.u_g])

    def patch_coefficients(self, u):
        """Coefficient grids ``(n, n)`` (rows = y index) for every patch."""
        ext = self.extend(u)
        n = self.dofmap.n
        return [ext[g].reshape(n, n) for g in self.dofmap.l2g]


def load_vector(patches, space, dofmap, f, q=None):
    """Extended vector ``[∫ f φ_i]`` over all DOFs (free and Dirichlet)."""
    q = default_quadrature(space.p) + 1 if q is None else q
    out = np.zeros(dofmap.n_total)
    x, w = space.quadrature_grid(q)
    B = space.collocation(x, 0)
    for g, G in zip(dofmap.l2g, patches):
        geo = G.grid(x, x, 1)
        du, dv = geo["du"], geo["dv"]
        det = du[..., 0] * dv[..., 1] - du[..., 1] * dv[..., 0]
        X = geo["x"]
        F = np.asarray(f(X[..., 0], X[..., 1]), dtype=float) * det * np.outer(w, w)
        loc = (B.T @ (B.T @ F.T).T)  # (n_y, n_x)
        out += np.bincount(g, weights=np.asarray(loc).ravel(), minlength=dofmap.n_total)
    return out


def boundary_values(patches, space, dofmap, topology, g):
    """Dirichlet coefficients by interpolation at the boundary Greville points."""
    n = space.n
    t = space.greville()
    C = space.collocation(t, 0).toarray()
    vals = np.full(dofmap.N_boundary, np.nan)
    for k, s in topology.boundary_sides:
        X = patches[k].side_points(s, t)
        c = np.linalg.solve(C, np.asarray(g(X[:, 0], X[:, 1]), dtype=float) * np.ones(n))
        ids = dofmap.l2g[k][side_local_indices(s, n)] - dofmap.N
        vals[ids] = c
    if np.any(np.isnan(vals)):
        raise ValueError("Dirichlet DOF not reached by any boundary side")
    return vals


def assemble_rhs(f, g, patches, space, dofmap, topology, A=None):
    """Right-hand side with the Dirichlet lift ``f_h = [∫ f φ_i] - A_fb u_g``."""
    if A is None:
        A = GlobalOperator([patch_operators(G, space)[0] for G in patches], dofmap)
    load = load_vector(patches, space, dofmap, f)
    u_g = boundary_values(patches, space, dofmap, topology, g) if dofmap.N_boundary else np.zeros(0)
    ext = np.zeros(dofmap.n_total)
    ext[dofmap.N:] = u_g
    f_h = load[:dofmap.N] - A.apply_extended(ext)[:dofmap.N]
    return LinearSystem(A, f_h, u_g, dofmap, space, list(patches))
