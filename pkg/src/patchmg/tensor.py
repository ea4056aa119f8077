"""Tensor-product spline spaces on the unit square and Kronecker-sum operators.

Flattening convention (used everywhere in the package): the coefficient of
``B_i(x) B_j(y)`` sits at flat position ``i + n*j`` (x fastest), so a vector
reshaped to ``(n_y, n_x)`` has rows indexed by ``j``. A Kronecker term is stored
as ``(Ax, Ay, w)`` and acts as ``w * (Ay ⊗ Ax)``, i.e. ``X -> w * Ay @ X @ Ax.T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bspline import SplineSpace, univariate_mass_stiffness


def tensor_index(i, j, n):
    """1-based flat index ``i + n(j-1)`` of the basis function ``B_i(x) B_j(y)``."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"indices ({i}, {j}) out of range 1..{n}")
    return i + n * (j - 1)


@dataclass(frozen=True)
class TensorSpace:
    """``S_{p,h} ⊗ S_{p,h}`` with equal spaces in both directions."""

    space: SplineSpace

    @property
    def sx(self):
        return self.space

    @property
    def sy(self):
        return self.space

    @property
    def n(self):
        return self.space.n

    @property
    def dim(self):
        return self.space.n ** 2

    def greville(self):
        """Greville points, shape ``(n*n, 2)``, in flat order."""
        g = self.space.greville()
        X, Y = np.meshgrid(g, g)
        return np.column_stack([X.ravel(), Y.ravel()])

    def refine(self):
        return TensorSpace(self.space.refine())


def _as_factor(A):
    if sp.issparse(A):
        return A.tocsr()
    return np.asarray(A, dtype=float)


class KroneckerOperator:
    """Sum of weighted Kronecker products ``sum_t w_t (Ay_t ⊗ Ax_t)``.

    Never forms the ``n^2 x n^2`` matrix when applied.
    """

    def __init__(self, terms):
        self.terms = [(_as_factor(Ax), _as_factor(Ay), float(w)) for Ax, Ay, w in terms]
        if not self.terms:
            raise ValueError("empty Kronecker operator")
        Ax, Ay, _ = self.terms[0]
        self.nx, self.ny = Ax.shape[1], Ay.shape[1]
        self.mx, self.my = Ax.shape[0], Ay.shape[0]
        for Ax, Ay, _ in self.terms:
            if Ax.shape != (self.mx, self.nx) or Ay.shape != (self.my, self.ny):
                raise ValueError("inconsistent Kronecker factor shapes")

    @property
    def shape(self):
        return (self.mx * self.my, self.nx * self.ny)

    def __add__(self, other):
        return KroneckerOperator(self.terms + other.terms)

    def scaled(self, c):
        return KroneckerOperator([(Ax, Ay, c * w) for Ax, Ay, w in self.terms])

    def apply_grid(self, X):
        """Apply to a coefficient grid of shape ``(ny, nx)``."""
        out = None
        for Ax, Ay, w in self.terms:
            T = Ax @ X.T  # (mx, ny)
            T = Ay @ T.T  # (my, mx)
            out = w * T if out is None else out + w * T
        return out

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.shape[1]:
            raise ValueError(f"vector of length {v.shape[0]} does not match operator {self.shape}")
        return self.apply_grid(v.reshape(self.ny, self.nx)).ravel()

    def __matmul__(self, v):
        return self.matvec(v)

    def to_sparse(self):
        out = None
        for Ax, Ay, w in self.terms:
            T = w * sp.kron(sp.csr_matrix(Ay), sp.csr_matrix(Ax), format="csr")
            out = T if out is None else out + T
        return out.tocsr()

    def to_dense(self):
        return self.to_sparse().toarray()

    def submatrix(self, rows, cols=None):
        """Dense block for flat index arrays ``rows`` x ``cols``."""
        rows = np.asarray(rows)
        cols = rows if cols is None else np.asarray(cols)
        ri, rj = rows % self.mx, rows // self.mx
        ci, cj = cols % self.nx, cols // self.nx
        out = np.zeros((rows.size, cols.size))
        for Ax, Ay, w in self.terms:
            Axd = _dense_block(Ax, ri, ci)
            Ayd = _dense_block(Ay, rj, cj)
            out += w * Axd * Ayd
        return out

    def diagonal(self):
        d = 0.0
        for Ax, Ay, w in self.terms:
            dx = Ax.diagonal() if sp.issparse(Ax) else np.diag(Ax)
            dy = Ay.diagonal() if sp.issparse(Ay) else np.diag(Ay)
            d = d + w * np.kron(dy, dx)
        return d


def _dense_block(A, r, c):
    ur, ri = np.unique(r, return_inverse=True)
    uc, ci = np.unique(c, return_inverse=True)
    if sp.issparse(A):
        B = A[ur][:, uc].toarray()
    else:
        B = A[np.ix_(ur, uc)]
    return B[np.ix_(ri, ci)]


def parameter_matrices(tspace):
    """Parameter-domain stiffness ``K⊗M + M⊗K`` and mass ``M⊗M``."""
    M, K = univariate_mass_stiffness(tspace.space)
    A = KroneckerOperator([(K, M, 1.0), (M, K, 1.0)])
    Mh = KroneckerOperator([(M, M, 1.0)])
    return A, Mh
