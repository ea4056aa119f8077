"""Additive multi-patch smoother and its boosted (Richardson-accelerated) variant.

``L_h = sum_T P_T L_T P_T^T`` over the pieces ``T`` (patch interiors, interface
edges, interior vertices). Patch interiors use the subspace-corrected mass
smoother; edges and vertices use exact solves with ``A_T = P_T^T A_h P_T``.

Subspace-corrected mass smoother
--------------------------------
On the univariate spline space with homogeneous Dirichlet conditions (the
interior functions ``B_1 .. B_{n-2}``), ``S_0`` collects the splines whose even
derivatives of orders ``2, 4, .., 2r`` (``r = (p-1)//2``) vanish at both
endpoints; ``S_1`` is its ``L2``-orthogonal complement, ``dim S_1 = 2r``. With
an ``M``-orthonormal basis ``Z_1`` of ``S_1`` we have ``M_1 = I``,
``K_1 = Z_1^T K Z_1`` and the ``L2`` projection onto ``S_0`` acts on
functionals as ``W_0 = M^{-1} - Z_1 Z_1^T``. The smoother is block diagonal
over ``S_a ⊗ S_b`` with

    L_00 = (1+2σ) M_0⊗M_0,       L_01 = M_0⊗((1+σ)M_1+K_1),
    L_10 = ((1+σ)M_1+K_1)⊗M_0,   L_11 = M_1⊗M_1 + K_1⊗M_1 + M_1⊗K_1,

first factor acting in x. Its inverse applied to a residual grid ``R`` (rows
indexed by y) is

    W_0 R W_0 / (1+2σ) + W_1 R W_0 + W_0 R W_1 + Z_1 L_11^{-1}(Z_1^T R Z_1) Z_1^T

with ``W_1 = Z_1 ((1+σ)I + K_1)^{-1} Z_1^T``; all mass solves use a banded
Cholesky factorization.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .bspline import basis_funs_ders, univariate_mass_stiffness
from .tensor import KroneckerOperator


def default_sigma(h, scale=5.0):
    """Shift ``σ = scale * h^-2``; 5 is the experimental choice, 12 the theoretical one."""
    return scale / h ** 2


def _to_banded(A, p):
    """Upper banded storage for :func:`scipy.linalg.cholesky_banded`."""
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
    d = A.shape[0]
    ab = np.zeros((p + 1, d))
    for k in range(p + 1):
        ab[p - k, k:] = np.diagonal(A, k)
    return ab


class BandedSPD:
    """Banded Cholesky factorization of an SPD band matrix."""

    def __init__(self, A, bandwidth):
        self.bandwidth = bandwidth
        self.factor = sla.cholesky_banded(_to_banded(A, bandwidth))

    def solve(self, B):
        return sla.cho_solve_banded((self.factor, False), B)


@dataclass(frozen=True)
class SubspaceSplitting:
    """``L2``-orthogonal splitting ``S_0 ⊕ S_1`` of the Dirichlet spline space.

    All matrices are in the coordinates of the interior basis
    ``B_1 .. B_{n-2}``.
    """

    space: object
    M: np.ndarray  # mass matrix (dense)
    K: np.ndarray  # stiffness matrix (dense)
    constraints: np.ndarray  # (2r, d)
    Z1: np.ndarray  # (d, 2r), M-orthonormal basis of S_1
    K1: np.ndarray  # (2r, 2r)

    @property
    def dim(self):
        return self.M.shape[0]

    @property
    def dim_s1(self):
        return self.Z1.shape[1]

    @property
    def M1(self):
        return np.eye(self.dim_s1)

    @cached_property
    def Z0(self):
        """Orthonormal (Euclidean) basis of ``S_0`` as coefficient columns."""
        if self.dim_s1 == 0:
            return np.eye(self.dim)
        return sla.null_space(self.constraints)

    @property
    def M0(self):
        return self.Z0.T @ self.M @ self.Z0

    @property
    def K0(self):
        return self.Z0.T @ self.K @ self.Z0

    def q1(self):
        """``Q_1 = I - Q_0``: the ``L2`` projector onto ``S_1`` in coefficients."""
        return self.Z1 @ (self.Z1.T @ self.M)

    def q0(self):
        return np.eye(self.dim) - self.q1()


def boundary_constraints(space):
    """Rows ``h^{2l} u^{(2l)}(0)`` and ``h^{2l} u^{(2l)}(1)``, ``l = 1..(p-1)//2``, on interior functions."""
    p, n = space.p, space.n
    r = (p - 1) // 2
    if r == 0:
        return np.zeros((0, n - 2))
    spans, ders = basis_funs_ders(space.knots, p, [0.0, 1.0], 2 * r)
    rows = []
    for l in range(1, r + 1):
        for k in range(2):
            row = np.zeros(n)
            row[spans[k] - p:spans[k] + 1] = ders[k, 2 * l] * space.h ** (2 * l)
            rows.append(row[1:-1])
    return np.array(rows)


def build_splitting(space):
    """Subspace splitting of the Dirichlet spline space; requires ``m > p``."""
    if space.m <= space.p:
        raise ValueError(f"subspace splitting needs more intervals than the degree (m={space.m}, p={space.p})")
    M, K = univariate_mass_stiffness(space)
    M = M.toarray()[1:-1, 1:-1]
    K = K.toarray()[1:-1, 1:-1]
    C = boundary_constraints(space)
    if C.shape[0] == 0:
        Z1 = np.zeros((M.shape[0], 0))
    else:
        Z1 = np.linalg.solve(M, C.T)
        Lc = np.linalg.cholesky(Z1.T @ M @ Z1)
        Z1 = sla.solve_triangular(Lc, Z1.T, lower=True).T
    K1 = Z1.T @ K @ Z1
    return SubspaceSplitting(space, M, K, C, Z1, K1)


class InteriorSmoother:
    """Subspace-corrected mass smoother on the ``(n-2)^2`` interior DOFs of one patch."""

    def __init__(self, splitting, sigma):
        self.splitting = splitting
        self.sigma = float(sigma)
        s = splitting
        self.d = s.dim
        self._mass = BandedSPD(s.M, s.space.p)
        Z1 = s.Z1
        r2 = s.dim_s1
        if r2:
            self._Y = sla.cho_factor((1.0 + self.sigma) * np.eye(r2) + s.K1)
            I = np.eye(r2)
            L11 = np.kron(I, I) + np.kron(I, s.K1) + np.kron(s.K1, I)
            self._L11 = sla.cho_factor(L11)
        self.Z1 = Z1

    @property
    def n_dofs(self):
        return self.d * self.d

    def _w0(self, B):
        # W_0 B = M^{-1} B - Z1 Z1^T B (columns of B)
        out = self._mass.solve(B)
        if self.Z1.shape[1]:
            out -= self.Z1 @ (self.Z1.T @ B)
        return out

    def _w1(self, B):
        return self.Z1 @ sla.cho_solve(self._Y, self.Z1.T @ B)

    def solve_grid(self, R):
        """Apply ``L_T^{-1}`` to a residual grid ``(d, d)`` (rows = y)."""
        A0 = self._w0(R)  # y-direction W_0
        out = self._w0(A0.T).T / (1.0 + 2.0 * self.sigma)
        if self.Z1.shape[1]:
            Z1 = self.Z1
            A1 = self._w1(R)  # y in S_1
            out += self._w0(A1.T).T  # x in S_0
            out += self._w1(A0.T).T  # y in S_0, x in S_1
            r2 = Z1.shape[1]
            C = Z1.T @ R @ Z1  # (y, x) in S_1 coordinates
            c = sla.cho_solve(self._L11, C.ravel()).reshape(r2, r2)
            out += Z1 @ c @ Z1.T
        return out

    def solve(self, r):
        return self.solve_grid(np.asarray(r).reshape(self.d, self.d)).ravel()

    def to_dense(self):
        """Assembled ``L_T`` (oracle construction from the block definition)."""
        s = self.splitting
        Q1 = s.q1()
        Q0 = np.eye(self.d) - Q1
        M, K = s.M, s.K
        Y = (1.0 + self.sigma) * M + K
        L = (1.0 + 2.0 * self.sigma) * np.kron(Q0.T @ M @ Q0, Q0.T @ M @ Q0)
        if s.dim_s1:
            Y1 = Q1.T @ Y @ Q1
            M0, M1, K1 = Q0.T @ M @ Q0, Q1.T @ M @ Q1, Q1.T @ K @ Q1
            # kron(y-factor, x-factor) in the flat x-fastest ordering
            L += np.kron(Y1, M0)  # x in S_0, y in S_1
            L += np.kron(M0, Y1)  # x in S_1, y in S_0
            L += np.kron(M1, M1) + np.kron(M1, K1) + np.kron(K1, M1)
        return L


class DenseSolver:
    """Exact solver for a small SPD block ``A_T``."""

    def __init__(self, A):
        self.A = np.asarray(A)
        self.factor = sla.cho_factor(self.A)

    @property
    def n_dofs(self):
        return self.A.shape[0]

    def solve(self, r):
        return sla.cho_solve(self.factor, r)

    def to_dense(self):
        return self.A


def build_piece_smoother(A, piece):
    """Exact solver with ``P_T^T A_h P_T``."""
    return DenseSolver(A.submatrix(piece.dofs))


class AdditiveSmoother:
    """``L_h^{-1} = sum_T P_T L_T^{-1} P_T^T`` over the DOF partition."""

    def __init__(self, pieces, local):
        self.pieces = list(pieces)
        self.local = list(local)
        self.N = int(sum(T.dofs.size for T in self.pieces))

    @classmethod
    def build(cls, A, dofmap, space, sigma_scale=5.0):
        """Additive smoother for the global operator ``A`` on a spline level."""
        sigma = default_sigma(space.h, sigma_scale)
        splitting = build_splitting(space) if space.m > space.p else None
        interior = InteriorSmoother(splitting, sigma) if splitting is not None else None
        local = []
        for T in dofmap.pieces:
            if T.kind == "interior" and interior is not None:
                local.append(interior)
            else:
                local.append(build_piece_smoother(A, T))
        return cls(dofmap.pieces, local)

    def solve(self, r):
        out = np.empty_like(r)
        for T, Lt in zip(self.pieces, self.local):
            out[T.dofs] = Lt.solve(r[T.dofs])
        return out

    __call__ = solve

    def to_dense(self):
        """Assembled block-diagonal ``L_h``."""
        L = np.zeros((self.N, self.N))
        for T, Lt in zip(self.pieces, self.local):
            L[np.ix_(T.dofs, T.dofs)] = Lt.to_dense()
        return L

    def inverse_dense(self):
        return np.column_stack([self.solve(e) for e in np.eye(self.N)])


def parameter_operator(A, space):
    """``Â_h + h^{-2} M̂_h`` applied patchwise through Kronecker factors."""
    from .assembly import GlobalOperator

    M, K = univariate_mass_stiffness(space)
    X = KroneckerOperator([(K, M, 1.0), (M, K, 1.0), (M, M, space.h ** -2)])
    return GlobalOperator([X] * len(A.patch_ops), A.dofmap)


class BoostedSmoother:
    """``L̃_h``: ``p`` steps of Richardson for ``Â_h + h^{-2} M̂_h`` preconditioned by ``L_h``.

    :meth:`solve` returns ``ϱ^{-1} p_p`` so that a smoothing step reads
    ``u += τ * solve(r)`` exactly as for the additive smoother.
    """

    def __init__(self, inner, X, steps, rho=0.95):
        self.inner = inner
        self.X = X
        self.steps = int(steps)
        self.rho = float(rho)

    @classmethod
    def build(cls, A, dofmap, space, sigma_scale=5.0, rho=0.95):
        inner = AdditiveSmoother.build(A, dofmap, space, sigma_scale)
        return cls(inner, parameter_operator(A, space), space.p, rho)

    def solve(self, r):
        rho = self.rho
        q = rho * self.inner.solve(r)
        for _ in range(1, self.steps):
            q = q + rho * self.inner.solve(r - self.X.matvec(q))
        return q / rho

    __call__ = solve

    def inverse_dense(self):
        return np.column_stack([self.solve(e) for e in np.eye(self.inner.N)])
