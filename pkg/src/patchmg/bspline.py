"""Univariate B-splines of maximum smoothness on (0, 1).

Evaluation follows the Cox-de Boor recurrence (Piegl & Tiller, A2.1-A2.3),
vectorized over evaluation points. The general routines accept any open knot
vector, so geometry maps with non-uniform knots can reuse them; the solution
spaces are always uniform (:class:`SplineSpace`).

Elements are half-open, ``((j-1)h, jh]``: a point sitting on an interior knot
is evaluated with the polynomial piece to its left, and ``x = 0`` belongs to
the first element.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np
import scipy.sparse as sp


def find_spans(knots, p, x):
    """Knot span index ``s`` with ``t[s] < x <= t[s+1]`` for each ``x``."""
    knots = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.searchsorted(knots, x, side="left") - 1
    return np.clip(s, p, len(knots) - p - 2)


def basis_funs_ders(knots, p, x, r=0):
    """Values and derivatives of the ``p+1`` active B-splines at ``x``.

    Parameters
    ----------
    knots : array_like
        Open knot vector.
    p : int
        Degree.
    x : array_like
        Evaluation points inside the knot range.
    r : int
        Highest derivative order.

    Returns
    -------
    spans : ndarray of int, shape (npts,)
        The active functions at ``x[k]`` are ``spans[k]-p .. spans[k]``.
    ders : ndarray, shape (npts, r+1, p+1)
        ``ders[k, d, a]`` is the ``d``-th derivative of function
        ``spans[k]-p+a`` at ``x[k]``.
    """
    t = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    spans = find_spans(t, p, x)
    npts = x.size
    ndu = np.zeros((npts, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((npts, p + 1))
    right = np.zeros((npts, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[spans + 1 - j]
        right[:, j] = t[spans + j] - x
        saved = np.zeros(npts)
        for k in range(j):
            ndu[:, j, k] = right[:, k + 1] + left[:, j - k]
            temp = ndu[:, k, j - 1] / ndu[:, j, k]
            ndu[:, k, j] = saved + right[:, k + 1] * temp
            saved = left[:, j - k] * temp
        ndu[:, j, j] = saved

    nd = min(r, p)
    ders = np.zeros((npts, r + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    # degree-reduction recurrence for derivatives (A2.3)
    for a_idx in range(p + 1):
        a = np.zeros((npts, 2, p + 1))
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, nd + 1):
            d = np.zeros(npts)
            rk, pk = a_idx - k, p - k
            if a_idx >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if a_idx - 1 <= pk else p - a_idx
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if a_idx <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, a_idx]
                d = d + a[:, s2, k] * ndu[:, a_idx, pk]
            ders[:, k, a_idx] = d
            s1, s2 = s2, s1
    for k in range(1, nd + 1):
        ders[:, k, :] *= factorial(p) / factorial(p - k)
    return spans, ders


def collocation_matrix(knots, p, x, r=0):
    """Sparse matrix ``C[k, i] = B_i^{(r)}(x[k])``."""
    t = np.asarray(knots, dtype=float)
    n = len(t) - p - 1
    x = np.atleast_1d(np.asarray(x, dtype=float))
    spans, ders = basis_funs_ders(t, p, x, r)
    rows = np.repeat(np.arange(x.size), p + 1)
    cols = (spans[:, None] - p + np.arange(p + 1)).ravel()
    return sp.csr_matrix((ders[:, r, :].ravel(), (rows, cols)), shape=(x.size, n))


def greville(knots, p):
    """Knot averages ``(t[i+1] + ... + t[i+p]) / p``."""
    t = np.asarray(knots, dtype=float)
    n = len(t) - p - 1
    if p == 0:
        return 0.5 * (t[:-1] + t[1:])
    return np.array([t[i + 1:i + p + 1].mean() for i in range(n)])


def insert_knot(knots, p, coeffs, u):
    """Boehm insertion of a single knot ``u``.

    ``coeffs`` has one row per basis function (any number of columns).
    Returns the new knot vector and coefficient rows.
    """
    t = np.asarray(knots, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    k = int(np.searchsorted(t, u, side="right") - 1)
    k = min(max(k, p), len(t) - p - 2)
    new = np.empty((c.shape[0] + 1,) + c.shape[1:])
    new[:k - p + 1] = c[:k - p + 1]
    new[k + 1:] = c[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (u - t[i]) / (t[i + p] - t[i])
        new[i] = alpha * c[i] + (1.0 - alpha) * c[i - 1]
    return np.insert(t, k + 1, u), new


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on (0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray


def gauss_rule(q):
    if q < 1:
        raise ValueError(f"need at least one quadrature node, got {q}")
    x, w = np.polynomial.legendre.leggauss(q)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w)


@dataclass(frozen=True)
class SplineSpace:
    """Splines of degree ``p`` and smoothness ``C^{p-1}`` on ``m`` uniform intervals."""

    p: int
    m: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"degree must be >= 1, got {self.p}")
        if self.m < 1:
            raise ValueError(f"interval count must be >= 1, got {self.m}")

    @property
    def n(self):
        return self.m + self.p

    @property
    def h(self):
        return 1.0 / self.m

    @cached_property
    def knots(self):
        return np.concatenate([np.zeros(self.p), np.linspace(0.0, 1.0, self.m + 1), np.ones(self.p)])

    @cached_property
    def breaks(self):
        return np.linspace(0.0, 1.0, self.m + 1)

    def greville(self):
        g = greville(self.knots, self.p)
        g[0], g[-1] = 0.0, 1.0
        return g

    def eval_basis(self, x, r=0):
        """Active functions at a single point.

        Returns ``(first, values)`` where ``values[a]`` is the ``r``-th derivative
        of basis function ``first + a`` (0-based).
        """
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"point {x} outside [0, 1]")
        if r < 0:
            raise ValueError("derivative order must be >= 0")
        spans, ders = basis_funs_ders(self.knots, self.p, [x], r)
        return int(spans[0]) - self.p, ders[0, r].copy()

    def collocation(self, x, r=0):
        return collocation_matrix(self.knots, self.p, x, r)

    def evaluate(self, coeffs, x, r=0):
        """Evaluate the spline with given coefficients (or coefficient columns)."""
        return self.collocation(x, r) @ np.asarray(coeffs)

    def quadrature_grid(self, q):
        """Element-wise Gauss nodes and weights on the whole interval."""
        rule = gauss_rule(q)
        b = self.breaks
        nodes = (b[:-1, None] + self.h * rule.nodes[None, :]).ravel()
        weights = np.tile(self.h * rule.weights, self.m)
        return nodes, weights

    def refine(self):
        return SplineSpace(self.p, 2 * self.m)


def make_space(p, m):
    return SplineSpace(p, m)


def univariate_matrix(space, da, db, q=None):
    """``[∫ B_i^{(da)} B_j^{(db)}]`` by element-wise Gauss quadrature."""
    q = space.p + 1 if q is None else q
    x, w = space.quadrature_grid(q)
    Ca = space.collocation(x, da)
    Cb = Ca if db == da else space.collocation(x, db)
    return (Ca.T @ sp.diags(w) @ Cb).tocsr()


def univariate_mass_stiffness(space, q=None):
    """Mass and stiffness matrices (sparse, bandwidth ``p``).

    ``q`` nodes per element; the default ``p+1`` integrates products of two
    degree-``p`` splines exactly.
    """
    M = univariate_matrix(space, 0, 0, q)
    K = univariate_matrix(space, 1, 1, q)
    return _symmetrize(M), _symmetrize(K)


def _symmetrize(A):
    return ((A + A.T) * 0.5).tocsr()


def h1d_gram(space):
    """Gram matrix of ``(u', v') + u(0) v(0)``; only the first function is nonzero at 0."""
    _, K = univariate_mass_stiffness(space)
    G = K.tolil()
    G[0, 0] += 1.0
    return G.tocsr()


def refinement_matrix(coarse, fine):
    """Coefficient map from ``coarse`` to the dyadically refined ``fine`` space.

    Column ``j`` holds the fine coefficients of coarse basis function ``j``.
    """
    if coarse.p != fine.p:
        raise ValueError("refinement requires equal degrees")
    if fine.m % coarse.m != 0:
        raise ValueError(f"spaces with m={coarse.m} and m={fine.m} are not nested")
    t = coarse.knots
    c = np.eye(coarse.n)
    new_knots = [u for u in fine.breaks[1:-1] if not np.any(np.isclose(u, coarse.breaks))]
    for u in new_knots:
        t, c = insert_knot(t, coarse.p, c, u)
    if not np.allclose(t, fine.knots):
        raise ValueError("fine space does not contain the coarse one")
    c[np.abs(c) < 1e-15] = 0.0
    return sp.csr_matrix(c)
