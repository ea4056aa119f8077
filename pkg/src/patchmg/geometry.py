"""Geometry maps, multi-patch topology and the global numbering of DOFs.

Side numbering of the parameter square: 0 = west (x=0), 1 = east (x=1),
2 = south (y=0), 3 = north (y=1). Corner numbering: 0 = (0,0), 1 = (1,0),
2 = (0,1), 3 = (1,1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .bspline import basis_funs_ders, greville


class GeometryError(ValueError):
    """Invalid geometry map (e.g. non-positive Jacobian determinant)."""


class TopologyError(ValueError):
    """Patch layout violating the fully matching, conforming assumptions."""


SIDES = ("west", "east", "south", "north")
CORNERS = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
# corners lying on each side, in the side's parameter direction
SIDE_CORNERS = {0: (0, 2), 1: (1, 3), 2: (0, 1), 3: (2, 3)}


def _collocation_dense(knots, p, x, r):
    t = np.asarray(knots, dtype=float)
    n = len(t) - p - 1
    spans, ders = basis_funs_ders(t, p, x, r)
    out = np.zeros((r + 1, len(x), n))
    rows = np.arange(len(x))
    for a in range(p + 1):
        out[:, rows, spans - p + a] = ders[:, :, a].T
    return out


class GeometryMap:
    """Tensor B-spline map ``G: [0,1]^2 -> R^2``.

    ``control`` has shape ``(nv, nu, 2)``: ``control[j, i]`` multiplies
    ``B_i(x) B_j(y)``.
    """

    def __init__(self, degree, knots_u, knots_v, control):
        self.degree = tuple(int(d) for d in degree)
        self.knots_u = np.asarray(knots_u, dtype=float)
        self.knots_v = np.asarray(knots_v, dtype=float)
        self.control = np.asarray(control, dtype=float)
        pu, pv = self.degree
        nu = len(self.knots_u) - pu - 1
        nv = len(self.knots_v) - pv - 1
        if self.control.shape != (nv, nu, 2):
            raise GeometryError(
                f"control grid shape {self.control.shape} inconsistent with knots (expected {(nv, nu, 2)})")
        for t in (self.knots_u, self.knots_v):
            if np.any(np.diff(t) < 0) or t[0] != 0.0 or t[-1] != 1.0:
                raise GeometryError("knot vectors must be nondecreasing on [0, 1]")
        self._affine = self._detect_affine()

    @classmethod
    def bilinear(cls, corners):
        """Degree-1 map from the four corner images (order: (0,0), (1,0), (0,1), (1,1))."""
        c = np.asarray(corners, dtype=float).reshape(2, 2, 2)
        return cls((1, 1), [0, 0, 1, 1], [0, 0, 1, 1], c)

    @classmethod
    def rectangle(cls, x0, y0, wx=1.0, wy=1.0):
        return cls.bilinear([(x0, y0), (x0 + wx, y0), (x0, y0 + wy), (x0 + wx, y0 + wy)])

    @classmethod
    def identity(cls):
        return cls.rectangle(0.0, 0.0)

    def grid(self, xu, xv, r=1):
        """Map and derivatives on the tensor grid ``xu x xv``.

        Returns a dict with arrays of shape ``(len(xv), len(xu), 2)``: ``'x'``,
        and for ``r >= 1`` ``'du'``, ``'dv'``; for ``r >= 2`` ``'duu'``,
        ``'duv'``, ``'dvv'``.
        """
        pu, pv = self.degree
        Bu = _collocation_dense(self.knots_u, pu, np.atleast_1d(xu), r)
        Bv = _collocation_dense(self.knots_v, pv, np.atleast_1d(xv), r)
        C = self.control

        def ev(du, dv):
            return np.einsum("bj,ai,jik->bak", Bv[dv], Bu[du], C)

        out = {"x": ev(0, 0)}
        if r >= 1:
            out["du"], out["dv"] = ev(1, 0), ev(0, 1)
        if r >= 2:
            out["duu"], out["duv"], out["dvv"] = ev(2, 0), ev(1, 1), ev(0, 2)
        return out

    def __call__(self, points):
        """Physical points and Jacobians for scattered parameter points ``(N, 2)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        X = np.empty((len(pts), 2))
        J = np.empty((len(pts), 2, 2))
        for k, (u, v) in enumerate(pts):
            g = self.grid([u], [v], 1)
            X[k] = g["x"][0, 0]
            J[k, :, 0] = g["du"][0, 0]
            J[k, :, 1] = g["dv"][0, 0]
        return X, J

    def _detect_affine(self):
        pu, pv = self.degree
        gu = greville(self.knots_u, pu)
        gv = greville(self.knots_v, pv)
        U, V = np.meshgrid(gu, gv)
        design = np.column_stack([np.ones(U.size), U.ravel(), V.ravel()])
        P = self.control.reshape(-1, 2)
        coef, *_ = np.linalg.lstsq(design, P, rcond=None)
        scale = max(1.0, np.abs(P).max())
        if np.abs(design @ coef - P).max() <= 1e-12 * scale:
            return coef[0], coef[1:].T  # offset, Jacobian (2x2)
        return None

    @property
    def is_affine(self):
        return self._affine is not None

    @property
    def affine_jacobian(self):
        if self._affine is None:
            raise GeometryError("map is not affine")
        return self._affine[1]

    def side_points(self, side, t):
        """Images of parameter points ``t`` along a side, oriented by increasing ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if side in (0, 1):
            g = self.grid([float(side)], t, 0)["x"][:, 0, :]
        else:
            g = self.grid(t, [float(side - 2)], 0)["x"][0, :, :]
        return g

    def corner_points(self):
        return np.array([self.grid([u], [v], 0)["x"][0, 0] for u, v in CORNERS])

    def bounding_box(self):
        P = self.control.reshape(-1, 2)
        return P.min(axis=0), P.max(axis=0)

    def check_jacobian(self, xu, xv):
        g = self.grid(xu, xv, 1)
        det = g["du"][..., 0] * g["dv"][..., 1] - g["du"][..., 1] * g["dv"][..., 0]
        if np.any(det <= 0):
            raise GeometryError(f"non-positive Jacobian determinant (min {det.min():.3e})")
        return det

    def __repr__(self):
        return f"GeometryMap(degree={self.degree}, control_grid={self.control.shape[:2]})"


def side_local_indices(side, n):
    """Flat local indices of the ``n`` basis functions along a side."""
    k = np.arange(n)
    if side == 0:
        return k * n
    if side == 1:
        return k * n + n - 1
    if side == 2:
        return k
    return (n - 1) * n + k


def corner_local_index(corner, n):
    i = 0 if corner in (0, 2) else n - 1
    j = 0 if corner in (0, 1) else n - 1
    return i + n * j


@dataclass(frozen=True)
class Interface:
    patch_a: int
    side_a: int
    patch_b: int
    side_b: int
    reversed: bool


@dataclass
class MultiPatchTopology:
    patches: list
    interfaces: list
    boundary_sides: list  # (patch, side)
    vertices: list  # list of lists of (patch, corner), grouped by location
    vertex_on_boundary: list
    tol: float

    @property
    def n_patches(self):
        return len(self.patches)

    def interior_vertices(self):
        return [v for v, b in zip(self.vertices, self.vertex_on_boundary) if not b]

    def side_is_boundary(self, k, s):
        return (k, s) in self._boundary_set

    def __post_init__(self):
        self._boundary_set = set(self.boundary_sides)


def domain_tolerance(patches, rel=1e-8):
    lo = np.min([g.bounding_box()[0] for g in patches], axis=0)
    hi = np.max([g.bounding_box()[1] for g in patches], axis=0)
    return rel * float(np.linalg.norm(hi - lo))


def build_topology(patches, space, tol=None):
    """Detect interfaces by matching the mapped Greville points of patch sides."""
    if tol is None:
        tol = domain_tolerance(patches)
    g = space.greville()
    n = len(g)
    pts = {(k, s): G.side_points(s, g) for k, G in enumerate(patches) for s in range(4)}
    keys = sorted(pts)
    interfaces = []
    matched = {}
    for ka, kb in combinations(keys, 2):
        if ka[0] == kb[0]:
            continue
        A, B = pts[ka], pts[kb]
        D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2) < tol
        forward = bool(np.all(np.diag(D)))
        backward = bool(np.all(np.diag(D[:, ::-1])))
        if forward or backward:
            for key in (ka, kb):
                if key in matched:
                    raise TopologyError(f"side {SIDES[key[1]]} of patch {key[0]} matches more than one side")
            iface = Interface(ka[0], ka[1], kb[0], kb[1], reversed=not forward)
            matched[ka] = matched[kb] = iface
            interfaces.append(iface)
        elif D[1:-1, :].any() or D[:, 1:-1].any():
            raise TopologyError(
                f"sides {SIDES[ka[1]]} of patch {ka[0]} and {SIDES[kb[1]]} of patch {kb[0]} "
                "share some but not all Greville points (not fully matching)")
    boundary = [key for key in keys if key not in matched]

    corners = [(k, c) for k in range(len(patches)) for c in range(4)]
    cpts = np.array([patches[k].corner_points()[c] for k, c in corners])
    groups = _cluster(cpts, tol)
    bset = set(boundary)
    vertices, on_bnd = [], []
    for grp in groups:
        members = [corners[i] for i in grp]
        vertices.append(members)
        on_bnd.append(any((k, s) in bset for k, c in members for s in range(4) if c in SIDE_CORNERS[s]))
    return MultiPatchTopology(list(patches), interfaces, boundary, vertices, on_bnd, tol)


def _cluster(points, tol):
    parent = list(range(len(points)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in combinations(range(len(points)), 2):
        if np.linalg.norm(points[a] - points[b]) < tol:
            parent[find(a)] = find(b)
    groups = {}
    for a in range(len(points)):
        groups.setdefault(find(a), []).append(a)
    return sorted(groups.values())


@dataclass
class Piece:
    """A patch interior, interface edge or interior vertex with its global DOFs."""

    kind: str  # "interior", "edge" or "vertex"
    label: tuple
    dofs: np.ndarray
    patch: int | None = None  # owning patch for interior pieces


@dataclass
class DofMap:
    """Local-to-global numbering for all patches.

    ``l2g[k][i]`` is the global id of local basis function ``i`` of patch
    ``k``. Free DOFs are numbered ``0 .. N-1``; Dirichlet (boundary) DOFs get
    the ids ``N .. N+N_b-1``. Free DOFs are ordered piece by piece: all patch
    interiors (x-fastest within a patch), then edges, then vertices, so every
    interior piece is a contiguous slice.
    """

    n: int
    l2g: list
    N: int
    N_boundary: int
    pieces: list = field(default_factory=list)

    @property
    def n_total(self):
        return self.N + self.N_boundary

    def is_boundary(self, k):
        return self.l2g[k] >= self.N

    def multiplicity(self):
        """Number of patches each extended DOF belongs to."""
        return np.bincount(np.concatenate(self.l2g), minlength=self.n_total).astype(float)

    def pieces_of(self, kind):
        return [T for T in self.pieces if T.kind == kind]

    def local_positions(self, k, dofs):
        """Local indices in patch ``k`` of the given global DOFs and their positions in ``dofs``."""
        dofs = np.asarray(dofs)
        order = np.argsort(dofs)
        sd = dofs[order]
        g = self.l2g[k]
        pos = np.searchsorted(sd, g)
        pos = np.clip(pos, 0, len(sd) - 1)
        hit = sd[pos] == g
        loc = np.nonzero(hit)[0]
        return loc, order[pos[loc]]

    def scatter_matrix(self, k):
        """Binary ``N x n^2`` matrix mapping local coefficients of patch ``k`` to free DOFs."""
        g = self.l2g[k]
        keep = g < self.N
        n2 = self.n * self.n
        return sp.csr_matrix((np.ones(keep.sum()), (g[keep], np.arange(n2)[keep])), shape=(self.N, n2))


def build_dof_map(topology, space):
    """Global numbering by union-find over the identified boundary-ring DOFs."""
    n = space.n
    K = topology.n_patches
    n2 = n * n
    parent = np.arange(K * n2)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for iface in topology.interfaces:
        la = side_local_indices(iface.side_a, n)
        lb = side_local_indices(iface.side_b, n)
        if iface.reversed:
            lb = lb[::-1]
        for a, b in zip(la, lb):
            union(iface.patch_a * n2 + a, iface.patch_b * n2 + b)
    for members in topology.vertices:
        ids = [k * n2 + corner_local_index(c, n) for k, c in members]
        for b in ids[1:]:
            union(ids[0], b)

    roots = np.array([find(a) for a in range(K * n2)])
    on_bnd = np.zeros(K * n2, dtype=bool)
    for k, s in topology.boundary_sides:
        on_bnd[k * n2 + side_local_indices(s, n)] = True
    bnd_root = np.zeros(K * n2, dtype=bool)
    bnd_root[roots[on_bnd]] = True
    is_bnd = bnd_root[roots]

    # consistency: a class may hold at most one local DOF per patch
    owner_patch = np.repeat(np.arange(K), n2)
    if len(np.unique(roots * K + owner_patch)) != K * n2:
        raise TopologyError("inconsistent matching: a local DOF was identified with two DOFs of one patch")

    gid = -np.ones(K * n2, dtype=np.int64)
    next_id = 0
    pieces = []
    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    interior = interior.ravel()
    for k in range(K):
        loc = np.nonzero(interior)[0]
        ids = np.arange(next_id, next_id + loc.size)
        gid[k * n2 + loc] = ids
        pieces.append(Piece("interior", ("patch", k), ids, patch=k))
        next_id += loc.size

    def assign(keys):
        nonlocal next_id
        ids = []
        for a in keys:
            r = roots[a]
            if gid[r] < 0:
                gid[r] = next_id
                next_id += 1
            ids.append(gid[r])
        return np.array(ids, dtype=np.int64)

    for e, iface in enumerate(topology.interfaces):
        la = side_local_indices(iface.side_a, n)[1:-1]
        ids = assign(iface.patch_a * n2 + la)
        pieces.append(Piece("edge", ("interface", e), ids))
    for v, members in enumerate(topology.vertices):
        if topology.vertex_on_boundary[v]:
            continue
        k, c = members[0]
        ids = assign([k * n2 + corner_local_index(c, n)])
        pieces.append(Piece("vertex", ("vertex", v), ids))
    N = next_id
    # boundary classes
    for a in np.nonzero(is_bnd)[0]:
        r = roots[a]
        if gid[r] < 0:
            gid[r] = next_id
            next_id += 1
    full = gid[roots]
    if np.any(full < 0):
        raise TopologyError("DOFs on a patch side that is neither interface nor boundary")
    l2g = [full[k * n2:(k + 1) * n2].copy() for k in range(K)]
    return DofMap(n, l2g, N, next_id - N, pieces)


def classify_pieces(topology, space):
    """The pieces (interiors, edges, vertices) with their global DOF lists."""
    return build_dof_map(topology, space).pieces
