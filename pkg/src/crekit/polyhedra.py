"""H-representation polyhedra and the geometric primitives used downstream.

A polyhedron is ``{x | A x <= b}`` with rows optionally flagged as
equalities (tagged, not expanded, so rank counting during vertex
enumeration treats each equality as one active row).  All types are
immutable and every operation is a pure function, so concurrent use is
safe.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _qpsolve
from .errors import CapacityError, DimensionError, EmptySetError

TOL_ACTIVE = 1e-7
DEDUP_TOL = 1e-6
VERTEX_DIM_CAP = 12
COMBINATION_CAP = 5_000_000
CHEBYSHEV_CAP = 1e6


@dataclass(frozen=True)
class HPolyhedron:
    """Polyhedron ``{x | A x <= b}``; ``eq[i]`` turns row i into ``A_i x = b_i``."""

    A: np.ndarray
    b: np.ndarray
    eq: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.ndim != 2:
            raise DimensionError(f"A must be 2-d, got ndim {A.ndim}")
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {A.shape[0]} rows, b has {b.shape[0]}")
        if A.shape[1] < 1:
            raise DimensionError("dimension must be >= 1")
        eq = self.eq
        eq = np.zeros(A.shape[0], dtype=bool) if eq is None else np.asarray(eq, dtype=bool).ravel()
        if eq.shape[0] != A.shape[0]:
            raise DimensionError("eq mask length must equal the row count")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("polyhedron data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "eq", eq)

    @classmethod
    def whole_space(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        n = lower.shape[0]
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([upper, -lower])
        return cls(A, b)

    @classmethod
    def from_rows(cls, rows, dim):
        """Build from ``(a, beta, is_eq)`` triples."""
        if not rows:
            return cls.whole_space(dim)
        A = np.vstack([np.asarray(a, dtype=float).reshape(1, dim) for a, _, _ in rows])
        b = np.array([beta for _, beta, _ in rows], dtype=float)
        eq = np.array([e for _, _, e in rows], dtype=bool)
        return cls(A, b, eq)

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def nrows(self):
        return self.A.shape[0]

    def residuals(self, x):
        return self.A @ np.asarray(x, dtype=float).ravel() - self.b

    def contains(self, x, tol=TOL_ACTIVE):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.dim:
            raise DimensionError(f"point has dim {x.shape[0]}, polyhedron has {self.dim}")
        if self.nrows == 0:
            return True
        r = self.residuals(x)
        ok_ub = np.all(r <= tol)
        ok_eq = np.all(np.abs(r[self.eq]) <= tol) if self.eq.any() else True
        return bool(ok_ub and ok_eq)

    def intersect(self, other):
        if other.dim != self.dim:
            raise DimensionError("cannot intersect polyhedra of different dimension")
        return HPolyhedron(np.vstack([self.A, other.A]),
                           np.concatenate([self.b, other.b]),
                           np.concatenate([self.eq, other.eq]))

    def scaled_row_norms(self):
        return np.linalg.norm(self.A, axis=1)


def intersect(P1, P2):
    return P1.intersect(P2)


def contains(P, x, tol=TOL_ACTIVE):
    return P.contains(x, tol)


def _dedup_points(points, tol):
    out = []
    for pt in points:
        if all(np.linalg.norm(pt - v) >= tol for v in out):
            out.append(pt)
    return out


def _nontrivial_recession_direction(P, tol=1e-6):
    """True if the recession cone contains a nonzero direction."""
    n = P.dim
    cone_rows = [(P.A[i], 0.0, bool(P.eq[i])) for i in range(P.nrows)]
    box = HPolyhedron.box(-np.ones(n), np.ones(n))
    region = HPolyhedron.from_rows(cone_rows, n).intersect(box)
    for j in range(n):
        for sgn in (1.0, -1.0):
            f = np.zeros(n)
            f[j] = -sgn
            res = _qpsolve.solve_lp(f, region.A, region.b, eq=region.eq)
            if res.status == "optimal" and sgn * res.x[j] > tol:
                return True
    return False


_CHUNK = 65536


def _combo_array(m, k):
    count = math.comb(m, k)
    if count > COMBINATION_CAP:
        raise CapacityError(f"enumeration needs {count} row subsets of size {k}")
    return np.array(list(itertools.combinations(range(m), k)), dtype=np.int64)


def _feasible_mask(P, xs, feas_tol):
    res = xs @ P.A.T - P.b
    feas = np.all(res <= feas_tol, axis=1)
    if P.eq.any():
        feas &= np.all(np.abs(res[:, P.eq]) <= feas_tol, axis=1)
    return feas


def _cone_rays(P, feas_tol, dedup_tol):
    """Extreme rays of the recession cone via (dim-1)-subsets of active rows.

    The one-dimensional nullspace of each rank ``dim - 1`` row block is read
    off from its cofactor vector, which keeps the whole enumeration batched.
    """
    n = P.dim
    m = P.nrows
    A, eq = P.A, P.eq

    if n == 1:
        candidates = np.array([[1.0], [-1.0]])
    else:
        if m < n - 1:
            return []
        combos = _combo_array(m, n - 1)
        cands = []
        for chunk in np.array_split(combos, max(1, len(combos) // _CHUNK)):
            blocks = A[chunk]                      # (N, n-1, n)
            d = np.empty((blocks.shape[0], n))
            cols = np.arange(n)
            for i in range(n):
                minor = blocks[:, :, cols != i]
                d[:, i] = ((-1.0) ** i) * np.linalg.det(minor)
            norms = np.linalg.norm(d, axis=1)
            scale = np.prod(np.maximum(np.linalg.norm(blocks, axis=2), 1e-30), axis=1)
            ok = norms > 1e-10 * np.maximum(scale, 1e-30)
            d = d[ok] / norms[ok, None]
            cands.append(np.vstack([d, -d]))
        if not cands:
            return []
        candidates = np.vstack(cands)

    res = candidates @ A.T
    good = np.all(res <= feas_tol, axis=1)
    if eq.any():
        good &= np.all(np.abs(res[:, eq]) <= feas_tol, axis=1)
    return _dedup_points(list(candidates[good]), dedup_tol)


def vertices(P, dim_cap=VERTEX_DIM_CAP, feas_tol=TOL_ACTIVE, dedup_tol=DEDUP_TOL,
             want_rays=True):
    """All vertices of ``P`` (and extreme rays when ``P`` is unbounded).

    Exhaustive enumeration of row subsets of size ``dim``, batched; intended
    for the low-dimensional sets that degenerate-solution analysis
    produces.  Empty polyhedra yield empty lists; dimensions above
    ``dim_cap`` raise :class:`CapacityError`.  ``want_rays=False`` skips the
    unboundedness probe and ray enumeration (vertex-only consumers).
    """
    n = P.dim
    if n > dim_cap:
        raise CapacityError(f"vertex enumeration capped at dim {dim_cap}, got {n}")
    m = P.nrows
    verts = []
    if m >= n:
        combos = _combo_array(m, n)
        for chunk in np.array_split(combos, max(1, len(combos) // _CHUNK)):
            blocks = P.A[chunk]                    # (N, n, n)
            rhs = P.b[chunk]
            dets = np.linalg.det(blocks)
            scale = np.prod(np.maximum(np.linalg.norm(blocks, axis=2), 1e-30), axis=1)
            ok = np.abs(dets) > 1e-10 * np.maximum(scale, 1e-30)
            if not ok.any():
                continue
            xs = np.linalg.solve(blocks[ok], rhs[ok][..., None])[..., 0]
            for x in xs[_feasible_mask(P, xs, feas_tol)]:
                verts.append(x)
    verts = _dedup_points(verts, dedup_tol)

    rays = []
    if want_rays and (verts or not is_empty(P)) and _nontrivial_recession_direction(P):
        rays = _cone_rays(P, feas_tol, dedup_tol)
    return verts, rays


def min_norm_projection(P, x0):
    """Closest point of ``P`` to ``x0`` in the Euclidean norm."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape[0] != P.dim:
        raise DimensionError("projection point has wrong dimension")
    if P.contains(x0):
        return x0.copy()
    res = _qpsolve.solve_qp(np.eye(P.dim), -x0, P.A, P.b, eq=P.eq)
    if res.status != "optimal":
        raise EmptySetError("cannot project onto an empty polyhedron")
    return res.x


def normal_cone_generators(P, x, tol_active=TOL_ACTIVE):
    """Outward normals of the rows active at ``x`` (columns of the result).

    Equality rows contribute both signs.  ``x`` must lie in ``P``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if not P.contains(x, tol_active):
        raise ValueError("point is not in the polyhedron")
    r = P.residuals(x) if P.nrows else np.zeros(0)
    gens = []
    for i in range(P.nrows):
        if abs(r[i]) <= tol_active * max(1.0, np.linalg.norm(P.A[i])):
            gens.append(P.A[i])
            if P.eq[i]:
                gens.append(-P.A[i])
    if not gens:
        return np.zeros((P.dim, 0))
    return np.column_stack(gens)


def chebyshev_center(P, cap=CHEBYSHEV_CAP):
    """Chebyshev center and radius; radius ``>= cap`` means unbounded ball.

    Raises :class:`EmptySetError` when ``P`` has no feasible point.  A zero
    radius flags a lower-dimensional (flat) set.
    """
    n = P.dim
    if P.nrows == 0:
        return np.zeros(n), math.inf
    norms = P.scaled_row_norms()
    radius_col = np.where(P.eq, 0.0, norms)
    A = np.hstack([P.A, radius_col.reshape(-1, 1)])
    A = np.vstack([A, np.concatenate([np.zeros(n), [1.0]])])
    b = np.concatenate([P.b, [cap]])
    eq = np.concatenate([P.eq, [False]])
    f = np.concatenate([np.zeros(n), [-1.0]])
    nonneg = np.concatenate([np.zeros(n, dtype=bool), [True]])
    res = _qpsolve.solve_lp(f, A, b, eq=eq, nonneg=nonneg)
    if res.status != "optimal":
        raise EmptySetError("polyhedron is empty")
    return res.x[:n], float(res.x[n])


def interior_point(P, cap=CHEBYSHEV_CAP):
    return chebyshev_center(P, cap)


def is_empty(P):
    try:
        chebyshev_center(P)
    except EmptySetError:
        return True
    return False
