"""Enumeration of every critical region containing a query parameter.

Pipeline for a query ``theta``: reformulate to complementarity form, solve
at ``theta`` by complementary pivoting, decide whether the solution is
unique through an auxiliary LCP over the degenerate index set, enumerate
the vertices of the solution set when it is not, enumerate all full-rank
complementary bases at each vertex, and emit one critical region plus
value-function segment per basis.  The union of the returned regions
partitions a neighborhood of ``theta``, which is what lets callers step
across region boundaries even at degenerate parameters.
"""

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import polyhedra
from .errors import CapacityError, EmptySetError, InfeasibleParameterError
from .lcp import (ComplementaryBasis, Lcp, basis_matrix, lemke_solve,
                  recover_basis_from_point, transformed_coefficients)
from .mplcp import critical_region, to_mplcp

D_TOL = 1e-7
RANK_TOL = 1e-9
ENUM_CAP = 20
FLAG_RADIUS = 1e-7


@dataclass(frozen=True)
class UniquenessVerdict:
    """Outcome of the solution-set uniqueness test.

    For the auxiliary-LCP method, ``unique`` is decided from the ancillary
    variable ``z0_star`` and the final component ``u_last`` of the auxiliary
    solution: an infeasible auxiliary problem (``z0_star > 0``) or a
    solution with ``u_last > 0`` certifies a unique solution; a solution
    with ``u_last = 0`` exhibits a nonzero degenerate direction, so the
    solution set is infinite.  When the tableau cannot be normalized to
    w-basic degenerate pairs the verdict comes from direction LPs over the
    solution-set polyhedron instead (``method = 'direction-lp'``) and the
    auxiliary quantities are reported as NaN.
    """

    unique: bool
    z0_star: float
    u_last: float
    method: str = "aux-lcp"


@dataclass(frozen=True)
class RegionBundle:
    """All critical regions containing one query parameter."""

    theta: np.ndarray
    vertices: list                   # full complementary points, length 2p each
    bases: list
    regions: list
    verdict: UniquenessVerdict = None
    diagnostics: dict = field(default_factory=dict)
    degeneracy_ms: float = 0.0


def uniqueness_test(Mbar, D, tol=D_TOL):
    """Solution-set uniqueness via the auxiliary LCP over the degenerate set.

    ``D`` holds the 1-based pairs whose basic variable sits at zero.  The
    auxiliary problem couples the degenerate submatrix with a normalization
    row that forces a nonzero candidate direction; Lemke then either proves
    infeasibility (no such direction: unique) or returns a witness whose
    last component separates a strict certificate (unique) from a genuine
    degenerate direction (nonunique).
    """
    D0 = [k - 1 for k in D]
    nD = len(D0)
    Mbar = np.asarray(Mbar, dtype=float)
    L = np.zeros((nD + 1, nD + 1))
    if nD:
        L[:nD, :nD] = Mbar[np.ix_(D0, D0)]
        L[:nD, nD] = -1.0
        L[nD, :nD] = 1.0
    d = np.zeros(nD + 1)
    d[nD] = -1.0
    sol = lemke_solve(Lcp(L, d), assume_copositive_plus=False)
    if sol.solved:
        z0_star = 0.0
        u_last = float(sol.z[nD])
    else:
        z0_star = float(sol.z0)
        u_last = 0.0
    return UniquenessVerdict(unique=(z0_star > tol) or (u_last > tol),
                             z0_star=z0_star, u_last=u_last)


def _rank(Amat, tol=RANK_TOL):
    if Amat.size == 0:
        return 0
    R = scipy.linalg.qr(Amat, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.sum(diag > tol * diag[0]))


def _full_rank_basis(M, basis):
    return _rank(basis_matrix(M, basis)) == basis.p


def _normalize_degenerate_pairs(M, basis, D):
    """Prefer the w variable as the basic one on every degenerate pair.

    The solution-set parametrization moves the nonbasic z components of the
    degenerate pairs, so each swap that keeps the basis matrix invertible
    simplifies the degenerate block to a principal submatrix of a principal
    pivot transform (hence PSD for KKT-structured instances).
    """
    current = basis
    stuck = []
    for pair in D:
        if (pair + basis.p) in current.index_set:
            cand = current.swap(pair)
            if _full_rank_basis(M, cand):
                current = cand
            else:
                stuck.append(pair)
    return current, stuck


def _scaled_degenerate_pairs(coeffs, y_basic, tol=D_TOL):
    """1-based pairs whose basic value is zero after row max-norm scaling."""
    tab = np.hstack([coeffs.Mbar, coeffs.qbar.reshape(-1, 1), coeffs.Qbar])
    scale = np.maximum(np.max(np.abs(tab), axis=1), 1e-300)
    return tuple(int(k) + 1 for k in np.where(np.abs(y_basic) / scale <= tol)[0])


def _pruned_polyhedron(A, b, eq, coef_tol=1e-12, sat_tol=1e-9):
    """Drop rows with no variable coupling that are trivially satisfied and
    collapse duplicate rows; keeps vertex enumeration cheap."""
    keep = []
    seen = set()
    for i in range(A.shape[0]):
        row = A[i]
        if np.max(np.abs(row)) <= coef_tol:
            violated = (b[i] < -sat_tol) or (eq[i] and abs(b[i]) > sat_tol)
            if not violated:
                continue
        key = (tuple(np.round(row, 12)), round(float(b[i]), 12), bool(eq[i]))
        if key in seen:
            continue
        seen.add(key)
        keep.append(i)
    keep = np.array(keep, dtype=int)
    if keep.size == 0:
        return polyhedra.HPolyhedron.whole_space(A.shape[1])
    return polyhedra.HPolyhedron(A[keep], b[keep], eq[keep])


def _lift_point(basis, basic_values, zeta=None, D=None):
    """Assemble the full (w, z) vector from basic values and degenerate moves."""
    p = basis.p
    y = np.zeros(2 * p)
    cols = basis.pair_columns()
    for k in range(p):
        y[cols[k]] = basic_values[k]
    if zeta is not None:
        for val, pair in zip(zeta, D):
            y[p + pair - 1] = val
    np.maximum(y, 0.0, out=y)
    return y


def solution_set_vertices(coeffs, basis, D, theta, homogeneous=False,
                          dim_cap=polyhedra.VERTEX_DIM_CAP):
    """Vertices of the solution set at ``theta``, as full (w, z) vectors.

    Requires the w variable basic on every pair in ``D`` (see
    ``_normalize_degenerate_pairs``).  The moving coordinates are the
    nonbasic z components of the degenerate pairs; the polyhedron couples
    their nonnegativity, the symmetric-part nullspace condition, and
    feasibility of the responding basic variables.  With ``homogeneous``
    the literal cone form (no basic-variable offset) is used instead, which
    collapses the vertex list to the base point.
    """
    D0 = [k - 1 for k in D]
    nD = len(D0)
    p = basis.p
    cols = basis.pair_columns()
    for k0 in D0:
        if cols[k0] >= p:
            raise ValueError(f"pair {k0 + 1} must have its w variable basic; normalize first")

    y_basic = coeffs.qbar + (coeffs.Qbar @ np.asarray(theta, dtype=float).ravel()
                             if coeffs.Qbar.shape[1] else 0.0)
    Mcols = coeffs.Mbar[:, D0]
    Mdd = coeffs.Mbar[np.ix_(D0, D0)]

    rows_a = [-np.eye(nD), Mdd + Mdd.T]
    rows_b = [np.zeros(nD), np.zeros(nD)]
    rows_eq = [np.zeros(nD, dtype=bool), np.ones(nD, dtype=bool)]
    rows_a.append(-Mcols)
    rows_b.append(np.zeros(p) if homogeneous else y_basic)
    rows_eq.append(np.zeros(p, dtype=bool))
    Z = _pruned_polyhedron(np.vstack(rows_a), np.concatenate(rows_b),
                           np.concatenate(rows_eq))

    verts, _rays = polyhedra.vertices(Z, dim_cap=dim_cap, want_rays=False)
    out = []
    for zeta in verts:
        out.append(_lift_point(basis, y_basic + Mcols @ zeta, zeta, D))
    if not out:
        out.append(_lift_point(basis, y_basic))
    return out


def _solution_set_parametrization(M, base_z, q_eff, tol=D_TOL):
    """Nullspace parametrization of the monotone-LCP solution set.

    Around a solution ``z0`` the set is ``{z >= 0 | Mz + q >= 0,
    (M + M')(z - z0) = 0, q'(z - z0) = 0}`` together with the
    cross-complementarity pins ``z_i = 0`` on pairs whose w stays positive
    and ``(Mz + q)_i = 0`` on pairs whose z stays positive (both exact for
    monotone instances).  The pins keep the affine hull ``z0 + N Xi`` at
    the dimension of the set itself even for fully skew (LP) blocks.
    Returns ``(N, P)`` with ``P`` the polyhedron over ``Xi`` (``N`` has
    zero columns for a singleton).
    """
    p = M.shape[0]
    w0 = M @ base_z + q_eff
    scale = max(1.0, float(np.max(np.abs(q_eff))))
    W_rows = [k for k in range(p) if w0[k] > tol * scale]
    Z_rows = [k for k in range(p) if base_z[k] > tol * scale]
    blocks = [M + M.T, q_eff.reshape(1, -1)]
    if W_rows:
        blocks.append(np.eye(p)[W_rows])
    if Z_rows:
        blocks.append(M[Z_rows])
    E = np.vstack(blocks)
    s = np.linalg.svd(E, compute_uv=False)
    rank = int(np.sum(s > 1e-9 * max(1.0, s[0] if s.size else 1.0)))
    vh = np.linalg.svd(E)[2]
    N = vh[rank:].T
    if N.shape[1] == 0:
        return N, None
    rows_a = np.vstack([-N, -(M @ N)])
    rows_b = np.concatenate([base_z, w0])
    P = _pruned_polyhedron(rows_a, rows_b, np.zeros(rows_b.shape[0], dtype=bool))
    return N, P


def _direction_lp_verdict(M, base_z, q_eff, tol=1e-7):
    """Uniqueness via direction LPs when the tableau cannot be normalized.

    The solution set is a singleton iff no coordinate of its nullspace
    parametrization can move away from zero; an unbounded direction counts
    as movement.
    """
    from . import _qpsolve

    N, Z = _solution_set_parametrization(M, base_z, q_eff)
    r = N.shape[1]
    unique = True
    for i in range(r):
        if not unique:
            break
        for sgn in (1.0, -1.0):
            f = np.zeros(r)
            f[i] = -sgn
            res = _qpsolve.solve_lp(f, Z.A, Z.b, eq=Z.eq)
            if res.status != "optimal" or sgn * res.x[i] > tol:
                unique = False
                break
    return UniquenessVerdict(unique=unique, z0_star=float("nan"),
                             u_last=float("nan"), method="direction-lp")


def _mangasarian_vertices(mplcp_, base_z, q_eff, dim_cap=polyhedra.VERTEX_DIM_CAP):
    """Fallback solution-set vertices via the monotone-LCP characterization."""
    M = mplcp_.M
    N, Z = _solution_set_parametrization(M, base_z, q_eff)
    if N.shape[1] == 0:
        w0 = M @ base_z + q_eff
        return [np.concatenate([np.maximum(w0, 0.0), base_z])]
    verts, _rays = polyhedra.vertices(Z, dim_cap=dim_cap, want_rays=False)
    out = []
    for xi in verts:
        z = base_z + N @ xi
        w = M @ z + q_eff
        out.append(np.concatenate([np.maximum(w, 0.0), np.maximum(z, 0.0)]))
    if not out:
        w0 = M @ base_z + q_eff
        out.append(np.concatenate([np.maximum(w0, 0.0), base_z]))
    return out


def enumerate_bases_for_vertex(Y, y, tol=D_TOL, cap=ENUM_CAP, rank_tol=RANK_TOL):
    """All full-rank complementary bases representing a complementary point.

    Generates the ``2^|D|`` candidate index sets (one choice per degenerate
    pair) and keeps those whose basis matrix passes the pivoted-QR rank
    test.  Raises :class:`CapacityError` when ``|D|`` exceeds ``cap``.
    """
    Y = np.asarray(Y, dtype=float)
    p = Y.shape[0]
    y = np.asarray(y, dtype=float).ravel()
    W, Z, D = recover_basis_from_point(y[:p], y[p:], tol)
    if len(D) > cap:
        raise CapacityError(
            f"{2 ** len(D)} basis candidates from {len(D)} degenerate pairs exceeds cap 2^{cap}")
    fixed = [w for w in W] + [p + z for z in Z]
    kept = []
    for bits in itertools.product((0, 1), repeat=len(D)):
        idx = list(fixed) + [k if bit == 0 else p + k for k, bit in zip(D, bits)]
        cols0 = [i - 1 for i in sorted(idx)]
        if _rank(Y[:, cols0], rank_tol) == p:
            kept.append(ComplementaryBasis(tuple(idx), p))
    kept.sort(key=lambda bb: bb.indices)
    return kept


def _build_Y(M):
    p = M.shape[0]
    return np.hstack([np.eye(p), -M])


def single_region_at(problem, theta):
    """One critical region containing ``theta``: the pivot basis segment only.

    Skips the uniqueness test and all enumeration; suitable for consumers
    that need any one valid value-function segment (subgradient oracles).
    Raises :class:`InfeasibleParameterError` when infeasible.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    mplcp_ = to_mplcp(problem)
    sol = lemke_solve(Lcp(mplcp_.M, mplcp_.q_at(theta)))
    if not sol.solved:
        raise InfeasibleParameterError(
            f"infeasible at theta (z0 = {sol.z0:.6g})", z0=sol.z0)
    return critical_region(mplcp_, sol.basis)


def all_regions_containing(problem, theta, d_tol=D_TOL, enum_cap=ENUM_CAP,
                           dim_cap=polyhedra.VERTEX_DIM_CAP, flag_radius=FLAG_RADIUS,
                           homogeneous=False):
    """Every critical region (with value function) containing ``theta``.

    Raises :class:`InfeasibleParameterError` when the instance is
    infeasible at ``theta`` (the ancillary variable is the certificate) and
    :class:`CapacityError` when an enumeration would exceed its cap.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    mplcp_ = to_mplcp(problem)
    M, q, Q = mplcp_.M, mplcp_.q, mplcp_.Q
    sol = lemke_solve(Lcp(M, mplcp_.q_at(theta)))
    if not sol.solved:
        raise InfeasibleParameterError(
            f"infeasible at theta (z0 = {sol.z0:.6g})", z0=sol.z0)

    basis = sol.basis
    coeffs = transformed_coefficients(M, q, Q, basis)
    y_basic = coeffs.qbar + (coeffs.Qbar @ theta if problem.d else 0.0)
    D = _scaled_degenerate_pairs(coeffs, y_basic, d_tol)
    diagnostics = {"stuck_pairs": [], "per_vertex": [], "dropped_regions": 0}

    t_deg = 0.0
    verdict = None
    if not D:
        points = [_lift_point(basis, y_basic)]
        bases = [basis]
    else:
        t0 = time.perf_counter()
        basis, stuck = _normalize_degenerate_pairs(M, basis, D)
        if basis is not sol.basis:
            coeffs = transformed_coefficients(M, q, Q, basis)
            y_basic = coeffs.qbar + (coeffs.Qbar @ theta if problem.d else 0.0)
            D = _scaled_degenerate_pairs(coeffs, y_basic, d_tol)
        diagnostics["stuck_pairs"] = stuck

        if stuck:
            verdict = _direction_lp_verdict(M, sol.z, mplcp_.q_at(theta), d_tol)
        else:
            verdict = uniqueness_test(coeffs.Mbar, D, d_tol)
        if verdict.unique:
            points = [_lift_point(basis, y_basic)]
        elif stuck:
            points = _mangasarian_vertices(mplcp_, sol.z, mplcp_.q_at(theta), dim_cap)
        else:
            points = solution_set_vertices(coeffs, basis, D, theta,
                                           homogeneous=homogeneous, dim_cap=dim_cap)

        Y = _build_Y(M)
        seen = {}
        for y in points:
            found = enumerate_bases_for_vertex(Y, y, d_tol, enum_cap)
            _, _, Dy = recover_basis_from_point(y[:mplcp_.p], y[mplcp_.p:], d_tol)
            diagnostics["per_vertex"].append(
                {"n_degenerate": len(Dy), "n_candidates": 2 ** len(Dy), "n_kept": len(found)})
            for bb in found:
                seen.setdefault(bb.indices, bb)
        bases = [seen[k] for k in sorted(seen)]
        t_deg += time.perf_counter() - t0

    regions = []
    kept_bases = []
    for i, bb in enumerate(bases):
        t0 = time.perf_counter()
        cc = coeffs if bb.indices == basis.indices else None
        cr = critical_region(mplcp_, bb, cc)
        if not cr.contains(theta, tol=1e-6):
            diagnostics["dropped_regions"] += 1
            if i > 0:
                t_deg += time.perf_counter() - t0
            continue
        try:
            _c, radius = polyhedra.chebyshev_center(cr.region)
        except EmptySetError:
            radius = 0.0
        cr = cr.flagged(radius <= flag_radius)
        regions.append(cr)
        kept_bases.append(bb)
        if i > 0:
            t_deg += time.perf_counter() - t0

    return RegionBundle(theta=theta, vertices=points, bases=kept_bases,
                        regions=regions, verdict=verdict,
                        diagnostics=diagnostics, degeneracy_ms=1e3 * t_deg)
