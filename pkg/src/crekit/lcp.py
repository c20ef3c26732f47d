"""Linear complementarity core: Lemke's method and basis bookkeeping.

Solves ``w = M z + q, w'z = 0, w, z >= 0`` by complementary pivoting with
lexicographic anti-cycling, and provides the tableau transformations that
parametric critical-region construction is built on.

Index convention: complementary pairs are 1-based, pair ``i`` consisting of
``w_i`` (index ``i``) and ``z_i`` (index ``p + i``).  A complementary basis
is a set of ``p`` indices picking exactly one variable from each pair.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionError, LcpSolveError, NotComplementaryError, SingularBasisError

ZERO_TOL = 1e-7
RATIO_TOL = 1e-9
PIVOT_TOL = 1e-11


class LcpStatus(Enum):
    SOLVED = "solved"
    INFEASIBLE = "infeasible"
    RAY_TERMINATION = "ray_termination"


@dataclass(frozen=True)
class Lcp:
    """Instance ``w = M z + q`` with square ``M``."""

    M: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        M = np.ascontiguousarray(np.asarray(self.M, dtype=float))
        q = np.ascontiguousarray(np.asarray(self.q, dtype=float).ravel())
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"M must be square, got shape {M.shape}")
        if q.shape[0] != M.shape[0]:
            raise DimensionError(f"q has length {q.shape[0]}, M is {M.shape[0]}x{M.shape[0]}")
        if not (np.isfinite(M).all() and np.isfinite(q).all()):
            raise ValueError("LCP data must be finite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "q", q)

    @property
    def p(self):
        return self.M.shape[0]


@dataclass(frozen=True)
class ComplementaryBasis:
    """Index set with exactly one of each pair ``(i, p+i)``, ``i = 1..p``.

    ``indices`` is stored sorted ascending; :meth:`pair_columns` gives the
    0-based column of the basic variable of each pair, which is the column
    order used for every basis matrix in this package (so row ``k`` of a
    transformed tableau always refers to pair ``k + 1``).
    """

    indices: tuple
    p: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(idx) != self.p:
            raise ValueError(f"basis has {len(idx)} indices, expected p = {self.p}")
        for i in range(1, self.p + 1):
            in_w = i in idx
            in_z = (self.p + i) in idx
            if in_w == in_z:
                raise ValueError(f"basis must contain exactly one of pair ({i}, {self.p + i})")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def all_w(cls, p):
        return cls(tuple(range(1, p + 1)), p)

    @property
    def index_set(self):
        return frozenset(self.indices)

    def z_basic_pairs(self):
        """1-based pairs whose z variable is basic."""
        return tuple(i - self.p for i in self.indices if i > self.p)

    def pair_columns(self):
        """0-based column ids into ``Y = [I, -M]``, one per pair, in pair order."""
        cols = np.empty(self.p, dtype=np.int64)
        idx = self.index_set
        for k in range(self.p):
            cols[k] = k if (k + 1) in idx else self.p + k
        return cols

    def swap(self, pair):
        """Basis with the roles of ``w_pair`` and ``z_pair`` exchanged (1-based pair)."""
        idx = set(self.indices)
        if pair in idx:
            idx.remove(pair)
            idx.add(self.p + pair)
        else:
            idx.remove(self.p + pair)
            idx.add(pair)
        return ComplementaryBasis(tuple(idx), self.p)


@dataclass(frozen=True)
class TableauCoefficients:
    """Transformed coefficients ``Mbar = Binv M, qbar = Binv q, Qbar = Binv Q``.

    Rows are in pair order (row ``k`` is the basic variable of pair ``k+1``).
    """

    Mbar: np.ndarray
    qbar: np.ndarray
    Qbar: np.ndarray


@dataclass(frozen=True)
class LcpSolution:
    w: np.ndarray
    z: np.ndarray
    z0: float
    status: LcpStatus
    basis: Optional[ComplementaryBasis]
    certificate: Optional[str] = None
    pivots: int = 0
    history: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def solved(self):
        return self.status is LcpStatus.SOLVED


def basis_matrix(M, basis):
    """Basis matrix ``Y[:, basis]`` in pair-column order (``Y = [I, -M]``)."""
    p = basis.p
    B = np.empty((p, p))
    cols = basis.pair_columns()
    for k in range(p):
        if cols[k] < p:
            B[:, k] = 0.0
            B[cols[k], k] = 1.0
        else:
            B[:, k] = -M[:, cols[k] - p]
    return B


def _complete_ray_basis(M, basis_vars, entering, w, z, tol):
    """Complementary full-rank basis from an almost-complementary one.

    ``basis_vars`` holds the basic variables at a boundary-ray stop: the
    ancillary column plus one variable from every pair except the driving
    pair.  Dropping the ancillary column leaves ``p - 1`` independent
    columns, so trying both sides of the missing pair, then single-pair
    exchanges on zero-valued pairs, finds a nonsingular complementary basis
    in O(p) rank tests.
    """
    p = M.shape[0]
    keep = [int(v) for v in basis_vars if v < 2 * p]
    t = int(entering) % p

    def attempt(vars0):
        cand = ComplementaryBasis(tuple(v + 1 for v in vars0), p)
        if np.linalg.matrix_rank(basis_matrix(M, cand)) == p:
            return cand
        return None

    for cand_t in (t, t + p):
        found = attempt(keep + [cand_t])
        if found is not None:
            return found
    for k_var in keep:
        pair = k_var % p
        if w[pair] > tol or z[pair] > tol:
            continue                 # the basic side carries value: not swappable
        partner = k_var + p if k_var < p else k_var - p
        swapped = [v for v in keep if v != k_var] + [partner]
        for cand_t in (t, t + p):
            found = attempt(swapped + [cand_t])
            if found is not None:
                return found
    return None


def _attempt(M, q, cover, zero_tol, ratio_tol, pivot_tol, max_pivots,
             keep_history, assume_copositive_plus):
    """One pivot run on the given data; raises ``LcpSolveError`` whenever a
    clean complementary answer cannot be produced from this run alone."""
    p = M.shape[0]
    basis_arr = np.arange(p, dtype=np.int64)
    values = np.zeros(p)
    hist_full = np.zeros((max_pivots, 2), dtype=np.int64)
    try:
        code, npiv = _kernels.lemke_loop(M, q, cover, basis_arr, values,
                                         ratio_tol, pivot_tol, max_pivots,
                                         hist_full)
    except np.linalg.LinAlgError as exc:
        raise LcpSolveError("singular basis during pivoting") from exc
    history = hist_full[:npiv] if keep_history else None

    if code == _kernels.STATUS_BREAKDOWN:
        raise LcpSolveError(f"pivot magnitude below {pivot_tol:g} after {npiv} pivots",
                            history=history)
    if code == _kernels.STATUS_MAX_PIVOTS:
        raise LcpSolveError(f"pivot limit {max_pivots} exceeded", history=history)

    w = np.zeros(p)
    z = np.zeros(p)
    z0 = 0.0
    for row in range(p):
        var = basis_arr[row]
        val = max(values[row], 0.0)
        if var < p:
            w[var] = val
        elif var < 2 * p:
            z[var - p] = val
        else:
            z0 = values[row]

    if code == _kernels.STATUS_SOLVED:
        basis = ComplementaryBasis(tuple(int(v) + 1 for v in basis_arr), p)
        return LcpSolution(w=w, z=z, z0=0.0, status=LcpStatus.SOLVED, basis=basis,
                           pivots=npiv, history=history)

    if z0 < -zero_tol * max(1.0, float(np.max(np.abs(q)))):
        raise LcpSolveError(f"negative ancillary value {z0:.3e} at a ray stop",
                            history=history)
    if z0 <= zero_tol:
        # degenerate boundary case: the point is complementary feasible even
        # though the lexicographically perturbed problem hit a ray
        last_leaving = int(hist_full[npiv - 1, 1])
        entering = last_leaving + p if last_leaving < p else last_leaving - p
        basis = _complete_ray_basis(M, basis_arr, entering, w, z, zero_tol)
        if basis is None:
            raise LcpSolveError("no complementary basis at a boundary-ray stop",
                                history=history)
        return LcpSolution(w=w, z=z, z0=0.0, status=LcpStatus.SOLVED,
                           basis=basis, pivots=npiv, history=history)

    status = LcpStatus.INFEASIBLE if assume_copositive_plus else LcpStatus.RAY_TERMINATION
    return LcpSolution(w=w, z=z, z0=z0, status=status, basis=None,
                       certificate="ray", pivots=npiv, history=history)


def lemke_solve(lcp, assume_copositive_plus=True, zero_tol=ZERO_TOL,
                ratio_tol=RATIO_TOL, pivot_tol=PIVOT_TOL, max_pivots=None,
                keep_history=False):
    """Solve an LCP by Lemke's complementary pivot method.

    Anti-cycling uses the lexicographic minimum row selection rule, so the
    pivot sequence is deterministic and no basis repeats.  Termination on a
    secondary ray with the ancillary variable still positive is reported as
    ``INFEASIBLE`` with ``certificate='ray'`` when ``assume_copositive_plus``
    is set (valid for the KKT-block matrices this package produces);
    otherwise as ``RAY_TERMINATION``.  A ray with the ancillary variable at
    zero means the iterate is already a complementary solution on the
    boundary of the solvable cone, and is returned as ``SOLVED``.

    Heavily tied instances can strand a pivot run (boundary rays with no
    representing basis, or floating-point singular bases).  Stranded runs
    are retried, first with different positive covering vectors (the same
    instance, so any answer is exact) and then on a deterministic harmonic
    perturbation of the right-hand side whose basis is accepted only when
    it is feasible for the original data.  Raises :class:`LcpSolveError`
    when every attempt fails, carrying the pivot history.
    """
    M, q = lcp.M, lcp.q
    p = lcp.p

    if p == 0 or q.min() >= 0.0:
        basis = ComplementaryBasis.all_w(p)
        return LcpSolution(w=q.copy(), z=np.zeros(p), z0=0.0,
                           status=LcpStatus.SOLVED, basis=basis, pivots=0)

    if max_pivots is None:
        max_pivots = 2000 + 50 * p

    ones = np.ones(p)
    covers = [ones,
              1.0 + np.arange(p) / (2.0 * p),
              1.0 + np.arange(p, 0, -1) / (2.0 * p),
              np.abs(np.sin(np.arange(1, p + 1))) + 0.5]
    first_error = None
    for cover in covers:
        try:
            return _attempt(M, q, cover, zero_tol, ratio_tol, pivot_tol,
                            max_pivots, keep_history, assume_copositive_plus)
        except LcpSolveError as exc:
            if first_error is None:
                first_error = exc

    scale = max(1.0, float(np.max(np.abs(q))))
    direction = 1.0 / np.arange(1, p + 1)
    infeasible_witness = None
    for eps in (1e-9, 1e-7, 1e-5):
        for sign in (1.0, -1.0):
            try:
                sol = _attempt(M, q + sign * eps * scale * direction, ones,
                               zero_tol, ratio_tol, pivot_tol, max_pivots,
                               keep_history, assume_copositive_plus)
            except LcpSolveError:
                continue
            if not sol.solved:
                if sign > 0:
                    infeasible_witness = sol
                continue
            try:
                coeffs = transformed_coefficients(M, q, None, sol.basis)
            except SingularBasisError:
                continue
            if coeffs.qbar.min() < -zero_tol * scale:
                continue
            w, z = complementary_solution(coeffs, sol.basis)
            np.maximum(w, 0.0, out=w)
            np.maximum(z, 0.0, out=z)
            return LcpSolution(w=w, z=z, z0=0.0, status=LcpStatus.SOLVED,
                               basis=sol.basis, pivots=sol.pivots,
                               history=sol.history)
        if infeasible_witness is not None:
            return infeasible_witness
    raise first_error


def transformed_coefficients(M, q, Q, basis):
    """Coefficients of the tableau under ``basis`` (rows in pair order).

    ``Q`` may be ``None`` or have zero columns for parameter-free instances.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    p = basis.p
    if Q is None:
        Q = np.zeros((p, 0))
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q.reshape(p, 1)
    B = basis_matrix(M, basis)
    stacked = np.hstack([M, q.reshape(-1, 1), Q])
    try:
        sol = np.linalg.solve(B, stacked)
    except np.linalg.LinAlgError as exc:
        raise SingularBasisError(f"singular basis matrix for basis {basis.indices}") from exc
    return TableauCoefficients(Mbar=sol[:, :p], qbar=sol[:, p], Qbar=sol[:, p + 1:])


def complementary_solution(coeffs, basis, theta=None):
    """Point solution ``(w, z)`` at ``theta`` under a basis (no sign check)."""
    p = basis.p
    y_basic = coeffs.qbar.copy()
    if theta is not None and coeffs.Qbar.shape[1] > 0:
        y_basic = y_basic + coeffs.Qbar @ np.asarray(theta, dtype=float).ravel()
    w = np.zeros(p)
    z = np.zeros(p)
    cols = basis.pair_columns()
    for k in range(p):
        if cols[k] < p:
            w[k] = y_basic[k]
        else:
            z[k] = y_basic[k]
    return w, z


def recover_basis_from_point(w, z, tol=ZERO_TOL):
    """Partition pairs by the componentwise max/min rule.

    Returns 1-based index tuples ``(W, Z, D)``: pairs with only ``w``
    positive, only ``z`` positive, and both at zero.  Raises
    :class:`NotComplementaryError` if some pair has both entries above
    ``tol``.
    """
    w = np.asarray(w, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if w.shape != z.shape:
        raise DimensionError("w and z must have equal length")
    W, Z, D = [], [], []
    for i in range(w.shape[0]):
        w_pos = w[i] > tol
        z_pos = z[i] > tol
        if w_pos and z_pos:
            raise NotComplementaryError(
                f"pair {i + 1} has w = {w[i]:.3e} and z = {z[i]:.3e}, both above tol = {tol:g}")
        if w_pos:
            W.append(i + 1)
        elif z_pos:
            Z.append(i + 1)
        else:
            D.append(i + 1)
    return tuple(W), tuple(Z), tuple(D)
