"""Problem representations and the mpQP <-> mpLCP reformulation.

``MpQP`` is the parametric program

    min 1/2 x'Hx + f'x  s.t.  A x <= b + C theta

with a per-variable sign mask (free variables are split into differences of
nonnegative parts during reformulation, which keeps the complementarity
matrix in its KKT block form).  ``critical_region`` and ``value_function``
build the parametric solution attached to a complementary basis; the
classic active-set path (``kkt_active_set_solution``) serves as the
nondegenerate-case cross-check.
"""

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _qpsolve
from .errors import DegenerateProblemError, DimensionError, InfeasibleParameterError
from .lcp import ComplementaryBasis, TableauCoefficients, transformed_coefficients
from .polyhedra import HPolyhedron

PSD_TOL = 1e-9
ACTIVE_TOL = 1e-7


@dataclass(frozen=True)
class MpQP:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    free: np.ndarray = None          # True where the variable is unrestricted

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        f = np.asarray(self.f, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        C = np.asarray(self.C, dtype=float)
        n = f.shape[0]
        if A.size == 0:
            A = A.reshape(0, n)
        if C.size == 0:
            C = C.reshape(A.shape[0], 0)
        if C.ndim == 1:
            C = C.reshape(-1, 1)
        free = self.free
        free = np.ones(n, dtype=bool) if free is None else np.asarray(free, dtype=bool).ravel()
        if H.shape != (n, n):
            raise DimensionError(f"H must be {n}x{n}")
        if A.shape[1] != n or b.shape[0] != A.shape[0] or C.shape[0] != A.shape[0]:
            raise DimensionError("A, b, C row/column counts do not agree")
        if free.shape[0] != n:
            raise DimensionError("sign mask length must equal the variable count")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(H), initial=0.0)):
            raise ValueError("H must be symmetric")
        if n and np.linalg.eigvalsh(H).min() < -PSD_TOL:
            raise ValueError("H must be positive semidefinite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "free", free)

    @property
    def n(self):
        return self.f.shape[0]

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.C.shape[1]

    def objective(self, x):
        x = np.asarray(x, dtype=float).ravel()
        return float(0.5 * x @ self.H @ x + self.f @ x)

    def to_json_dict(self):
        return {
            "H": self.H.tolist(),
            "f": self.f.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "C": self.C.tolist(),
            "signs": ["free" if fl else "nonneg" for fl in self.free],
        }

    @classmethod
    def from_json_dict(cls, data):
        signs = data.get("signs")
        f = np.asarray(data["f"], dtype=float)
        if signs is None:
            free = np.ones(len(f), dtype=bool)
        else:
            free = np.array([s == "free" for s in signs], dtype=bool)
        return cls(np.asarray(data["H"], dtype=float), f,
                   np.asarray(data["A"], dtype=float), np.asarray(data["b"], dtype=float),
                   np.asarray(data["C"], dtype=float), free)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class MpLcp:
    """Complementarity form ``w = M z + q + Q theta`` of an :class:`MpQP`.

    ``S`` maps split variables back to the originals (``x = S @ z[:ns]``);
    ``z[ns:]`` carries the constraint multipliers.
    """

    M: np.ndarray
    q: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    source: MpQP

    @property
    def p(self):
        return self.M.shape[0]

    @property
    def ns(self):
        return self.S.shape[1]

    def recover_x(self, z):
        return self.S @ np.asarray(z, dtype=float).ravel()[:self.ns]

    def recover_multipliers(self, z):
        return np.asarray(z, dtype=float).ravel()[self.ns:]

    def q_at(self, theta):
        if self.Q.shape[1] == 0:
            return self.q.copy()
        return self.q + self.Q @ np.asarray(theta, dtype=float).ravel()


@dataclass(frozen=True)
class AffineMap:
    T: np.ndarray
    k: np.ndarray

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float).ravel()
        if self.T.shape[1] == 0:
            return self.k.copy()
        return self.T @ theta + self.k


@dataclass(frozen=True)
class QuadraticForm:
    """Value-function segment ``1/2 theta'Hhat theta + fhat'theta + chat``."""

    Hhat: np.ndarray
    fhat: np.ndarray
    chat: float

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float).ravel()
        return float(0.5 * theta @ self.Hhat @ theta + self.fhat @ theta + self.chat)

    def gradient(self, theta):
        theta = np.asarray(theta, dtype=float).ravel()
        return self.Hhat @ theta + self.fhat


@dataclass(frozen=True)
class CriticalRegion:
    """Parameter region over which one basis (active set) stays optimal."""

    region: HPolyhedron
    solution_map: AffineMap          # basic variables, pair-ordered rows
    x_map: AffineMap                 # recovered primal solution x(theta)
    vf: QuadraticForm
    basis: Optional[ComplementaryBasis]
    low_dimensional: bool = False

    def contains(self, theta, tol=ACTIVE_TOL):
        return self.region.contains(theta, tol)

    def flagged(self, low_dimensional):
        return replace(self, low_dimensional=low_dimensional)


def to_mplcp(problem):
    """KKT complementarity reformulation with free-variable splitting.

    Nonnegative-masked variables map to single complementarity pairs; each
    free variable contributes a positive and a negative part, so the leading
    block of ``M`` stays the (PSD) Hessian of the split problem.
    """
    n = problem.n
    S = _qpsolve._split_map(n, ~problem.free)
    Hs = S.T @ problem.H @ S
    fs = S.T @ problem.f
    As = problem.A @ S
    ns = S.shape[1]
    m = problem.m
    p = ns + m
    M = np.zeros((p, p))
    M[:ns, :ns] = Hs
    M[:ns, ns:] = As.T
    M[ns:, :ns] = -As
    q = np.concatenate([fs, problem.b])
    Q = np.vstack([np.zeros((ns, problem.d)), problem.C])
    return MpLcp(M=M, q=q, Q=Q, S=S, source=problem)


def parametric_solution(mplcp, basis, coeffs=None):
    """Affine map of the basic variables, rows in pair order."""
    if coeffs is None:
        coeffs = transformed_coefficients(mplcp.M, mplcp.q, mplcp.Q, basis)
    return AffineMap(T=coeffs.Qbar.copy(), k=coeffs.qbar.copy())


def _x_affine_map(mplcp, basis, coeffs):
    p = basis.p
    ns = mplcp.ns
    d = mplcp.Q.shape[1]
    Tz = np.zeros((ns, d))
    kz = np.zeros(ns)
    cols = basis.pair_columns()
    for k in range(p):
        col = cols[k]
        if col >= p and (col - p) < ns:
            Tz[col - p] = coeffs.Qbar[k]
            kz[col - p] = coeffs.qbar[k]
    return AffineMap(T=mplcp.S @ Tz, k=mplcp.S @ kz)


def value_function(problem, mplcp, basis, coeffs=None):
    """Value-function segment attached to a basis, expanded in theta."""
    if coeffs is None:
        coeffs = transformed_coefficients(mplcp.M, mplcp.q, mplcp.Q, basis)
    xmap = _x_affine_map(mplcp, basis, coeffs)
    return _expand_vf(problem.H, problem.f, xmap)


def _expand_vf(H, f, xmap):
    T, k = xmap.T, xmap.k
    Hhat = T.T @ H @ T
    Hhat = 0.5 * (Hhat + Hhat.T)
    fhat = T.T @ (H @ k + f)
    chat = float(0.5 * k @ H @ k + f @ k)
    return QuadraticForm(Hhat=Hhat, fhat=fhat, chat=chat)


def critical_region(mplcp, basis, coeffs=None):
    """Critical region ``{theta | qbar + Qbar theta >= 0}`` of a basis."""
    if coeffs is None:
        coeffs = transformed_coefficients(mplcp.M, mplcp.q, mplcp.Q, basis)
    region = HPolyhedron(-coeffs.Qbar, coeffs.qbar.copy())
    xmap = _x_affine_map(mplcp, basis, coeffs)
    vf = _expand_vf(mplcp.source.H, mplcp.source.f, xmap)
    return CriticalRegion(region=region,
                          solution_map=AffineMap(coeffs.Qbar.copy(), coeffs.qbar.copy()),
                          x_map=xmap, vf=vf, basis=basis)


def _augmented_rows(problem):
    """Explicit sign rows appended to (A, b, C) so all variables read as free."""
    masked = np.where(~problem.free)[0]
    if masked.size == 0:
        return problem.A, problem.b, problem.C
    rows = -np.eye(problem.n)[masked]
    return (np.vstack([problem.A, rows]),
            np.concatenate([problem.b, np.zeros(masked.size)]),
            np.vstack([problem.C, np.zeros((masked.size, problem.d))]))


def solve_at(problem, theta):
    """Solve the instance at a fixed parameter through the LCP engine.

    Returns ``(x, lam, obj)`` with one multiplier per augmented row; raises
    :class:`InfeasibleParameterError` with the ancillary-variable
    certificate when infeasible.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    A, b, C = _augmented_rows(problem)
    rhs = b + (C @ theta if problem.d else b * 0.0)
    res = _qpsolve.solve_qp(problem.H, problem.f, A, rhs)
    if res.status != "optimal":
        raise InfeasibleParameterError("problem infeasible at theta", z0=res.z0)
    return res.x, res.lam, res.obj


def kkt_active_set_solution(problem, theta, tol_active=ACTIVE_TOL):
    """Classic KKT path: active set at ``theta``, block inverse, region, VF.

    Valid at nondegenerate parameters only.  Raises
    :class:`DegenerateProblemError` when the KKT block is singular; a
    diagnostics dict reports rank defects and zero multipliers on active
    rows (both are degeneracy indicators).
    """
    theta = np.asarray(theta, dtype=float).ravel()
    A, b, C = _augmented_rows(problem)
    x, lam, _ = solve_at(problem, theta)

    resid = A @ x - b - (C @ theta if problem.d else 0.0)
    scale = np.maximum(1.0, np.linalg.norm(A, axis=1)) if A.size else np.zeros(0)
    active = np.where(np.abs(resid) <= tol_active * scale)[0]
    inactive = np.array([i for i in range(A.shape[0]) if i not in set(active)], dtype=int)

    n = problem.n
    na = active.size
    A_act = A[active]
    licq_ok = bool(np.linalg.matrix_rank(A_act) == na) if na else True
    zero_mult = [int(i) for i in active if abs(lam[i]) <= tol_active]
    diagnostics = {"active": active.tolist(), "licq_ok": licq_ok,
                   "zero_multipliers_on_active": zero_mult, "multipliers": lam}

    K = np.zeros((n + na, n + na))
    K[:n, :n] = problem.H
    K[:n, n:] = A_act.T
    K[n:, :n] = -A_act
    if np.linalg.matrix_rank(K) < n + na:
        raise DegenerateProblemError(
            "singular KKT block; use the degeneracy module to enumerate regions",
            diagnostics=diagnostics)

    rhs = np.zeros((n + na, problem.d + 1))
    rhs[n:, :problem.d] = C[active]
    rhs[:n, problem.d] = problem.f
    rhs[n:, problem.d] = b[active]
    sol = -np.linalg.solve(K, rhs)
    T_x, k_x = sol[:n, :problem.d], sol[:n, problem.d]
    T_l, k_l = sol[n:, :problem.d], sol[n:, problem.d]

    A_in, b_in, C_in = A[inactive], b[inactive], C[inactive]
    D_hat = np.vstack([A_in @ T_x - C_in, -T_l])
    r_hat = np.concatenate([b_in - A_in @ k_x, k_l])

    xmap = AffineMap(T_x, k_x)
    region = HPolyhedron(D_hat, r_hat)
    vf = _expand_vf(problem.H, problem.f, xmap)
    cr = CriticalRegion(region=region, solution_map=xmap, x_map=xmap, vf=vf, basis=None)
    return cr, diagnostics
