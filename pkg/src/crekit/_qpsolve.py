"""Convex QP/LP solves routed through the complementary-pivot engine.

Builds the KKT complementarity system of

    min 1/2 x'Hx + f'x  s.t.  A x <= b (or = b on rows flagged eq)

with free variables split into positive/negative parts, solves it with
Lemke's method, and maps the solution back.  This is the single numeric
back end for projections, Chebyshev centers, coordination QPs, elastic
feasibility LPs and the centralized dispatch oracle.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lcp import Lcp, LcpSolution, lemke_solve


@dataclass(frozen=True)
class QpResult:
    status: str                      # "optimal" | "infeasible"
    x: Optional[np.ndarray]
    lam: Optional[np.ndarray]        # one multiplier per original row
    obj: Optional[float]
    z0: float
    lcp: LcpSolution


def _split_map(n, nonneg):
    """Columns of S map split variables back to originals: x = S @ x_split."""
    cols = []
    for j in range(n):
        if nonneg[j]:
            cols.append((j, 1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    S = np.zeros((n, len(cols)))
    for c, (j, sgn) in enumerate(cols):
        S[j, c] = sgn
    return S


def _expand_rows(A, b, eq):
    rows_a = []
    rows_b = []
    owner = []                       # (original row, sign)
    for i in range(A.shape[0]):
        rows_a.append(A[i])
        rows_b.append(b[i])
        owner.append((i, 1.0))
        if eq[i]:
            rows_a.append(-A[i])
            rows_b.append(-b[i])
            owner.append((i, -1.0))
    if rows_a:
        return np.vstack(rows_a), np.array(rows_b), owner
    n = A.shape[1]
    return np.zeros((0, n)), np.zeros(0), owner


def solve_qp(H, f, A, b, eq=None, nonneg=None, **lemke_kwargs):
    """Solve the QP; ``nonneg[j]`` marks variables constrained to ``x_j >= 0``.

    Free variables (the default) are split internally.  Returns multipliers
    for the original rows; for an equality row the reported value is the net
    multiplier of its two internal inequality copies.
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    n = f.shape[0]
    if A.size == 0:
        A = A.reshape(0, n)
    m = A.shape[0]
    eq = np.zeros(m, dtype=bool) if eq is None else np.asarray(eq, dtype=bool)
    nonneg = np.zeros(n, dtype=bool) if nonneg is None else np.asarray(nonneg, dtype=bool)

    S = _split_map(n, nonneg)
    Ae, be, owner = _expand_rows(A, b, eq)
    Hs = S.T @ H @ S
    fs = S.T @ f
    As = Ae @ S

    ns = S.shape[1]
    me = As.shape[0]
    M = np.zeros((ns + me, ns + me))
    M[:ns, :ns] = Hs
    M[:ns, ns:] = As.T
    M[ns:, :ns] = -As
    q = np.concatenate([fs, be])

    sol = lemke_solve(Lcp(M, q), **lemke_kwargs)
    if not sol.solved:
        return QpResult(status="infeasible", x=None, lam=None, obj=None,
                        z0=sol.z0, lcp=sol)

    x = S @ sol.z[:ns]
    lam = np.zeros(m)
    for k, (i, sgn) in enumerate(owner):
        lam[i] += sgn * sol.z[ns + k]
    obj = float(0.5 * x @ H @ x + f @ x)
    return QpResult(status="optimal", x=x, lam=lam, obj=obj, z0=0.0, lcp=sol)


def solve_lp(f, A, b, eq=None, nonneg=None, **kw):
    n = np.asarray(f).ravel().shape[0]
    return solve_qp(np.zeros((n, n)), f, A, b, eq=eq, nonneg=nonneg, **kw)
