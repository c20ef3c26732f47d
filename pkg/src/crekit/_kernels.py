"""Dense complementary-pivot kernel.

Every LP/QP in the toolkit is solved through the Lemke pivot loop below,
so it is the hot path of the whole package.  The loop is JIT-compiled with
numba when available; setting the environment variable ``CREKIT_NO_NUMBA=1``
selects the pure-numpy twin.  Both paths share one source function
(``lemke_loop_numpy`` is the uncompiled twin) and ``benchmarks/bench_lemke.py``
compares them.

Each pivot refactorizes the basis matrix from the original data (one dense
LU solve per step) instead of updating the tableau in place: per-unit grid
instances carry heavily tied, duplicated rows, and accumulated update drift
has been observed to blow past any usable tolerance.  At the problem sizes
this package targets the extra O(p^3) per pivot is irrelevant next to
getting the degenerate pivots right.

Conventions: variables are columns of ``Y = [I, -M, -1]``; ids ``0..p-1``
are w, ``p..2p-1`` are z, ``2p`` is the ancillary covering variable.
``basis`` maps tableau rows to basic variable ids, and ``values_out``
receives the final basic values (``B^-1 q``) row-aligned with ``basis``.
"""

import os

import numpy as np

STATUS_SOLVED = 0
STATUS_RAY = 1
STATUS_MAX_PIVOTS = 2
STATUS_BREAKDOWN = 3


def _env_wants_numba():
    return os.environ.get("CREKIT_NO_NUMBA", "") in ("", "0")


def _lemke_loop(M, q, cover, basis, values_out, ratio_tol, pivot_tol,
                max_pivots, history):
    p = M.shape[0]
    z0_col = 2 * p
    B = np.empty((p, p))
    RHS = np.empty((p, p + 2))
    entering = z0_col

    npiv = 0
    while npiv < max_pivots:
        # basis matrix and fresh right-hand sides from the original data
        for k in range(p):
            var = basis[k]
            if var < p:
                for i in range(p):
                    B[i, k] = 0.0
                B[var, k] = 1.0
            elif var < z0_col:
                for i in range(p):
                    B[i, k] = -M[i, var - p]
            else:
                for i in range(p):
                    B[i, k] = -cover[i]
        for i in range(p):
            if entering < p:
                RHS[i, 0] = 1.0 if i == entering else 0.0
            elif entering < z0_col:
                RHS[i, 0] = -M[i, entering - p]
            else:
                RHS[i, 0] = -cover[i]
            RHS[i, 1] = q[i]
            for j in range(p):
                RHS[i, 2 + j] = 1.0 if i == j else 0.0
        X = np.linalg.solve(B, RHS)

        if npiv == 0:
            # ancillary variable enters; the lexicographically smallest row
            # of [q | I] / cover leaves (most negative scaled q first)
            r = 0
            for i in range(1, p):
                less = False
                for c in range(1, p + 2):
                    a = X[i, c] / cover[i]
                    b = X[r, c] / cover[r]
                    if a < b:
                        less = True
                        break
                    if a > b:
                        break
                if less:
                    r = i
        else:
            # lexicographic minimum ratio test on the entering column
            r = -1
            for i in range(p):
                ci = X[i, 0]
                if ci > ratio_tol:
                    if r < 0:
                        r = i
                    else:
                        cr = X[r, 0]
                        less = False
                        for c in range(1, p + 2):
                            a = X[i, c] / ci
                            b = X[r, c] / cr
                            if a < b:
                                less = True
                                break
                            if a > b:
                                break
                        if less:
                            r = i
            if r < 0:
                for k in range(p):
                    values_out[k] = X[k, 1]
                return STATUS_RAY, npiv
        if abs(X[r, 0]) < pivot_tol:
            return STATUS_BREAKDOWN, npiv

        leaving = basis[r]
        basis[r] = entering
        history[npiv, 0] = entering
        history[npiv, 1] = leaving
        npiv += 1
        if leaving == z0_col:
            for k in range(p):
                var = basis[k]
                if var < p:
                    for i in range(p):
                        B[i, k] = 0.0
                    B[var, k] = 1.0
                else:
                    for i in range(p):
                        B[i, k] = -M[i, var - p]
            vals = np.linalg.solve(B, q.copy().reshape(p, 1))
            for k in range(p):
                values_out[k] = vals[k, 0]
            return STATUS_SOLVED, npiv
        entering = leaving + p if leaving < p else leaving - p
    return STATUS_MAX_PIVOTS, npiv


USING_NUMBA = False
if _env_wants_numba():
    try:
        from numba import njit

        lemke_loop = njit(cache=True)(_lemke_loop)
        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        lemke_loop = _lemke_loop
else:
    lemke_loop = _lemke_loop

# the uncompiled twin stays importable for benchmarks and equivalence tests
lemke_loop_numpy = _lemke_loop
