"""Consensus ADMM and Benders decomposition baselines.

Both operate on the same compiled agents and coordinator set as the
exploration coordinator, so iteration counts and wall time are directly
comparable.  ADMM introduces per-agent copies of the boundary state with a
fixed penalty; Benders accumulates optimality cuts from local
value-function gradients and reuses the coordinator's feasibility cuts.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _qpsolve
from .cre import feasibility_cut, initial_point
from .degeneracy import single_region_at
from .errors import CoordinationError, InfeasibleParameterError, NonConvergedError
from .polyhedra import HPolyhedron, min_norm_projection


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 0.1
    tol: float = 1e-3                # combined gap + consensus metric
    max_iter: int = 3000


@dataclass(frozen=True)
class BendersConfig:
    f_lower0: float = 0.0
    f_upper0: float = 1e5
    gap_tol: float = 1e-3
    max_iter: int = 300


@dataclass(frozen=True)
class BaselineResult:
    method: str
    J: float
    theta: np.ndarray
    converged: bool
    iterations: int
    metric: float
    trace: list


def _local_admm_step(agent, theta_bar, u, rho):
    """Agent update: augmented local QP over (x, theta_copy)."""
    prob = agent.problem
    n, d = prob.n, prob.d
    H = np.zeros((n + d, n + d))
    H[:n, :n] = prob.H
    H[n:, n:] = rho * np.eye(d)
    f = np.concatenate([prob.f, u - rho * theta_bar])
    A = np.hstack([prob.A, -prob.C])
    nonneg = np.concatenate([~prob.free, np.zeros(d, dtype=bool)])
    res = _qpsolve.solve_qp(H, f, A, prob.b, nonneg=nonneg)
    if res.status != "optimal":
        raise CoordinationError(f"ADMM local step failed for agent {agent.name}")
    x = res.x[:n]
    theta_i = res.x[n:]
    obj = float(0.5 * x @ prob.H @ x + prob.f @ x)
    return x, theta_i, obj


def admm_run(agents, Theta, config=None, start="cold", seed=None, theta0=None):
    """Consensus ADMM over the boundary state.

    Terminates on the combined metric ``|f_P - f_D| + sum_i ||theta_i -
    theta||_1 <= tol`` where ``f_D`` is the Lagrangian value at the current
    iterates.  Raises :class:`NonConvergedError` past ``max_iter``.
    """
    config = config or AdmmConfig()
    d = Theta.dim
    theta_bar = (np.asarray(theta0, dtype=float).ravel() if theta0 is not None
                 else initial_point(Theta, start, seed))
    u = [np.zeros(d) for _ in agents]
    trace = []
    metric = np.inf

    for k in range(config.max_iter):
        t0 = time.perf_counter()
        locals_ = [_local_admm_step(agent, theta_bar, u[i], config.rho)
                   for i, agent in enumerate(agents)]
        thetas = [th for _x, th, _o in locals_]
        f_primal = sum(o for _x, _th, o in locals_)
        avg = sum(th + ui / config.rho for th, ui in zip(thetas, u)) / len(agents)
        theta_bar = avg if Theta.contains(avg) else min_norm_projection(Theta, avg)
        for i in range(len(agents)):
            u[i] = u[i] + config.rho * (thetas[i] - theta_bar)
        f_dual = f_primal + sum(float(u[i] @ (thetas[i] - theta_bar))
                                for i in range(len(agents)))
        residual = sum(float(np.abs(th - theta_bar).sum()) for th in thetas)
        metric = abs(f_primal - f_dual) + residual
        trace.append({"k": k, "f_P": f_primal, "f_D": f_dual, "residual": residual,
                      "metric": metric, "theta": theta_bar.tolist(),
                      "wall_ms": 1e3 * (time.perf_counter() - t0)})
        if metric <= config.tol:
            return BaselineResult(method="admm", J=f_primal, theta=theta_bar,
                                  converged=True, iterations=k + 1, metric=metric,
                                  trace=trace)
    raise NonConvergedError(f"ADMM metric {metric:.3g} above {config.tol:g} "
                            f"after {config.max_iter} iterations", trace=trace)


def benders_run(agents, Theta, config=None, start="cold", seed=None, theta0=None):
    """Benders decomposition with value-function optimality cuts.

    The master minimizes epigraph variables over the coordinator set plus
    accumulated cuts; local evaluations reuse the region machinery, taking
    any containing region's gradient as the subgradient (valid by
    convexity), and infeasible iterates contribute the same feasibility
    cuts as the exploration coordinator.
    """
    config = config or BendersConfig()
    d = Theta.dim
    N = len(agents)
    region = Theta
    cut_rows = []                    # rows over (theta, t)
    f_lower = config.f_lower0
    f_upper = config.f_upper0
    best_theta = (np.asarray(theta0, dtype=float).ravel() if theta0 is not None
                  else initial_point(Theta, start, seed))
    trace = []

    for k in range(config.max_iter):
        t0 = time.perf_counter()
        A_rows = [np.hstack([region.A, np.zeros((region.nrows, N))])]
        b_rows = [region.b]
        eq_rows = [region.eq]
        for row, rhs in cut_rows:
            A_rows.append(row.reshape(1, -1))
            b_rows.append([rhs])
            eq_rows.append([False])
        A = np.vstack(A_rows)
        b = np.concatenate([np.asarray(v, dtype=float).ravel() for v in b_rows])
        eq = np.concatenate([np.asarray(v, dtype=bool).ravel() for v in eq_rows])
        f = np.concatenate([np.zeros(d), np.ones(N)])
        nonneg = np.concatenate([np.zeros(d, dtype=bool), np.ones(N, dtype=bool)])
        master = _qpsolve.solve_lp(f, A, b, eq=eq, nonneg=nonneg)
        if master.status != "optimal":
            raise CoordinationError("Benders master infeasible")
        theta_k = master.x[:d]
        f_lower = max(f_lower, master.obj)

        evals = []
        for agent in agents:
            try:
                evals.append(single_region_at(agent.problem, theta_k))
            except InfeasibleParameterError:
                evals.append(None)
        n_cuts = 0
        if all(cr is not None for cr in evals):
            J_k = 0.0
            for i, cr in enumerate(evals):
                J_i = cr.vf(theta_k)
                g_i = cr.vf.gradient(theta_k)
                J_k += J_i
                row = np.concatenate([g_i, np.zeros(N)])
                row[d + i] = -1.0
                cut_rows.append((row, float(g_i @ theta_k - J_i)))
                n_cuts += 1
            if J_k < f_upper:
                f_upper = J_k
                best_theta = theta_k
        else:
            for i, cr in enumerate(evals):
                if cr is None:
                    cut, _info = feasibility_cut(agents[i], theta_k)
                    row = np.concatenate([cut.A[0], np.zeros(N)])
                    cut_rows.append((row, float(cut.b[0])))
                    n_cuts += 1
        gap = f_upper - f_lower
        trace.append({"k": k, "f_L": f_lower, "f_U": f_upper, "gap": gap,
                      "cuts_added": n_cuts, "theta": theta_k.tolist(),
                      "wall_ms": 1e3 * (time.perf_counter() - t0)})
        if gap <= config.gap_tol:
            return BaselineResult(method="benders", J=f_upper, theta=best_theta,
                                  converged=True, iterations=k + 1, metric=gap,
                                  trace=trace)
    raise NonConvergedError(f"Benders gap {f_upper - f_lower:.3g} above "
                            f"{config.gap_tol:g} after {config.max_iter} iterations",
                            trace=trace)
