"""Critical region exploration: exact coordination of distributed convex QPs.

A coordinator iterates over a shared boundary state theta.  Each agent
evaluates its local parametric QP at theta and reports every critical
region containing it (degenerate parameters simply yield several regions).
The coordinator minimizes the summed value-function segments over the
region intersection, takes a projected-subgradient step with an adaptive
stepsize, and recovers from infeasible iterates with cutting planes.  The
zero-subgradient certificate makes the final objective exact, not merely
approximate.
"""

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import _qpsolve
from .degeneracy import all_regions_containing
from .errors import CoordinationError, CutLogicError, NonConvergedError
from .mplcp import MpQP
from .polyhedra import HPolyhedron, min_norm_projection, normal_cone_generators

GRAD_DEDUP_DECIMALS = 11


@dataclass(frozen=True)
class Agent:
    """One area owner: a local parametric QP coupled through theta."""

    name: str
    problem: MpQP

    @property
    def d(self):
        return self.problem.d


@dataclass(frozen=True)
class CreConfig:
    eps0: float = 1e-2               # initial / reset stepsize
    alpha: float = 2.0               # growth factor on plateau iterations
    beta: float = 0.5                # shrink factor after an overshoot
    eps_min: float = 1e-5            # stepsize floor
    obj_tol: float = 1e-4            # better/same/worse classification band
    v_tol: float = 1e-2              # termination threshold on ||v*||
    max_iter: int = 200
    combo_cap: int = 256             # region combinations solved per iteration
    scaling: float = 0.01            # coefficient scaling applied at compile time


class StepCase(Enum):
    BETTER = "better"
    SAME = "same"
    WORSE = "worse"


@dataclass(frozen=True)
class SubgradientCertificate:
    """Optimal v = G eta + N zeta with eta on the simplex and zeta >= 0."""

    v: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray

    @property
    def norm(self):
        return float(np.linalg.norm(self.v))


@dataclass(frozen=True)
class LocalEvaluation:
    feasible: bool
    bundle: object = None
    z0: float = 0.0


@dataclass
class CoordinatorState:
    Theta: HPolyhedron
    theta_star: np.ndarray
    J_star: float
    subdiff: list
    eps_k: float
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class CreResult:
    theta_star: np.ndarray
    J_star: float
    converged: bool
    iterations: int
    v_norm: Optional[float]
    trace: list
    Theta: HPolyhedron


def local_evaluate(agent, theta_k, **kwargs):
    """Agent-side evaluation: all regions at theta, or the infeasibility certificate."""
    from .errors import InfeasibleParameterError

    try:
        bundle = all_regions_containing(agent.problem, theta_k, **kwargs)
    except InfeasibleParameterError as exc:
        return LocalEvaluation(feasible=False, z0=float(exc.z0))
    return LocalEvaluation(feasible=True, bundle=bundle)


def feasibility_cut(agent, theta_next):
    """Halfspace over theta excluding an infeasible iterate.

    Solves the elastic feasibility LP (minimum total constraint violation)
    at ``theta_next`` and reads the cut off its multipliers; the cut is
    violated at ``theta_next`` by the optimal violation and holds for every
    theta the agent can accommodate.
    """
    prob = agent.problem
    theta_next = np.asarray(theta_next, dtype=float).ravel()
    n, m = prob.n, prob.m
    A_el = np.hstack([prob.A, -np.eye(m)])
    b_el = prob.b + (prob.C @ theta_next if prob.d else 0.0)
    f_el = np.concatenate([np.zeros(n), np.ones(m)])
    nonneg = np.concatenate([~prob.free, np.ones(m, dtype=bool)])
    res = _qpsolve.solve_lp(f_el, A_el, b_el, nonneg=nonneg)
    if res.status != "optimal":
        raise CutLogicError("elastic feasibility problem did not solve")
    violation = res.obj
    if violation <= 1e-8:
        raise CutLogicError(
            f"agent {agent.name} is feasible at theta (violation {violation:.3g})")
    lam = res.lam
    x_star = res.x[:n]
    a_row = -(lam @ prob.C)
    rhs = -float(lam @ (prob.A @ x_star - prob.b))
    cut = HPolyhedron(a_row.reshape(1, -1), np.array([rhs]))
    return cut, {"violation": float(violation), "lam": lam}


def _usable_regions(bundle):
    usable = [cr for cr in bundle.regions if not cr.low_dimensional]
    return usable if usable else list(bundle.regions)


def _lex_less(a, b, tol=1e-12):
    for x, y in zip(a, b):
        if x < y - tol:
            return True
        if x > y + tol:
            return False
    return False


def _project_to_optimal_face(theta_k, region, Hsum, fsum, theta_1):
    """Nearest point to ``theta_k`` on the combo QP's optimal face.

    The optimal set of a convex QP is the polyhedron where the gradient is
    frozen and the linearized objective matches the optimum, so the
    projection is itself one strictly convex QP.  Keeping the reported
    minimizer close to the current iterate stops the coordinator from
    wandering to far corners of flat optimal faces.
    """
    d = theta_k.shape[0]
    grad = Hsum @ theta_1 + fsum
    rows_a = [region.A, Hsum, grad.reshape(1, -1)]
    rows_b = [region.b, Hsum @ theta_1, np.array([grad @ theta_1])]
    rows_eq = [region.eq, np.ones(d, dtype=bool), np.array([True])]
    res = _qpsolve.solve_qp(np.eye(d), -theta_k, np.vstack(rows_a),
                            np.concatenate(rows_b), eq=np.concatenate(rows_eq))
    return res.x if res.status == "optimal" else theta_1


def coordination_solve(bundles, Theta, theta_k, combo_cap=256):
    """Minimize the summed value functions over every region combination.

    Returns the best ``(theta_hat, J_hat)`` across the Cartesian product of
    per-agent region lists intersected with ``Theta`` (ties broken by the
    lexicographically smallest minimizer), plus solve diagnostics; the
    reported minimizer is the point of the winning optimal face closest to
    ``theta_k``.  Regions flagged lower-dimensional are skipped unless an
    agent has nothing else.
    """
    theta_k = np.asarray(theta_k, dtype=float).ravel()
    lists = []
    for bundle in bundles:
        regs = _usable_regions(bundle)
        regs = sorted(regs, key=lambda cr: (cr.vf(theta_k), cr.basis.indices if cr.basis else ()))
        lists.append(regs)

    total = math.prod(len(r) for r in lists)
    best = None
    n_solved = 0
    first_ms = 0.0
    extra_ms = 0.0
    for combo in itertools.islice(itertools.product(*lists), combo_cap):
        t0 = time.perf_counter()
        region = Theta
        for cr in combo:
            region = region.intersect(cr.region)
        Hsum = sum(cr.vf.Hhat for cr in combo)
        fsum = sum(cr.vf.fhat for cr in combo)
        csum = sum(cr.vf.chat for cr in combo)
        res = _qpsolve.solve_qp(Hsum, fsum, region.A, region.b, eq=region.eq)
        ms = 1e3 * (time.perf_counter() - t0)
        if n_solved == 0:
            first_ms = ms
        else:
            extra_ms += ms
        n_solved += 1
        if res.status != "optimal":
            continue
        J = res.obj + csum
        theta = res.x
        if best is None or J < best[1] - 1e-9 or (abs(J - best[1]) <= 1e-9
                                                  and _lex_less(theta, best[0])):
            best = (theta, J, region, Hsum, fsum)
    if best is None:
        raise CoordinationError(
            f"all {n_solved} of {total} region intersections were empty")
    t0 = time.perf_counter()
    theta_hat = _project_to_optimal_face(theta_k, best[2], best[3], best[4], best[0])
    extra_ms += 1e3 * (time.perf_counter() - t0)
    diag = {"combos_solved": n_solved, "combos_total": total,
            "first_ms": first_ms, "extra_ms": extra_ms}
    return theta_hat, best[1], diag


def subgradient_step(subdiff, normal_gens):
    """Minimum-norm element of (convex hull of subgradients) + (normal cone).

    Solved as a QP in the hull and cone weights through the LCP engine; the
    returned certificate reconstructs ``v`` from the weights exactly.
    """
    G = np.column_stack(subdiff)
    d = G.shape[0]
    N = normal_gens if normal_gens is not None and normal_gens.size else np.zeros((d, 0))
    K = np.hstack([G, N])
    nG, nN = G.shape[1], N.shape[1]
    H = 2.0 * K.T @ K
    f = np.zeros(nG + nN)
    A = np.concatenate([np.ones(nG), np.zeros(nN)]).reshape(1, -1)
    res = _qpsolve.solve_qp(H, f, A, np.array([1.0]), eq=np.array([True]),
                            nonneg=np.ones(nG + nN, dtype=bool))
    if res.status != "optimal":
        raise CoordinationError("subgradient projection QP failed")
    u = res.x
    return SubgradientCertificate(v=K @ u, eta=u[:nG], zeta=u[nG:])


def stepsize_update(case, eps_prev, config):
    """Adaptive stepsize: reset when better, grow on plateaus, shrink on overshoot."""
    if case is StepCase.BETTER:
        return config.eps0
    if case is StepCase.SAME:
        return min(config.alpha * eps_prev, config.eps0)
    return max(config.beta * eps_prev, config.eps_min)


def classify_step(J_star, J_hat, obj_tol):
    diff = J_star - J_hat
    if diff >= obj_tol:
        return StepCase.BETTER
    if diff >= -obj_tol:
        return StepCase.SAME
    return StepCase.WORSE


def _gradients_at(bundles, theta, cap=256, tol=1e-7):
    """Subgradients of the summed value function at ``theta``.

    Combines one gradient per agent across all regions containing
    ``theta``; an agent with no such region contributes nothing, in which
    case no gradient can be formed at all.
    """
    per_agent = []
    for bundle in bundles:
        grads = []
        for cr in bundle.regions:
            if cr.contains(theta, tol):
                g = cr.vf.gradient(theta)
                key = tuple(np.round(g, GRAD_DEDUP_DECIMALS))
                if key not in {tuple(np.round(h, GRAD_DEDUP_DECIMALS)) for h in grads}:
                    grads.append(g)
        if not grads:
            return []
        per_agent.append(grads)
    sums = []
    seen = set()
    for combo in itertools.islice(itertools.product(*per_agent), cap):
        g = sum(combo)
        key = tuple(np.round(g, GRAD_DEDUP_DECIMALS))
        if key not in seen:
            seen.add(key)
            sums.append(g)
    return sums


def _merge_gradients(subdiff, new):
    seen = {tuple(np.round(g, GRAD_DEDUP_DECIMALS)) for g in subdiff}
    out = list(subdiff)
    for g in new:
        key = tuple(np.round(g, GRAD_DEDUP_DECIMALS))
        if key not in seen:
            seen.add(key)
            out.append(g)
    return out


def initial_point(Theta, start="cold", seed=None):
    """Cold start projects the origin into Theta; random start draws U(-pi, pi)."""
    d = Theta.dim
    if start == "cold":
        theta = np.zeros(d)
    elif start == "random":
        rng = np.random.default_rng(seed)
        theta = rng.uniform(-np.pi, np.pi, d)
    else:
        raise ValueError(f"unknown start mode {start!r}")
    if not Theta.contains(theta):
        theta = min_norm_projection(Theta, theta)
    return theta


def run(agents, Theta0, config=None, start="cold", seed=None, theta0=None,
        optimum_guard=None):
    """Run the coordination loop until the zero-subgradient certificate.

    Returns a :class:`CreResult` with the certified optimum and the full
    per-iteration trace; raises :class:`NonConvergedError` (carrying the
    trace) when ``max_iter`` is exhausted.  ``optimum_guard`` is a test
    hook called as ``optimum_guard(Theta)`` after every cut round.
    """
    config = config or CreConfig()
    state = CoordinatorState(Theta=Theta0, theta_star=None, J_star=1e8,
                             subdiff=[], eps_k=config.eps0)
    theta = (np.asarray(theta0, dtype=float).ravel() if theta0 is not None
             else initial_point(Theta0, start, seed))
    if not state.Theta.contains(theta):
        theta = min_norm_projection(state.Theta, theta)
    state.theta_star = theta.copy()
    v_norm = None

    for k in range(config.max_iter):
        t_iter = time.perf_counter()
        deg_ms = 0.0
        evals = [local_evaluate(agent, theta) for agent in agents]
        infeasible = [i for i, ev in enumerate(evals) if not ev.feasible]
        record = {"k": k, "theta": theta.tolist(), "eps": state.eps_k,
                  "cuts_added": 0, "regions_per_agent": None, "case": None,
                  "J_hat": None, "J_star": None, "v_norm": None}

        if infeasible:
            cut_info = []
            for i in infeasible:
                cut, _info = feasibility_cut(agents[i], theta)
                state.Theta = state.Theta.intersect(cut)
                cut_info.append({"agent": agents[i].name, "a": cut.A[0].tolist(),
                                 "b": float(cut.b[0]), "theta_gen": theta.tolist()})
            if optimum_guard is not None:
                optimum_guard(state.Theta)
            theta = min_norm_projection(state.Theta, theta)
            record["phase"] = "cut"
            record["cuts"] = cut_info
            record["cuts_added"] = len(infeasible)
            record["degeneracy_ms"] = deg_ms
            record["wall_ms"] = 1e3 * (time.perf_counter() - t_iter)
            record["cre_solving_ms"] = record["wall_ms"] - deg_ms
            state.trace.append(record)
            continue

        bundles = [ev.bundle for ev in evals]
        deg_ms += sum(b.degeneracy_ms for b in bundles)
        record["regions_per_agent"] = [len(b.regions) for b in bundles]

        theta_hat, J_hat, cdiag = coordination_solve(bundles, state.Theta, theta,
                                                     config.combo_cap)
        deg_ms += cdiag["extra_ms"]
        case = classify_step(state.J_star, J_hat, config.obj_tol)
        state.eps_k = stepsize_update(case, state.eps_k, config)
        if case is StepCase.BETTER:
            state.J_star = J_hat
            state.theta_star = theta_hat
            state.subdiff = _gradients_at(bundles, state.theta_star, config.combo_cap)
        elif case is StepCase.SAME:
            state.subdiff = _merge_gradients(
                state.subdiff, _gradients_at(bundles, state.theta_star, config.combo_cap))

        normals = normal_cone_generators(state.Theta, state.theta_star)
        cert = subgradient_step(state.subdiff, normals)
        v_norm = cert.norm

        record["phase"] = "step"
        record["case"] = case.value
        record["J_hat"] = float(J_hat)
        record["J_star"] = float(state.J_star)
        record["v_norm"] = v_norm
        record["degeneracy_ms"] = deg_ms
        record["wall_ms"] = 1e3 * (time.perf_counter() - t_iter)
        record["cre_solving_ms"] = record["wall_ms"] - deg_ms
        state.trace.append(record)

        if v_norm <= config.v_tol:
            return CreResult(theta_star=state.theta_star, J_star=state.J_star,
                             converged=True, iterations=k + 1, v_norm=v_norm,
                             trace=state.trace, Theta=state.Theta)

        theta = state.theta_star - state.eps_k * cert.v
        if not state.Theta.contains(theta):
            theta = min_norm_projection(state.Theta, theta)

    result = CreResult(theta_star=state.theta_star, J_star=state.J_star,
                       converged=False, iterations=config.max_iter, v_norm=v_norm,
                       trace=state.trace, Theta=state.Theta)
    raise NonConvergedError(f"no certificate after {config.max_iter} iterations",
                            trace=state.trace, result=result)
