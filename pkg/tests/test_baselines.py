import numpy as np
import pytest
from numpy.testing import assert_allclose

from crekit.baselines import AdmmConfig, BendersConfig, admm_run, benders_run
from crekit.cre import Agent, CreConfig, feasibility_cut, run
from crekit.errors import NonConvergedError
from crekit.mplcp import MpQP
from crekit.polyhedra import HPolyhedron

from .test_cre import infeasible_below, pinned_quadratic


class TestAdmm:
    def test_single_agent_trivial_consensus(self):
        # a lone agent satisfies the consensus metric after one round
        res = admm_run([pinned_quadratic(0.5)], HPolyhedron.box([-4.0], [4.0]))
        assert res.converged
        assert res.iterations == 1
        assert res.J == pytest.approx(0.0, abs=5e-3)
        assert_allclose(res.theta, [0.5], atol=0.1)

    def test_two_quadratic_consensus(self):
        res = admm_run([pinned_quadratic(1.0), pinned_quadratic(-1.0)],
                       HPolyhedron.box([-4.0], [4.0]))
        assert res.converged
        assert res.J == pytest.approx(1.0, abs=1e-2)
        assert_allclose(res.theta, [0.0], atol=0.05)

    def test_nonconverged_carries_trace(self):
        with pytest.raises(NonConvergedError) as exc:
            admm_run([pinned_quadratic(1.0), pinned_quadratic(-1.0)],
                     HPolyhedron.box([-4.0], [4.0]), AdmmConfig(max_iter=3))
        assert len(exc.value.trace) == 3

    def test_matches_centralized_on_systems(self, compiled_systems,
                                            centralized_optima):
        for name in ["sys_two_area", "sys_quad"]:
            _system, agents, Theta, _cfg = compiled_systems[name]
            cent = centralized_optima[name]
            res = admm_run(agents, Theta)
            assert abs(res.J - cent.J) / max(1.0, abs(cent.J)) <= 1e-3


class TestBenders:
    def test_single_linear_agent_on_box(self):
        # J_i(theta) = theta + 10 on the box: finite convergence in a few cuts
        agent = Agent("lin", MpQP(H=[[0.0]], f=[1.0], A=[[-1.0]],
                                  b=[-10.0], C=[[-1.0]], free=[False]))
        res = benders_run([agent], HPolyhedron.box([-2.0], [3.0]))
        assert res.converged
        assert res.iterations <= 3
        assert res.J == pytest.approx(8.0, abs=1e-6)

    def test_two_quadratic_bounds_bracket(self):
        res = benders_run([pinned_quadratic(1.0), pinned_quadratic(-1.0)],
                          HPolyhedron.box([-4.0], [4.0]))
        assert res.converged
        assert res.J == pytest.approx(1.0, abs=2e-3)
        f_l = [t["f_L"] for t in res.trace]
        f_u = [t["f_U"] for t in res.trace]
        assert all(b >= a - 1e-12 for a, b in zip(f_l, f_l[1:]))     # lower grows
        assert all(b <= a + 1e-12 for a, b in zip(f_u, f_u[1:]))     # upper falls
        assert all(u >= l - 1e-3 for l, u in zip(f_l, f_u))

    def test_infeasible_start_reuses_feasibility_cuts(self):
        agents = [pinned_quadratic(0.0), infeasible_below(2.0)]
        Theta = HPolyhedron.box([-6.0], [6.0])
        res = benders_run(agents, Theta, theta0=[0.0])
        # first iteration generated a feasibility cut identical to the
        # coordinator's own cut at the same point
        direct_cut, _ = feasibility_cut(agents[1], [0.0])
        first_cut_iter = next(t for t in res.trace if t["cuts_added"] > 0)
        assert res.converged
        assert res.J == pytest.approx(2.0, abs=2e-3)
        assert first_cut_iter["k"] == 0
        assert not direct_cut.contains([0.0])

    def test_matches_centralized_on_systems(self, compiled_systems,
                                            centralized_optima):
        for name in ["sys_two_area", "sys_degen"]:
            _system, agents, Theta, _cfg = compiled_systems[name]
            cent = centralized_optima[name]
            res = benders_run(agents, Theta)
            assert abs(res.J - cent.J) / max(1.0, abs(cent.J)) <= 1e-3


class TestThreeWayAgreement:
    def test_all_methods_agree(self, compiled_systems, centralized_optima):
        for name in ["sys_two_area", "sys_quad"]:
            _system, agents, Theta, _cfg = compiled_systems[name]
            cent = centralized_optima[name]
            cre = run(agents, Theta, CreConfig())
            adm = admm_run(agents, Theta)
            ben = benders_run(agents, Theta)
            for J in (cre.J_star, adm.J, ben.J):
                assert abs(J - cent.J) / max(1.0, abs(cent.J)) <= 1e-3
            assert cre.iterations <= adm.iterations
            assert cre.iterations <= ben.iterations
