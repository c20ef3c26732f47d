import numpy as np
import pytest
from numpy.testing import assert_allclose

from crekit.degeneracy import all_regions_containing
from crekit.errors import DegenerateProblemError, InfeasibleParameterError
from crekit.lcp import Lcp, lemke_solve
from crekit.mplcp import (MpQP, critical_region, kkt_active_set_solution,
                          parametric_solution, solve_at, to_mplcp, value_function)

from .oracles import kkt_residual, random_mpqp


def scalar_qp_active():
    # min 1/2 x^2 s.t. x >= theta with x free (split): active branch x = theta
    return MpQP(H=[[1.0]], f=[0.0], A=[[-1.0]], b=[0.0], C=[[-1.0]], free=[True])


class TestToMplcp:
    def test_hand_assembled_example(self):
        # n=1 nonneg, m=1: min 1/2 x^2 s.t. x <= 1 + theta, x >= 0
        prob = MpQP(H=[[1.0]], f=[0.0], A=[[1.0]], b=[1.0], C=[[1.0]], free=[False])
        ml = to_mplcp(prob)
        assert ml.p == 2
        assert_allclose(ml.M, [[1.0, 1.0], [-1.0, 0.0]])
        assert_allclose(ml.q, [0.0, 1.0])
        assert_allclose(ml.Q, [[0.0], [1.0]])

    def test_lp_upper_left_block_zero(self):
        prob = MpQP(H=[[0.0]], f=[1.0], A=[[1.0]], b=[1.0], C=[[1.0]], free=[False])
        assert to_mplcp(prob).M[0, 0] == 0.0

    def test_free_variable_split_block(self):
        prob = MpQP(H=[[2.0]], f=[0.0], A=[[1.0]], b=[1.0], C=[[1.0]], free=[True])
        ml = to_mplcp(prob)
        assert ml.ns == 2
        assert_allclose(ml.M[:2, :2], [[2.0, -2.0], [-2.0, 2.0]])

    def test_solution_maps_to_kkt_point(self, rng):
        for _ in range(40):
            prob = random_mpqp(rng)
            theta = rng.standard_normal(prob.d)
            try:
                x, lam, _obj = solve_at(prob, theta)
            except InfeasibleParameterError:
                continue
            assert kkt_residual(prob, theta, x, lam[:prob.m]) <= 1e-7

    def test_rejects_non_psd(self):
        with pytest.raises(ValueError):
            MpQP(H=[[-1.0]], f=[0.0], A=[[1.0]], b=[1.0], C=[[1.0]])


class TestParametricSolution:
    def test_all_w_basis_reproduces_q_Q(self):
        prob = MpQP(H=[[1.0]], f=[1.0], A=[[1.0]], b=[2.0], C=[[1.0]], free=[False])
        ml = to_mplcp(prob)
        from crekit.lcp import ComplementaryBasis
        amap = parametric_solution(ml, ComplementaryBasis.all_w(2))
        assert_allclose(amap.k, ml.q)
        assert_allclose(amap.T, ml.Q)

    def test_map_matches_lemke_point(self, rng):
        for _ in range(30):
            prob = random_mpqp(rng)
            theta = rng.standard_normal(prob.d)
            ml = to_mplcp(prob)
            sol = lemke_solve(Lcp(ml.M, ml.q_at(theta)))
            if not sol.solved:
                continue
            amap = parametric_solution(ml, sol.basis)
            y_basic = amap(theta)
            cols = sol.basis.pair_columns()
            for k in range(ml.p):
                expect = sol.w[k] if cols[k] < ml.p else sol.z[k]
                assert abs(y_basic[k] - expect) <= 1e-9 * max(1.0, abs(expect))

    def test_parameter_free_problem(self):
        prob = MpQP(H=[[1.0]], f=[1.0], A=[[1.0]], b=[2.0],
                    C=np.zeros((1, 0)), free=[False])
        ml = to_mplcp(prob)
        from crekit.lcp import ComplementaryBasis
        amap = parametric_solution(ml, ComplementaryBasis.all_w(2))
        assert amap.T.shape == (2, 0)
        assert_allclose(amap(np.zeros(0)), ml.q)


class TestCriticalRegionAndValueFunction:
    def test_active_branch(self):
        prob = scalar_qp_active()
        ml = to_mplcp(prob)
        sol = lemke_solve(Lcp(ml.M, ml.q_at([1.0])))
        cr = critical_region(ml, sol.basis)
        assert cr.contains([0.5]) and cr.contains([5.0])
        assert not cr.contains([-0.5])
        assert_allclose(cr.x_map([2.0]), [2.0], atol=1e-9)
        assert cr.vf([2.0]) == pytest.approx(2.0)      # 1/2 * 2^2
        assert cr.vf.Hhat[0, 0] == pytest.approx(1.0)

    def test_inactive_branch(self):
        prob = scalar_qp_active()
        ml = to_mplcp(prob)
        sol = lemke_solve(Lcp(ml.M, ml.q_at([-1.0])))
        cr = critical_region(ml, sol.basis)
        assert cr.contains([-2.0]) and not cr.contains([1.0])
        assert cr.vf([-3.0]) == pytest.approx(0.0)

    def test_lp_value_function_is_affine(self):
        prob = MpQP(H=[[0.0]], f=[1.0], A=[[-1.0]], b=[0.0], C=[[-1.0]], free=[False])
        ml = to_mplcp(prob)
        sol = lemke_solve(Lcp(ml.M, ml.q_at([1.0])))
        vf = value_function(prob, ml, sol.basis)
        assert_allclose(vf.Hhat, 0.0)
        assert vf([2.0]) == pytest.approx(2.0)

    def test_vf_convexity_on_random_instances(self, rng):
        for _ in range(30):
            prob = random_mpqp(rng)
            theta = rng.standard_normal(prob.d)
            ml = to_mplcp(prob)
            sol = lemke_solve(Lcp(ml.M, ml.q_at(theta)))
            if not sol.solved:
                continue
            vf = value_function(prob, ml, sol.basis)
            assert np.linalg.eigvalsh(vf.Hhat).min() >= -1e-9


class TestKktActiveSetPath:
    def test_active_branch_at_one(self):
        cr, diag = kkt_active_set_solution(scalar_qp_active(), [1.0])
        assert cr.contains([0.5]) and not cr.contains([-0.5])
        assert cr.vf([3.0]) == pytest.approx(4.5)
        assert_allclose(cr.x_map([3.0]), [3.0], atol=1e-9)
        assert diag["licq_ok"]

    def test_inactive_branch_at_minus_one(self):
        cr, _diag = kkt_active_set_solution(scalar_qp_active(), [-1.0])
        assert cr.contains([-0.5]) and not cr.contains([0.5])
        assert cr.vf([-3.0]) == pytest.approx(0.0)

    def test_duplicate_rows_raise_degenerate(self):
        prob = MpQP(H=[[1.0]], f=[0.0], A=[[1.0], [1.0]], b=[0.0, 0.0],
                    C=[[1.0], [1.0]], free=[True])
        with pytest.raises(DegenerateProblemError) as exc:
            kkt_active_set_solution(prob, [0.0])
        assert not exc.value.diagnostics["licq_ok"]

    def test_agrees_with_basis_path_on_nondegenerate_instances(self, rng):
        checked = 0
        attempts = 0
        while checked < 25 and attempts < 400:
            attempts += 1
            prob = random_mpqp(rng, lp_prob=0.3, dup_prob=0.0, coarse=False)
            theta = rng.standard_normal(prob.d)
            try:
                cr_kkt, diag = kkt_active_set_solution(prob, theta)
            except (InfeasibleParameterError, DegenerateProblemError):
                continue
            if diag["zero_multipliers_on_active"]:
                continue
            bundle = all_regions_containing(prob, theta)
            if len(bundle.regions) != 1:
                continue
            cr_lcp = bundle.regions[0]
            checked += 1
            # same region decided on sampled perturbations, same VF values inside
            for _ in range(40):
                probe = theta + rng.standard_normal(prob.d) * 0.3
                in_kkt = cr_kkt.contains(probe, 1e-6)
                in_lcp = cr_lcp.contains(probe, 1e-6)
                if in_kkt != in_lcp:
                    # tolerate only boundary disagreement
                    assert min(np.max(cr_kkt.region.residuals(probe)),
                               np.max(cr_lcp.region.residuals(probe))) <= 1e-6
                if in_kkt and in_lcp:
                    assert cr_kkt.vf(probe) == pytest.approx(cr_lcp.vf(probe), abs=1e-8)
        assert checked >= 25


class TestRoundTripInvariants:
    def test_kkt_residual_inside_region(self, rng):
        for _ in range(25):
            prob = random_mpqp(rng)
            theta0 = rng.standard_normal(prob.d)
            try:
                bundle = all_regions_containing(prob, theta0)
            except InfeasibleParameterError:
                continue
            cr = bundle.regions[0]
            x = cr.x_map(theta0)
            # multipliers from the matching LCP z tail
            ml = to_mplcp(prob)
            sol = lemke_solve(Lcp(ml.M, ml.q_at(theta0)))
            lam = ml.recover_multipliers(sol.z)
            assert kkt_residual(prob, theta0, x, lam) <= 1e-7
            assert cr.vf(theta0) == pytest.approx(prob.objective(x), abs=1e-8)

    def test_split_shift_invariance(self):
        # adding the same constant to both split parts leaves x unchanged
        prob = scalar_qp_active()
        ml = to_mplcp(prob)
        z = np.array([2.0, 0.0, 2.0])
        x0 = ml.recover_x(z)
        z_shift = z + np.array([5.0, 5.0, 0.0])
        assert_allclose(ml.recover_x(z_shift), x0, atol=1e-9)

    def test_json_round_trip(self, tmp_path):
        prob = random_mpqp(np.random.default_rng(3))
        path = tmp_path / "prob.json"
        prob.dump(path)
        back = MpQP.load(path)
        assert_allclose(back.H, prob.H)
        assert_allclose(back.A, prob.A)
        assert_allclose(back.C, prob.C)
        assert np.array_equal(back.free, prob.free)
