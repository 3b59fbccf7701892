import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semcom import transport as ot
from semcom.errors import ContractViolation

E1 = math.exp(-1.0)
# closed-form row-relaxed plan of [[1, e^-1], [e^-1, 1]] with p = (1/2, 1/2):
# diagonal 0.5 / (1 + e^-1), off-diagonal 0.5 e^-1 / (1 + e^-1), evaluated with mpmath at 30 digits
HAND_DIAG = 0.365529289315002439625579620911
HAND_OFF = 0.134470710684997560374420379089


def random_instance(seed, n, dim=2):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (n, dim)), rng.uniform(0, 1, (n, dim))


def random_marginal(rng, n):
    w = rng.uniform(0.1, 1.0, n)
    return w / w.sum()


point_sets = st.integers(1, 24).flatmap(
    lambda n: st.tuples(
        hnp.arrays(float, (n, 2), elements=st.floats(-10, 10)),
        hnp.arrays(float, (n, 2), elements=st.floats(-10, 10)),
    )
)


class TestCost:
    def test_examples(self):
        np.testing.assert_array_equal(ot.cost_matrix([[0, 0], [1, 0]], [[0, 0], [1, 0]]), [[0, 1], [1, 0]])
        np.testing.assert_array_equal(ot.cost_matrix([[0, 0]], [[3, 4]]), [[5.0]])

    @given(point_sets)
    @settings(max_examples=100, deadline=None)
    def test_matches_double_loop(self, pts):
        a, b = pts
        c = ot.cost_matrix(a, b)
        for i in range(len(a)):
            for j in range(len(b)):
                d = a[i] - b[j]
                assert c[i, j] == math.sqrt(d[0] * d[0] + d[1] * d[1])

    def test_contract(self):
        with pytest.raises(ContractViolation):
            ot.cost_matrix(np.zeros((2, 2)), np.zeros((3, 2)))
        with pytest.raises(ContractViolation):
            ot.cost_matrix(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ContractViolation):
            ot.cost_matrix([[np.nan, 0.0]], [[0.0, 0.0]])


class TestKernel:
    def test_examples(self):
        np.testing.assert_array_equal(ot.gibbs_kernel(np.zeros((3, 3)), 0.7), np.ones((3, 3)))
        np.testing.assert_allclose(ot.gibbs_kernel([[0, 1], [1, 0]], 1.0), [[1, E1], [E1, 1]], rtol=1e-15)

    def test_small_eta_limit(self):
        k = ot.gibbs_kernel(np.array([[0.0, 0.3], [0.2, 0.0]]), 1e-3)
        assert k[0, 0] == 1.0 and k[1, 1] == 1.0
        assert k[0, 1] < 1e-80 and k[1, 0] < 1e-80

    def test_shift_keeps_row_max_at_one(self):
        c = np.array([[50.0, 51.0], [60.0, 60.5]])
        k = ot.gibbs_kernel(c, 1e-3, shift="row")
        np.testing.assert_array_equal(k.max(axis=1), 1.0)

    def test_rejects_bad_eta(self):
        with pytest.raises(ContractViolation):
            ot.gibbs_kernel(np.zeros((2, 2)), 0.0)
        with pytest.raises(ContractViolation):
            ot.gibbs_kernel(np.zeros((2, 2)), 1.0, shift="diag")


class TestRelaxedPlans:
    def test_hand_computed_plan(self):
        t_u = ot.relax_rows(np.array([[1, E1], [E1, 1]]), [0.5, 0.5])
        np.testing.assert_allclose(t_u.matrix, [[HAND_DIAG, HAND_OFF], [HAND_OFF, HAND_DIAG]], rtol=0, atol=1e-15)

    def test_single_point(self):
        np.testing.assert_array_equal(ot.relax_rows([[0.3]], [1.0]).matrix, [[1.0]])
        np.testing.assert_array_equal(ot.relax_cols([[0.3]], [1.0]).matrix, [[1.0]])

    @given(point_sets, st.sampled_from([1e-3, 0.05, 1.0]), st.integers(0, 2**32 - 1))
    @settings(max_examples=150, deadline=None)
    def test_marginals_exact(self, pts, eta, seed):
        a, b = pts
        rng = np.random.default_rng(seed)
        n = len(a)
        p, q = random_marginal(rng, n), random_marginal(rng, n)
        t_u, t_v, t_star = ot.relaxed_plans(ot.cost_matrix(a, b), eta, p, q)
        np.testing.assert_allclose(t_u.matrix.sum(axis=1), p, rtol=0, atol=1e-12)
        np.testing.assert_allclose(t_v.matrix.sum(axis=0), q, rtol=0, atol=1e-12)
        assert (t_star.matrix >= t_u.matrix).all() and (t_star.matrix >= t_v.matrix).all()
        assert np.isfinite(t_star.matrix).all()

    def test_symmetric_kernel_transposes(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(0, 1, (6, 2))
        k = ot.gibbs_kernel(ot.cost_matrix(a, a), 0.2)
        np.testing.assert_allclose(ot.relax_cols(k).matrix, ot.relax_rows(k).matrix.T, rtol=1e-14)

    def test_shifted_kernel_gives_same_plan(self):
        a, b = random_instance(4, 7)
        c = ot.cost_matrix(a, b)
        eta = 0.02
        plain = ot.relax_rows(ot.gibbs_kernel(c, eta)).matrix
        shifted = ot.relax_rows(ot.gibbs_kernel(c, eta, "row")).matrix
        np.testing.assert_allclose(shifted, plain, rtol=1e-12)

    def test_tiny_eta_does_not_underflow(self):
        c = np.full((3, 3), 5.0) + np.eye(3)
        _, _, t = ot.relaxed_plans(c, 1e-4)
        assert np.isfinite(t.matrix).all() and (t.matrix.sum(axis=1) > 0).all()

    def test_combine_examples(self):
        u = ot.TransportPlan(np.array([[0.4, 0.1], [0.1, 0.4]]), None, None, 1.0, "row_relaxed")
        v = ot.TransportPlan(np.array([[0.3, 0.2], [0.2, 0.3]]), None, None, 1.0, "col_relaxed")
        np.testing.assert_array_equal(ot.combine_max(u, v).matrix, [[0.4, 0.2], [0.2, 0.4]])
        np.testing.assert_array_equal(ot.combine_max(u, u).matrix, u.matrix)

    def test_combine_contract(self):
        u = ot.TransportPlan(np.eye(2), None, None, 1.0, "row_relaxed")
        with pytest.raises(ContractViolation):
            ot.combine_max(u, ot.TransportPlan(np.eye(3), None, None, 1.0, "col_relaxed"))
        with pytest.raises(ContractViolation):
            ot.combine_max(u, ot.TransportPlan(np.eye(2), None, None, 2.0, "col_relaxed"))

    def test_bad_marginal(self):
        with pytest.raises(ContractViolation):
            ot.relax_rows(np.ones((2, 2)), [0.7, 0.7])


class TestBarycentric:
    def test_diagonal_plan_reorders_targets(self):
        perm = np.array([2, 0, 3, 1])
        targets = np.arange(8.0).reshape(4, 2)
        plan = np.zeros((4, 4))
        plan[np.arange(4), perm] = 0.25
        np.testing.assert_array_equal(ot.barycentric_apply(plan, targets), targets[perm])

    def test_equal_targets_collapse(self):
        rng = np.random.default_rng(0)
        plan = rng.uniform(0.01, 1, (5, 5))
        g = np.array([3.0, -1.0])
        np.testing.assert_allclose(ot.barycentric_apply(plan, np.tile(g, (5, 1))), np.tile(g, (5, 1)), atol=1e-14)

    def test_zero_row_rejected(self):
        with pytest.raises(ContractViolation):
            ot.barycentric_apply(np.array([[0.0, 0.0], [0.5, 0.5]]), np.zeros((2, 2)))

    def test_denoising_contraction(self):
        # targets well separated relative to eta (jittered 3x3 grid, spacing 0.3)
        grid = np.stack(np.meshgrid([0.2, 0.5, 0.8], [0.2, 0.5, 0.8]), -1).reshape(-1, 2)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            target = grid + rng.uniform(-0.05, 0.05, grid.shape)
            source = target + rng.normal(0, 1e-3, target.shape)
            out = ot.denoise_points(source, target, 0.01)
            assert np.abs(out - target).max() < np.abs(source - target).max()


class TestReferenceSolvers:
    def test_sinkhorn_two_points(self):
        plan = ot.sinkhorn_full(np.array([[0.0, 1.0], [1.0, 0.0]]), eta=1.0, tol=1e-9)
        assert plan.converged and plan.iterations <= 5
        np.testing.assert_allclose(plan.matrix.sum(axis=1), 0.5, atol=1e-9)
        np.testing.assert_allclose(plan.matrix.sum(axis=0), 0.5, atol=1e-9)

    def test_sinkhorn_single_point(self):
        plan = ot.sinkhorn_full(np.array([[2.0]]))
        assert plan.iterations == 1
        np.testing.assert_allclose(plan.matrix, [[1.0]])

    def test_sinkhorn_log_domain_marginals(self):
        a, b = random_instance(11, 6)
        plan = ot.sinkhorn_full(ot.cost_matrix(a, b), eta=1e-3, tol=1e-9, max_iters=5000)
        assert plan.converged
        np.testing.assert_allclose(plan.matrix.sum(axis=0), 1 / 6, atol=1e-9)
        np.testing.assert_allclose(plan.matrix.sum(axis=1), 1 / 6, atol=1e-9)

    @pytest.mark.parametrize("eta", [0.01, 0.05, 0.1])
    def test_sinkhorn_within_entropic_slack_of_lp(self, eta):
        # for couplings with uniform marginals the entropy spans [log n, 2 log n]
        for seed in range(50):
            a, b = random_instance(seed, 5)
            c = ot.cost_matrix(a, b)
            sk = ot.sinkhorn_full(c, eta=eta).cost(c)
            lp = ot.lp_transport_oracle(c).cost(c)
            assert lp - 1e-9 <= sk <= lp + eta * math.log(5) + 1e-9

    def test_lp_examples(self):
        plan = ot.lp_transport_oracle(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(plan.matrix, [[0.5, 0.0], [0.0, 0.5]], atol=1e-12)
        assert plan.cost(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(ot.lp_transport_oracle(np.array([[3.0]])).matrix, [[1.0]])

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_lp_equals_best_matching(self, n):
        for seed in range(10):
            a, b = random_instance(100 * n + seed, n)
            c = ot.cost_matrix(a, b)
            best = min(sum(c[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n)))
            assert ot.lp_transport_oracle(c).cost(c) == pytest.approx(best / n, rel=1e-9, abs=1e-12)

    def test_lp_size_limit(self):
        with pytest.raises(ContractViolation):
            ot.lp_transport_oracle(np.zeros((9, 9)))


def test_plan_csv_round_trip(tmp_path):
    a, b = random_instance(0, 4)
    _, _, t = ot.relaxed_plans(ot.cost_matrix(a, b), 0.05)
    path = tmp_path / "plan.csv"
    ot.plan_to_csv(t, path)
    back = ot.plan_from_csv(path)
    np.testing.assert_array_equal(back.matrix, t.matrix)
    assert back.eta == 0.05 and back.kind == "combined"
