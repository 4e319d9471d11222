import math

import numpy as np
import pytest

from rwre_lab.environment import (EnvironmentField, omega_window,
                                  two_atom_drift_law, uniform_window)
from rwre_lab.greenfn import (FinitePerturbation, balance_identity_residuals,
                              c3_constant, factorized_remainder,
                              first_order_green_prediction,
                              homogeneous_green_series, killed_green_exact,
                              killed_green_mc, perturb_environment,
                              required_steps, series_tail,
                              verify_lemma_bounds)
from rwre_lab.kernels import symmetric_kernel


@pytest.fixture(scope="module")
def field():
    return EnvironmentField(symmetric_kernel(2), 0.05, two_atom_drift_law(),
                            master_seed=4242)


def solve(window, delta, tol=1e-10, sources=(), targets=()):
    return killed_green_exact(window, delta, tol, sources=sources,
                              targets=targets)


class TestRequiredSteps:
    def test_tail_bound_tight(self):
        for delta, tol in [(0.5, 1e-12), (0.9, 1e-8), (0.99, 5e-3)]:
            L = required_steps(delta, tol)
            assert series_tail(delta, L) <= tol
            assert series_tail(delta, L - 1) > tol

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            required_steps(1.0, 1e-6)
        with pytest.raises(ValueError):
            required_steps(0.5, 0.0)


class TestExactSolver:
    def test_small_delta_limit(self):
        w = uniform_window(symmetric_kernel(2), (-8, -8), (8, 8))
        tbl = solve(w, 0.01, tol=1e-14, sources=[(0, 0)])
        assert tbl.g((0, 0), (0, 0)) == pytest.approx(1.0, abs=3e-4)
        assert tbl.g((0, 0), (2, 2)) <= 1e-4

    def test_row_sum_is_mean_lifetime(self, field):
        w = omega_window(field, (-60, -60), (60, 60))
        tbl = solve(w, 0.6, tol=1e-10, sources=[(0, 0)])
        assert abs(tbl.row_sum((0, 0)) - 1.0 / 0.4) <= 1e-10 + 1e-9

    def test_diagonal_at_least_one(self, field):
        # the k = 0 series term alone contributes 1 to g(y, y)
        w = omega_window(field, (-30, -30), (30, 30))
        tbl = solve(w, 0.5, tol=1e-8, sources=[(0, 0)], targets=[(3, -2)])
        assert tbl.g((0, 0), (0, 0)) >= 1.0
        assert tbl.g((3, -2), (3, -2)) >= 1.0
        assert np.all(tbl.rows[(0, 0)] >= 0.0)

    def test_matches_homogeneous_series_oracle(self):
        p = symmetric_kernel(2)
        w = uniform_window(p, (-46, -46), (46, 46))
        tbl = solve(w, 0.5, tol=1e-12, sources=[(0, 0)], targets=[(1, 1)])
        for x in [(0, 0), (1, 0), (2, 1)]:
            oracle = homogeneous_green_series(p, 0.5, x, tol=1e-12)
            assert tbl.g((0, 0), x) == pytest.approx(oracle, abs=5e-12)
        # column solve agrees with the row solve entrywise
        assert tbl.g((0, 0), (1, 1)) == pytest.approx(
            tbl.cols[(1, 1)][tbl._grid((0, 0))], abs=1e-12)

    def test_window_too_small_raises(self, field):
        w = omega_window(field, (-10, -10), (10, 10))
        with pytest.raises(ValueError, match="window too small"):
            solve(w, 0.9, tol=1e-10, sources=[(0, 0)])

    def test_rejects_bad_delta(self, field):
        w = omega_window(field, (-5, -5), (5, 5))
        with pytest.raises(ValueError):
            solve(w, 1.5, sources=[(0, 0)])

    def test_balance_identity_on_rows(self, field):
        # incoming-mass balance: g(y,z) = 1{y=z}
        #                                 + delta sum_e g(y,z+e) omega(z+e,-e)
        delta, tol = 0.8, 1e-11
        L = required_steps(delta, tol)
        R = L + 3
        w = omega_window(field, (-R, -R), (R, R))
        tbl = solve(w, delta, tol, sources=[(0, 0)])
        for z in [(0, 0), (1, 0), (-2, 3), (5, 5)]:
            res = balance_identity_residuals(tbl, w, (0, 0), z)
            assert abs(res["incoming"]) <= 20 * tol
            # same-offset pairing deviates at O(disorder) on disordered rows
            assert abs(res["same_offset"]) <= \
                4 * 2 * field.epsilon * res["lhs"] + 20 * tol

    def test_same_offset_balance_exact_on_symmetric_rows(self):
        delta, tol = 0.8, 1e-11
        R = required_steps(delta, tol) + 3
        w = uniform_window(symmetric_kernel(2), (-R, -R), (R, R))
        tbl = solve(w, delta, tol, sources=[(0, 0)])
        for z in [(0, 0), (2, -1)]:
            res = balance_identity_residuals(tbl, w, (0, 0), z)
            assert abs(res["same_offset"]) <= 20 * tol
            assert abs(res["incoming"]) <= 20 * tol


class TestMonteCarlo:
    def test_single_step_window(self, field):
        # tau = 1 forces the count to be the source indicator
        tbl = killed_green_mc(field, 1e-9, (0, 0), [(0, 0), (1, 0)],
                              n_traj=500, seed=3)
        assert tbl.g((0, 0), (0, 0)) == 1.0
        assert tbl.g((0, 0), (1, 0)) == 0.0

    def test_matches_exact_on_quenched_instances(self):
        # 20 random quenched environments, 4-sigma agreement
        delta = 0.5
        targets = [(0, 0), (1, 0), (0, -1)]
        worst = 0.0
        for i in range(20):
            f = EnvironmentField(symmetric_kernel(2), 0.08,
                                 two_atom_drift_law(), master_seed=900 + i)
            w = omega_window(f, (-48, -48), (48, 48))
            ex = solve(w, delta, tol=1e-10, sources=[(0, 0)])
            mc = killed_green_mc(f, delta, (0, 0), targets, n_traj=40_000,
                                 seed=i)
            for t in targets:
                se = mc.stderr[((0, 0), t)]
                z = abs(mc.g((0, 0), t) - ex.g((0, 0), t)) / se
                worst = max(worst, z)
        assert worst <= 4.0

    def test_mean_lifetime(self, field):
        delta = 0.8
        tbl = killed_green_mc(field, delta, (0, 0), [(0, 0)],
                              n_traj=100_000, seed=11)
        mean_tau = tbl.replay["mean_tau"]
        se = math.sqrt(delta / (1 - delta) ** 2 / 100_000)
        assert abs(mean_tau - 1.0 / (1 - delta)) <= 4 * se

    def test_rejects_zero_trajectories(self, field):
        with pytest.raises(ValueError):
            killed_green_mc(field, 0.5, (0, 0), [(0, 0)], 0, 1)


class TestPerturbation:
    def test_validation(self):
        with pytest.raises(ValueError, match="sum to 0"):
            FinitePerturbation(((0, 0),), np.array([[0.1, 0.0, 0.0, 0.0]]))
        with pytest.raises(ValueError, match="distinct"):
            FinitePerturbation(((0, 0), (0, 0)), np.zeros((2, 4)))

    def test_diameter_and_sup(self):
        pert = FinitePerturbation(((0, 0), (2, 1)),
                                  np.array([[0.01, -0.01, 0, 0],
                                            [0, 0, 0.02, -0.02]]))
        assert pert.diameter == 3
        assert pert.sup_abs == 0.02
        assert FinitePerturbation((), np.zeros((0, 4))).diameter == 0

    def test_empty_and_zero_are_identity(self, field):
        w = omega_window(field, (-3, -3), (3, 3))
        w2 = perturb_environment(w, FinitePerturbation((), np.zeros((0, 4))))
        assert np.array_equal(w.probs, w2.probs)
        w3 = perturb_environment(
            w, FinitePerturbation(((1, 1),), np.zeros((1, 4))))
        assert np.array_equal(w.probs, w3.probs)

    def test_mass_swap_keeps_rows_valid(self, field):
        w = omega_window(field, (-3, -3), (3, 3))
        pert = FinitePerturbation(((0, 0),),
                                  np.array([[0.05, -0.05, 0.0, 0.0]]))
        w2 = perturb_environment(w, pert)
        w2.validate_rows()
        assert w2.row((0, 0))[0] == pytest.approx(w.row((0, 0))[0] + 0.05)

    def test_row_violation_raises(self, field):
        w = omega_window(field, (-3, -3), (3, 3))
        # kappa = 0.2; pushing a row entry below zero must fail
        pert = FinitePerturbation(((0, 0),),
                                  np.array([[0.3, -0.3, 0.0, 0.0]]))
        with pytest.raises(ValueError):
            perturb_environment(w, pert)


@pytest.fixture(scope="module")
def solved(field):
    delta, tol = 0.9, 1e-12
    L = required_steps(delta, tol)
    R = L + 3
    w = omega_window(field, (-R, -R), (R, R))
    pert = FinitePerturbation(
        ((0, 0), (1, 1)), np.array([[0.01, -0.004, -0.006, 0.0],
                                    [0.0, 0.008, -0.003, -0.005]]))
    w_b = perturb_environment(w, pert)
    targets = [(2, 0), (0, 0), (1, 1)]
    t_om = solve(w, delta, tol, sources=[(0, 0)], targets=targets)
    t_pb = solve(w_b, delta, tol, targets=targets)
    return delta, pert, t_om, t_pb


class TestPredictions:

    def test_zero_perturbation_prediction(self, solved):
        delta, _, t_om, _ = solved
        zero = FinitePerturbation(((0, 0),), np.zeros((1, 4)))
        pred = first_order_green_prediction(t_om, zero, delta, (0, 0), (2, 0))
        assert pred["predicted"] == pred["base"]
        assert pred["predicted_raw"] == pred["base"]

    def test_two_bracket_conventions_coincide(self, solved):
        # zero row sums make the -g(x,x) term drop out identically
        delta, pert, t_om, _ = solved
        pred = first_order_green_prediction(t_om, pert, delta, (0, 0), (2, 0))
        assert pred["predicted"] == pytest.approx(pred["predicted_raw"],
                                                  abs=1e-14)

    def test_first_order_prediction_beats_base(self, solved):
        delta, pert, t_om, t_pb = solved
        truth = t_pb.g((0, 0), (2, 0))
        pred = first_order_green_prediction(t_om, pert, delta, (0, 0), (2, 0))
        assert abs(truth - pred["predicted"]) < abs(truth - pred["base"])

    def test_factorized_form_not_exact_for_two_sites(self, solved):
        delta, pert, t_om, t_pb = solved
        truth = t_pb.g((0, 0), (2, 0))
        pred = first_order_green_prediction(t_om, pert, delta, (0, 0), (2, 0))
        remainder = truth - pred["predicted"]
        fact = factorized_remainder(t_om, t_pb, pert, delta, (0, 0), (2, 0))
        # same order of magnitude, but not an identity when |B| > 1
        assert abs(fact) == pytest.approx(abs(remainder), rel=2.0)

    def test_c3_singleton_formula(self):
        pert = FinitePerturbation(((0, 0),),
                                  np.array([[0.02, -0.02, 0.0, 0.0]]))
        # n = 1: c3 = 2 d sup / kappa^2
        assert c3_constant(2, 0.2, pert) == pytest.approx(
            4 * 0.02 / 0.04, abs=1e-15)


class TestLemmaSuite:
    def test_small_suite_passes(self):
        rep = verify_lemma_bounds(8, seed=12, delta=0.9, tol=1e-12)
        assert rep.all_passed, rep.failures
        assert all(3.0 <= r <= 5.0 for r in rep.halving_ratios)
        assert rep.factorized_residual_singleton <= 1e-9
        assert rep.predictor_variants_max_gap <= 1e-13

    def test_failures_carry_replay_seeds(self):
        rep = verify_lemma_bounds(3, seed=5, delta=0.9, tol=1e-10)
        for rec in rep.instances:
            assert "seed" in rec and "sites" in rec
