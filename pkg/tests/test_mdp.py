"""Policy iteration on the factored MDP: oracles and invariants.

The factored layout ties the stochastic coordinate (demand level ip) to a
deterministic coordinate (d): state s = ip * n_det + d, a control moves d
through nxt[s, u] while ip transitions by the TPM row. Small instances
admit exact answers: linear solves for a fixed policy and brute force over
every stationary policy.
"""
import itertools

import numpy as np
import pytest

from powersplit.errors import NoFeasibleControl, NonConvergence
from powersplit.mdp import (expected_next_values, greedy_policy,
                            policy_evaluation, policy_improvement,
                            policy_iteration)


def random_mdp(rng, n_p, n_det, n_u):
    """A random factored instance with finite costs."""
    cost = rng.uniform(0.0, 1.0, (n_p * n_det, n_u))
    nxt = rng.integers(0, n_det, (n_p * n_det, n_u)).astype(np.intp)
    tpm = rng.uniform(0.1, 1.0, (n_p, n_p))
    tpm /= tpm.sum(axis=1, keepdims=True)
    return cost, nxt, tpm


def exact_policy_value(pi, cost, nxt, tpm, gamma):
    """Fixed-policy value by direct linear solve over the full state space."""
    n_p = tpm.shape[0]
    n_s, _ = cost.shape
    n_det = n_s // n_p
    P = np.zeros((n_s, n_s))
    xi = np.empty(n_s)
    for s in range(n_s):
        ip = s // n_det
        u = pi[s]
        xi[s] = cost[s, u]
        d_next = nxt[s, u]
        for jp in range(n_p):
            P[s, jp * n_det + d_next] += tpm[ip, jp]
    return np.linalg.solve(np.eye(n_s) - gamma * P, xi)


class TestExpectedNextValues:
    def test_identity_tpm_passthrough(self):
        j = np.arange(6.0)
        tpm = np.eye(2)
        assert np.array_equal(expected_next_values(j, tpm, 3), j)

    def test_mixes_over_demand_only(self):
        # J differs across demand levels but not within: EJ is the row mix
        tpm = np.array([[0.25, 0.75], [0.5, 0.5]])
        j = np.array([1.0, 1.0, 5.0, 5.0])
        ej = expected_next_values(j, tpm, 2)
        assert ej[0] == pytest.approx(0.25 * 1 + 0.75 * 5)
        assert ej[2] == pytest.approx(0.5 * 1 + 0.5 * 5)


class TestGreedyPolicy:
    def test_picks_min_cost(self):
        cost = np.array([[3.0, 1.0, 2.0], [0.5, 4.0, 0.6]])
        assert greedy_policy(cost).tolist() == [1, 0]

    def test_tie_weight_breaks_exact_ties(self):
        cost = np.array([[1.0, 1.0, 1.0]])
        w = np.array([[2.0, 0.5, 1.0]])
        assert greedy_policy(cost, tie_weight=w).tolist() == [1]

    def test_tie_weight_ignored_off_the_tie(self):
        cost = np.array([[1.0, 2.0, 3.0]])
        w = np.array([[9.0, 0.0, 0.0]])
        assert greedy_policy(cost, tie_weight=w).tolist() == [0]

    def test_infeasible_state_raises(self):
        cost = np.array([[np.inf, np.inf]])
        with pytest.raises(NoFeasibleControl):
            greedy_policy(cost)


class TestPolicyEvaluation:
    def test_myopic_limit(self):
        # as gamma -> 0 the value collapses to the stage cost
        rng = np.random.default_rng(0)
        cost, nxt, tpm = random_mdp(rng, 2, 3, 2)
        pi = greedy_policy(cost)
        j, _ = policy_evaluation(pi, cost, nxt, tpm, 1e-12, tol=1e-15)
        xi = cost[np.arange(6), pi]
        assert np.allclose(j, xi, atol=1e-10)

    def test_absorbing_geometric_sum(self):
        # every state maps to itself: J = c / (1 - gamma)
        gamma = 0.9
        cost = np.array([[2.0], [3.0]])
        nxt = np.zeros((2, 1), dtype=np.intp)
        tpm = np.eye(2)
        pi = np.zeros(2, dtype=np.intp)
        j, _ = policy_evaluation(pi, cost, nxt, tpm, gamma, tol=1e-13)
        assert np.allclose(j, [2.0 / 0.1, 3.0 / 0.1], rtol=1e-9)

    def test_matches_linear_solve(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            cost, nxt, tpm = random_mdp(rng, 3, 2, 3)
            pi = greedy_policy(cost)
            j, _ = policy_evaluation(pi, cost, nxt, tpm, 0.9, tol=1e-13)
            assert np.allclose(j, exact_policy_value(pi, cost, nxt, tpm, 0.9),
                               atol=1e-9)

    def test_contraction_rate(self):
        # successive sweep residuals shrink at least by gamma
        rng = np.random.default_rng(2)
        cost, nxt, tpm = random_mdp(rng, 3, 3, 2)
        gamma = 0.8
        pi = greedy_policy(cost)
        n_s = cost.shape[0]
        states = np.arange(n_s)
        xi = cost[states, pi]
        idx = (states // 3) * 3 + nxt[states, pi]
        j = np.zeros(n_s)
        prev = None
        for _ in range(30):
            j_new = xi + gamma * expected_next_values(j, tpm, 3)[idx]
            res = float(np.max(np.abs(j_new - j)))
            if prev is not None and prev > 1e-14:
                assert res <= gamma * prev + 1e-12
            prev = res
            j = j_new

    def test_warm_start_converges_faster(self):
        rng = np.random.default_rng(3)
        cost, nxt, tpm = random_mdp(rng, 2, 2, 2)
        pi = greedy_policy(cost)
        j, info_cold = policy_evaluation(pi, cost, nxt, tpm, 0.9, tol=1e-12)
        _, info_warm = policy_evaluation(pi, cost, nxt, tpm, 0.9, tol=1e-12,
                                         j0=j)
        assert info_warm["sweeps"] < info_cold["sweeps"]

    def test_sweep_cap_raises(self):
        cost = np.array([[1.0], [1.0]])
        nxt = np.zeros((2, 1), dtype=np.intp)
        tpm = np.eye(2)
        pi = np.zeros(2, dtype=np.intp)
        with pytest.raises(NonConvergence):
            policy_evaluation(pi, cost, nxt, tpm, 0.99, tol=1e-15, max_sweeps=3)

    def test_infeasible_policy_rejected(self):
        cost = np.array([[np.inf, 1.0]])
        nxt = np.zeros((1, 2), dtype=np.intp)
        tpm = np.eye(1)
        with pytest.raises(NoFeasibleControl):
            policy_evaluation(np.array([0]), cost, nxt, tpm, 0.9)


class TestPolicyImprovement:
    def test_monotone_value(self):
        # one improvement step never worsens the exact policy value
        rng = np.random.default_rng(4)
        for _ in range(10):
            cost, nxt, tpm = random_mdp(rng, 3, 3, 3)
            pi = rng.integers(0, 3, 27).astype(np.intp)
            j = exact_policy_value(pi, cost, nxt, tpm, 0.9)
            pi2 = policy_improvement(j, cost, nxt, tpm, 0.9)
            j2 = exact_policy_value(pi2, cost, nxt, tpm, 0.9)
            assert np.all(j2 <= j + 1e-9)

    def test_sticky_keeps_incumbent_within_band(self):
        # two controls identical in cost and successor: the incumbent wins
        cost = np.array([[1.0, 1.0]])
        nxt = np.zeros((1, 2), dtype=np.intp)
        tpm = np.eye(1)
        j = np.array([5.0])
        inc = np.array([1], dtype=np.intp)
        pi = policy_improvement(j, cost, nxt, tpm, 0.9, incumbent=inc,
                                sticky_tol=1e-9)
        assert pi[0] == 1

    def test_without_sticky_tie_weight_decides(self):
        cost = np.array([[1.0, 1.0]])
        nxt = np.zeros((1, 2), dtype=np.intp)
        tpm = np.eye(1)
        j = np.array([5.0])
        w = np.array([[1.0, 0.0]])
        pi = policy_improvement(j, cost, nxt, tpm, 0.9, tie_weight=w)
        assert pi[0] == 1

    def test_sticky_abandons_incumbent_outside_band(self):
        cost = np.array([[1.0, 2.0]])
        nxt = np.zeros((1, 2), dtype=np.intp)
        tpm = np.eye(1)
        j = np.array([0.0])
        pi = policy_improvement(j, cost, nxt, tpm, 0.9,
                                incumbent=np.array([1], dtype=np.intp),
                                sticky_tol=1e-9)
        assert pi[0] == 0


class TestPolicyIteration:
    def test_two_state_closed_form(self):
        # single action: PI returns the linear-solve value immediately
        cost = np.array([[1.0], [2.0]])
        nxt = np.zeros((2, 1), dtype=np.intp)
        tpm = np.array([[0.7, 0.3], [0.4, 0.6]])
        gamma = 0.9
        pi, j, diag = policy_iteration(cost, nxt, tpm, gamma, tol=1e-13)
        expect = exact_policy_value(np.zeros(2, dtype=np.intp), cost, nxt,
                                    tpm, gamma)
        assert np.allclose(j, expect, atol=1e-9)
        assert diag["changes"][-1] == 0

    def test_hand_instance_vs_enumeration(self):
        # 3 deterministic states, 2 actions: 8 stationary policies
        gamma = 0.85
        cost = np.array([[1.0, 4.0],
                         [2.0, 0.5],
                         [0.2, 3.0]])
        nxt = np.array([[1, 2],
                        [0, 2],
                        [1, 0]], dtype=np.intp)
        tpm = np.eye(1)
        pi, j, _ = policy_iteration(cost, nxt, tpm, gamma, tol=1e-13)
        best = None
        for combo in itertools.product(range(2), repeat=3):
            cand = np.array(combo, dtype=np.intp)
            val = exact_policy_value(cand, cost, nxt, tpm, gamma)
            best = val if best is None else np.minimum(best, val)
        assert np.allclose(j, best, atol=1e-9)

    def test_randomized_vs_brute_force(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            n_p = int(rng.integers(1, 3))
            n_det = int(rng.integers(1, 3))
            n_u = int(rng.integers(2, 4))
            cost, nxt, tpm = random_mdp(rng, n_p, n_det, n_u)
            gamma = 0.9
            pi, j, diag = policy_iteration(cost, nxt, tpm, gamma, tol=1e-13)
            n_s = n_p * n_det
            best = np.full(n_s, np.inf)
            for combo in itertools.product(range(n_u), repeat=n_s):
                cand = np.array(combo, dtype=np.intp)
                best = np.minimum(
                    best, exact_policy_value(cand, cost, nxt, tpm, gamma))
            assert np.allclose(j, best, atol=1e-9)
            assert diag["changes"][-1] == 0

    def test_gamma_validated(self):
        cost = np.array([[1.0]])
        nxt = np.zeros((1, 1), dtype=np.intp)
        with pytest.raises(ValueError):
            policy_iteration(cost, nxt, np.eye(1), 1.0)

    def test_diagnostics_shape(self):
        rng = np.random.default_rng(7)
        cost, nxt, tpm = random_mdp(rng, 2, 3, 3)
        _, _, diag = policy_iteration(cost, nxt, tpm, 0.9, tol=1e-12)
        assert diag["iterations"] == len(diag["changes"])
        assert len(diag["eval_sweeps"]) == len(diag["changes"])
        assert diag["changes"][-1] == 0

    def test_shape_mismatch_rejected(self):
        cost = np.zeros((4, 2))
        nxt = np.zeros((4, 2), dtype=np.intp)
        tpm = np.eye(3)  # 4 states do not factor over 3 demand levels
        with pytest.raises(ValueError):
            policy_iteration(cost, nxt, tpm, 0.9)
