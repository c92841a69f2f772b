"""Learning-rule primitives: values, action selection, TD updates, traces."""

import math

import numpy as np
import pytest

from timesense.agent import (
    AgentParams,
    decay_epsilon,
    init_weights,
    q_value,
    q_values,
    select_action,
    tabular_update,
    td_error,
    update,
    zero_traces,
)

PAPER = AgentParams()  # alpha 0.2, gamma 0.1, eta 0.95, eps0 0.3, decay 0.9995


class TestQValue:
    def test_zero_features(self):
        w = np.ones((4, 6))
        x = np.zeros(6)
        assert all(q_value(w, x, a) == 0.0 for a in range(4))

    def test_all_ones_weights_sum_features(self):
        x = np.array([0.1, 0.2, 0.3])
        w = np.ones((2, 3))
        assert q_value(w, x, 1) == pytest.approx(0.6, rel=1e-12)

    def test_matches_explicit_loop(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((4, 18))
        x = rng.standard_normal(18)
        for a in range(4):
            looped = sum(w[a, j] * x[j] for j in range(18))
            assert q_value(w, x, a) == pytest.approx(looped, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            q_value(np.ones((2, 3)), np.ones(4), 0)


class TestSelectAction:
    def test_greedy_tie_breaks_to_lowest_index(self):
        rng = np.random.default_rng(0)
        assert select_action(np.array([0.0, 3.0, 1.0, 3.0]), 0.0, rng) == 1
        assert select_action(np.array([2.0, 2.0, 2.0]), 0.0, rng) == 0

    def test_full_exploration_is_uniform(self):
        rng = np.random.default_rng(123)
        qs = np.array([0.0, 10.0, -5.0, 1.0])
        counts = np.zeros(4)
        draws = 10_000
        for _ in range(draws):
            counts[select_action(qs, 1.0, rng)] += 1
        expected = draws / 4
        sd = math.sqrt(draws * 0.25 * 0.75)
        assert np.all(np.abs(counts - expected) <= 3 * sd)

    def test_invariance_to_shift_and_positive_scale(self):
        rng = np.random.default_rng(5)
        qs = rng.standard_normal(4)
        base = select_action(qs, 0.0, rng)
        assert select_action(qs + 17.3, 0.0, rng) == base
        assert select_action(qs * 2.5, 0.0, rng) == base

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_action(np.array([]), 0.0, np.random.default_rng(0))


class TestTdError:
    def test_all_zero(self):
        assert td_error(0.0, 0.1, 0.0, 0.0, False) == 0.0

    def test_terminal_reward_only(self):
        assert td_error(1.0, 0.1, 99.0, 0.0, True) == 1.0

    def test_bootstrapped_value(self):
        assert td_error(0.0, 0.1, 2.0, 0.5, False) == pytest.approx(-0.3, abs=1e-15)


class TestUpdate:
    def test_zero_everything_is_noop(self):
        w = np.zeros((4, 6))
        e = zero_traces(4, 6)
        w2, e2 = update(w, e, np.zeros(6), 0, 1.0, PAPER)
        assert np.all(w2 == 0.0)
        assert np.all(e2 == 0.0)

    def test_first_step_unrolled(self):
        w = np.zeros((2, 3))
        e = zero_traces(2, 3)
        x = np.array([0.5, 0.0, 0.25])
        delta = -1.0
        w2, e2 = update(w, e, x, 1, delta, PAPER)
        assert np.array_equal(e2[1], x)
        assert np.all(e2[0] == 0.0)
        assert np.allclose(w2[1], PAPER.alpha * delta * x)
        assert np.all(w2[0] == 0.0)

    def test_zero_delta_touches_only_traces(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((3, 4))
        e = rng.uniform(0.0, 1.0, (3, 4))
        x = rng.uniform(0.0, 1.0, 4)
        w2, e2 = update(w, e, x, 2, 0.0, PAPER)
        assert np.array_equal(w2, w)
        assert not np.array_equal(e2, e)

    def test_trace_decay_without_features(self):
        e0 = np.full((2, 3), 0.8)
        w = np.zeros((2, 3))
        e = e0.copy()
        for _ in range(5):
            w, e = update(w, e, np.zeros(3), 0, 0.0, PAPER)
        factor = (PAPER.gamma * PAPER.eta) ** 5
        assert np.allclose(e, e0 * factor, rtol=1e-12)

    def test_three_scripted_steps_match_hand_replay(self):
        # independent scalar replay of three updates at the configured
        # constants (alpha 0.2, gamma 0.1, eta 0.95)
        alpha, gamma, eta = 0.2, 0.1, 0.95
        script = [
            (np.array([1.0, 0.0]), 0, 0.5),
            (np.array([0.0, 1.0]), 1, -0.25),
            (np.array([0.5, 0.5]), 0, 1.0),
        ]
        w_ref = [[0.0, 0.0], [0.0, 0.0]]
        e_ref = [[0.0, 0.0], [0.0, 0.0]]
        for x, a, delta in script:
            for b in range(2):
                for j in range(2):
                    e_ref[b][j] = gamma * eta * e_ref[b][j]
            for j in range(2):
                e_ref[a][j] += x[j]
            for b in range(2):
                for j in range(2):
                    w_ref[b][j] += alpha * delta * e_ref[b][j]

        w = np.zeros((2, 2))
        e = zero_traces(2, 2)
        for x, a, delta in script:
            w, e = update(w, e, x, a, delta, PAPER)
        assert np.allclose(w, np.array(w_ref), atol=1e-15)
        assert np.allclose(e, np.array(e_ref), atol=1e-15)

    def test_inputs_not_mutated(self):
        w = np.ones((2, 3))
        e = np.ones((2, 3))
        w_copy, e_copy = w.copy(), e.copy()
        update(w, e, np.ones(3), 0, 1.0, PAPER)
        assert np.array_equal(w, w_copy)
        assert np.array_equal(e, e_copy)

    def test_shared_traces_variant(self):
        params = AgentParams(shared_traces=True)
        w = np.zeros((2, 3))
        e = zero_traces(2, 3, shared=True)
        x = np.array([1.0, 0.5, 0.0])
        w2, e2 = update(w, e, x, 0, 1.0, params)
        assert e2.shape == (3,)
        assert np.array_equal(e2, x)
        # only the taken action's weights move under the shared reading
        assert np.allclose(w2[0], params.alpha * x)
        assert np.all(w2[1] == 0.0)


class TestDecayEpsilon:
    def test_paper_values(self):
        assert decay_epsilon(0.3, PAPER) == pytest.approx(0.29985, abs=1e-12)

    def test_unit_decay_is_identity(self):
        params = AgentParams(epsilon_decay=1.0)
        assert decay_epsilon(0.7, params) == 0.7

    def test_closed_form_after_many_steps(self):
        eps = 0.3
        for _ in range(1386):
            eps = decay_epsilon(eps, PAPER)
        expected = 0.3 * math.exp(1386 * math.log(0.9995))
        assert eps == pytest.approx(expected, rel=1e-9)


class TestTabularUpdate:
    def test_terminal_reward_writes_alpha(self):
        q = np.zeros((3, 4))
        q2 = tabular_update(q, 0, 1, 1.0, 0, True, PAPER)
        assert q2[0, 1] == pytest.approx(PAPER.alpha, abs=1e-15)
        assert np.sum(q2 != 0.0) == 1

    def test_zero_reward_zero_table_unchanged(self):
        q = np.zeros((3, 4))
        q2 = tabular_update(q, 1, 0, 0.0, 2, False, PAPER)
        assert np.array_equal(q2, q)

    def test_fifty_scripted_transitions_match_replay(self):
        rng = np.random.default_rng(19)
        q = np.zeros((2, 2))
        q_ref = [[0.0, 0.0], [0.0, 0.0]]
        for _ in range(50):
            s = int(rng.integers(2))
            a = int(rng.integers(2))
            r = float(rng.normal())
            s_next = int(rng.integers(2))
            terminal = bool(rng.random() < 0.2)
            target = r + (0.0 if terminal else PAPER.gamma * max(q_ref[s_next]))
            q_ref[s][a] = q_ref[s][a] + PAPER.alpha * (target - q_ref[s][a])
            q = tabular_update(q, s, a, r, s_next, terminal, PAPER)
        assert np.allclose(q, np.array(q_ref), atol=1e-12)

    def test_index_out_of_range(self):
        q = np.zeros((2, 2))
        with pytest.raises(ValueError):
            tabular_update(q, 2, 0, 0.0, 0, False, PAPER)
        with pytest.raises(ValueError):
            tabular_update(q, 0, 5, 0.0, 0, False, PAPER)


class TestInitAndParams:
    def test_weights_uniform_and_seeded(self):
        w1 = init_weights(4, 18, seed=3)
        w2 = init_weights(4, 18, seed=3)
        assert np.array_equal(w1, w2)
        assert np.all(w1 >= 0.0) and np.all(w1 <= 1.0)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            AgentParams(alpha=0.0)
        with pytest.raises(ValueError):
            AgentParams(gamma=1.5)
        with pytest.raises(ValueError):
            AgentParams(epsilon_decay=0.0)
