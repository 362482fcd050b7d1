"""Sequential-incremental optimizer: KKT updates, power transfer, convergence."""

import numpy as np
import pytest

from netmimo.gp import global_precoder
from netmimo.model import (
    ChannelSet,
    ParticipationState,
    PrecoderSet,
    build_equivalent_channel,
    substream_mses,
    wiener_filter,
)
from netmimo.sip import (
    SipConfig,
    SipState,
    column_powers,
    helper_order,
    initial_helper_precoder,
    kkt_column_update,
    power_transfer,
    serving_precoder,
    sip_optimize_bs,
    sip_run,
    transfer_budgets,
    _optimize_helper,
)


def _random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _channel_set(rng, b=2, nt=4, nr=2, n0=1.0):
    return ChannelSet(b, nt, nr, tuple(_random_complex(rng, (nr, nt)) for _ in range(b)), n0)


def _column_objective(h_prev, h_b, f_row, g):
    z = f_row @ (h_prev + h_b @ g)
    return float(np.abs(z) ** 2 - 2.0 * np.real(z))


def _pgd_oracle(h_prev, h_b, f_row, budget, iters=4000):
    """Projected gradient descent on the norm-ball column subproblem."""
    g = np.zeros(h_b.shape[1], dtype=complex)
    u = h_b.conj().T @ f_row.conj()
    lip = float(np.real(u.conj() @ u))
    if lip == 0.0:
        return g
    step = 1.0 / lip
    radius = np.sqrt(budget)
    for _ in range(iters):
        z = f_row @ (h_prev + h_b @ g)
        g = g - step * u * (z - 1.0)
        norm = np.linalg.norm(g)
        if norm > radius:
            g *= radius / norm
    return g


class TestServingPrecoder:
    def test_identity_channel_equal_mode(self):
        w = serving_precoder(np.eye(4, dtype=complex), 1.0, 4, 4.0, pa_mode="equal")
        np.testing.assert_allclose(np.sum(np.abs(w) ** 2, axis=0), 1.0, atol=1e-12)
        assert abs(np.sum(np.abs(w) ** 2) - 4.0) < 1e-9

    def test_zero_channel_equal_mode(self):
        h = np.zeros((2, 4), dtype=complex)
        w = serving_precoder(h, 1.0, 2, 4.0, pa_mode="equal")
        assert abs(np.sum(np.abs(w) ** 2) - 4.0) < 1e-9
        h_eq = h @ w
        rep = substream_mses(wiener_filter(h_eq, 1.0), h_eq, 1.0)
        assert abs(rep.max_mse - 1.0) < 1e-12

    def test_waterfill_mode_crosscheck(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            h1 = _random_complex(rng, (2, 4))
            w = serving_precoder(h1, 1.0, 2, 4.0)
            assert abs(np.sum(np.abs(w) ** 2) - 4.0) <= 1e-9 * 4.0
            h_eq = h1 @ w
            rep = substream_mses(wiener_filter(h_eq, 1.0), h_eq, 1.0)
            r_h1 = h1.conj().T @ h1
            expected = np.trace(np.linalg.inv(np.eye(2) + w.conj().T @ r_h1 @ w)).real / 2
            assert abs(rep.max_mse - expected) <= 1e-9


class TestKktColumnUpdate:
    def test_zero_channel_returns_zero(self):
        g, eta = kkt_column_update(
            np.zeros(2, complex), np.zeros((2, 4), complex), np.ones(2, complex), 1.0
        )
        np.testing.assert_array_equal(g, np.zeros(4))
        assert eta == 0.0

    def test_zero_budget_returns_zero(self):
        rng = np.random.default_rng(1)
        g, eta = kkt_column_update(
            _random_complex(rng, 2), _random_complex(rng, (2, 4)), _random_complex(rng, 2), 0.0
        )
        np.testing.assert_array_equal(g, np.zeros(4))
        assert eta == 0.0

    def test_scalar_unconstrained(self):
        g, eta = kkt_column_update(
            np.array([0.5 + 0j]), np.array([[1.0 + 0j]]), np.array([1.0 + 0j]), 1.0
        )
        assert abs(g[0] - 0.5) < 1e-12
        assert eta == 0.0

    def test_scalar_binding(self):
        g, eta = kkt_column_update(
            np.array([0.5 + 0j]), np.array([[1.0 + 0j]]), np.array([1.0 + 0j]), 0.04
        )
        assert abs(abs(g[0]) - 0.2) < 1e-7
        assert abs(eta - 1.5) < 1e-6

    def test_matches_literal_matrix_formula(self):
        # same eta plugged into the unreduced matrix expression; the
        # eta = 0 system is rank one and consistent, so the minimum-norm
        # least-squares solution is the literal answer there
        rng = np.random.default_rng(2)
        for _ in range(20):
            h_b = _random_complex(rng, (2, 4))
            f_row = _random_complex(rng, 2)
            h_prev = _random_complex(rng, 2)
            budget = float(rng.uniform(0.01, 1.0))
            g, eta = kkt_column_update(h_prev, h_b, f_row, budget)
            f_col = f_row.conj().reshape(-1, 1)
            lhs = h_b.conj().T @ f_col @ f_col.conj().T @ h_b + eta * np.eye(4)
            rhs = h_b.conj().T @ (f_col - f_col @ (f_row @ h_prev).reshape(1, 1))
            if eta > 0:
                literal = np.linalg.solve(lhs, rhs).ravel()
            else:
                literal = np.linalg.lstsq(lhs, rhs, rcond=None)[0].ravel()
            np.testing.assert_allclose(g, literal, atol=1e-8)

    def test_against_projected_gradient_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            h_b = _random_complex(rng, (2, 4))
            f_row = _random_complex(rng, 2)
            h_prev = _random_complex(rng, 2)
            budget = float(rng.uniform(0.005, 2.0))
            g, eta = kkt_column_update(h_prev, h_b, f_row, budget)
            g_oracle = _pgd_oracle(h_prev, h_b, f_row, budget)
            obj = _column_objective(h_prev, h_b, f_row, g)
            obj_oracle = _column_objective(h_prev, h_b, f_row, g_oracle)
            assert obj <= obj_oracle + 1e-6
            assert abs(obj - obj_oracle) <= 1e-6
            # complementary slackness
            assert abs(eta * (np.sum(np.abs(g) ** 2) - budget)) <= 1e-8

    def test_kkt_stationarity_finite_difference(self):
        # the analytic gradient expression must track finite differences at
        # generic points, and its norm must vanish at the returned solution
        rng = np.random.default_rng(4)
        for _ in range(20):
            h_b = _random_complex(rng, (2, 4))
            f_row = _random_complex(rng, 2)
            h_prev = _random_complex(rng, 2)
            budget = float(rng.uniform(0.01, 0.5))
            g, eta = kkt_column_update(h_prev, h_b, f_row, budget)
            u = h_b.conj().T @ f_row.conj()

            def lagrangian(gv):
                return _column_objective(h_prev, h_b, f_row, gv) + eta * (
                    float(np.sum(np.abs(gv) ** 2)) - budget
                )

            def analytic_grad(gv):
                z = f_row @ (h_prev + h_b @ gv)
                return u * (z - 1.0) + eta * gv

            assert np.linalg.norm(analytic_grad(g)) <= 1e-6 * (1.0 + np.linalg.norm(g))

            g0 = _random_complex(rng, 4)
            h = 1e-6
            fd = np.zeros(4, dtype=complex)
            for i in range(4):
                e = np.zeros(4, dtype=complex)
                e[i] = h
                d_re = (lagrangian(g0 + e) - lagrangian(g0 - e)) / (2 * h)
                d_im = (lagrangian(g0 + 1j * e) - lagrangian(g0 - 1j * e)) / (2 * h)
                fd[i] = 0.5 * (d_re + 1j * d_im)  # Wirtinger d/d(conj g)
            analytic = analytic_grad(g0)
            assert np.linalg.norm(fd - analytic) <= 1e-4 * np.linalg.norm(analytic)

    def test_power_residual_when_binding(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            h_b = _random_complex(rng, (2, 4))
            f_row = _random_complex(rng, 2)
            h_prev = _random_complex(rng, 2)
            budget = float(rng.uniform(0.001, 0.05))
            g, eta = kkt_column_update(h_prev, h_b, f_row, budget)
            if eta > 0:
                assert abs(np.sum(np.abs(g) ** 2) - budget) <= 1e-8 * max(budget, 1.0)

    def test_negative_budget_rejected(self):
        with pytest.raises(ValueError):
            kkt_column_update(np.zeros(2), np.zeros((2, 4)), np.zeros(2), -1.0)


class TestPowerTransfer:
    def test_budget_arithmetic(self):
        new = transfer_budgets(np.array([0.5, 1.0]), 0, 1, 0.01)
        np.testing.assert_allclose(new, [0.51, 0.99], atol=1e-15)

    def test_zero_delta_keeps_budgets_and_source_column(self):
        rng = np.random.default_rng(6)
        w = _random_complex(rng, (4, 2))
        state = SipState(w, column_powers(w), 1)
        h_b = _random_complex(rng, (2, 4))
        out = power_transfer(state, 0, 1, 0.0, _random_complex(rng, 2), h_b, _random_complex(rng, 2))
        np.testing.assert_array_equal(out.w_current[:, 1], w[:, 1])

    def test_total_power_never_increases(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            w = _random_complex(rng, (4, 2))
            state = SipState(w, column_powers(w), 1)
            before = float(np.sum(state.stream_powers))
            out = power_transfer(
                state, 0, 1, 0.01, _random_complex(rng, 2), _random_complex(rng, (2, 4)),
                _random_complex(rng, 2),
            )
            assert float(np.sum(out.stream_powers)) <= before + 1e-12

    def test_same_stream_rejected(self):
        rng = np.random.default_rng(8)
        w = _random_complex(rng, (4, 2))
        state = SipState(w, column_powers(w), 1)
        with pytest.raises(ValueError):
            power_transfer(state, 1, 1, 0.01, np.zeros(2), np.zeros((2, 4)), np.zeros(2))

    def test_stream_powers_track_columns(self):
        rng = np.random.default_rng(9)
        w = _random_complex(rng, (4, 2))
        state = SipState(w, column_powers(w), 1)
        out = power_transfer(
            state, 0, 1, 0.01, _random_complex(rng, 2), _random_complex(rng, (2, 4)),
            _random_complex(rng, 2),
        )
        np.testing.assert_allclose(out.stream_powers, column_powers(out.w_current), atol=1e-9)


class TestOptimizeBs:
    def test_initializer_layout(self):
        w = initial_helper_precoder(4, 2, 8.0)
        np.testing.assert_allclose(w[:2, :], 2.0 * np.eye(2), atol=1e-15)
        np.testing.assert_array_equal(w[2:, :], np.zeros((2, 2)))

    def test_zero_helper_channel_keeps_fixed_mse(self):
        rng = np.random.default_rng(10)
        h1 = _random_complex(rng, (2, 4))
        ch = ChannelSet(2, 4, 2, (h1, np.zeros((2, 4), dtype=complex)), 1.0)
        w1 = serving_precoder(h1, 1.0, 2, 4.0)
        fixed = PrecoderSet((w1,), 2, 4.0)
        w2, trace = sip_optimize_bs(ch, fixed, 1, SipConfig())
        h_fixed = h1 @ w1
        rep = substream_mses(wiener_filter(h_fixed, 1.0), h_fixed, 1.0)
        assert abs(trace.max_mse_history[-1] - rep.max_mse) <= 0.01 * rep.max_mse

    def test_equal_mses_terminate_immediately(self):
        # scaled-identity fixed part, zero helper: every stream identical
        ch = ChannelSet(
            2, 2, 2, (np.eye(2, dtype=complex), np.zeros((2, 2), dtype=complex)), 1.0
        )
        w1 = np.eye(2, dtype=complex)
        fixed = PrecoderSet((w1,), 2, 2.0)
        _, trace = sip_optimize_bs(ch, fixed, 1, SipConfig())
        assert trace.iterations_used == 1
        assert trace.terminated_by == "converged"

    def test_power_feasible_and_descent(self):
        rng = np.random.default_rng(11)
        p = 10.0
        descent_viol = total = 0
        for _ in range(200):
            ch = _channel_set(rng)
            w1 = serving_precoder(ch.channels[0], 1.0, 2, p)
            fixed = PrecoderSet((w1,), 2, p)
            w2, trace = sip_optimize_bs(ch, fixed, 1, SipConfig())
            assert np.sum(np.abs(w2) ** 2) <= p * (1 + 1e-9)
            hist = np.array(trace.max_mse_history)
            assert trace.iterations_used <= 100
            assert hist[-1] <= hist[0] + 1e-9
            d = np.diff(hist)
            descent_viol += int(np.sum(d > 1e-6))
            total += len(d)
        assert descent_viol <= 0.01 * total

    def test_respects_iteration_cap(self):
        rng = np.random.default_rng(12)
        ch = _channel_set(rng)
        w1 = serving_precoder(ch.channels[0], 1.0, 2, 10.0)
        fixed = PrecoderSet((w1,), 2, 10.0)
        _, trace = sip_optimize_bs(ch, fixed, 1, SipConfig(n_max=3, xi_th=1e-9))
        assert trace.iterations_used <= 3


class TestSipRun:
    def test_single_bs_returns_serving_only(self):
        rng = np.random.default_rng(13)
        h1 = _random_complex(rng, (2, 4))
        ch = ChannelSet(1, 4, 2, (h1,), 1.0)
        pset = sip_run(ch, (1.0,), 2, 4.0, SipConfig())
        np.testing.assert_array_equal(pset.precoders[0], serving_precoder(h1, 1.0, 2, 4.0))

    def test_two_bs_matches_explicit_chain(self):
        rng = np.random.default_rng(14)
        ch = _channel_set(rng)
        cfg = SipConfig()
        pset = sip_run(ch, (1.0, 0.78), 2, 4.0, cfg)
        w1 = serving_precoder(ch.channels[0], 1.0, 2, 4.0)
        w2, _ = sip_optimize_bs(ch, PrecoderSet((w1,), 2, 4.0), 1, cfg)
        np.testing.assert_array_equal(pset.precoders[0], w1)
        np.testing.assert_array_equal(pset.precoders[1], w2)

    def test_helper_order_descending_with_index_ties(self):
        assert helper_order((1.0, 0.3, 0.9)) == [2, 1]
        assert helper_order((1.0, 0.5, 0.5)) == [1, 2]
        assert helper_order((1.0,)) == []

    def test_unsorted_probabilities_processed_by_probability(self):
        # p2 < p3: BS 3 must be optimized first, against the serving BS only
        rng = np.random.default_rng(15)
        ch = _channel_set(rng, b=3)
        cfg = SipConfig()
        pset, traces = sip_run(ch, (1.0, 0.3, 0.9), 2, 4.0, cfg, with_traces=True)
        assert [b for b, _ in traces] == [2, 1]
        w1 = serving_precoder(ch.channels[0], 1.0, 2, 4.0)
        h_fixed = ch.channels[0] @ w1
        w_bs3, _ = _optimize_helper(h_fixed, ch.channels[2], 1.0, 2, 4.0, cfg)
        np.testing.assert_array_equal(pset.precoders[2], w_bs3)
        h_fixed = h_fixed + ch.channels[2] @ w_bs3
        w_bs2, _ = _optimize_helper(h_fixed, ch.channels[1], 1.0, 2, 4.0, cfg)
        np.testing.assert_array_equal(pset.precoders[1], w_bs2)

    def test_full_jt_mse_above_global_bound(self):
        rng = np.random.default_rng(16)
        p = 4.0
        for _ in range(30):
            ch = _channel_set(rng)
            pset = sip_run(ch, (1.0, 1.0), 2, p, SipConfig())
            h_eq = build_equivalent_channel(ch, pset, ParticipationState.full(2))
            rep = substream_mses(wiener_filter(h_eq, ch.n0), h_eq, ch.n0)
            _, bound = global_precoder(ch, 2, 2 * p)
            assert rep.max_mse >= bound - 1e-9


def test_sip_config_validation():
    with pytest.raises(ValueError):
        SipConfig(delta=0.0)
    with pytest.raises(ValueError):
        SipConfig(delta=1.0)
    with pytest.raises(ValueError):
        SipConfig(xi_th=0.0)
    with pytest.raises(ValueError):
        SipConfig(n_max=0)
