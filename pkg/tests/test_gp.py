"""Sum-power global precoder: eigen-beamforming, water-filling, rotation, extraction."""

import numpy as np
import pytest

from netmimo.gp import (
    DegenerateChannelError,
    agp_extract,
    equalizing_rotation,
    global_precoder,
    gram,
    minmax_mse,
    waterfill,
)
from netmimo.model import (
    ChannelSet,
    ParticipationState,
    PrecoderSet,
    build_equivalent_channel,
    substream_mses,
    wiener_filter,
)
from netmimo.sip import sip_run, SipConfig


def _random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _channel_set(rng, b=2, nt=4, nr=2, n0=1.0):
    return ChannelSet(b, nt, nr, tuple(_random_complex(rng, (nr, nt)) for _ in range(b)), n0)


class TestGram:
    def test_identity(self):
        ch = ChannelSet(1, 2, 2, (np.eye(2, dtype=complex),), 1.0)
        np.testing.assert_allclose(gram(ch), np.eye(2), atol=1e-14)

    def test_zero(self):
        ch = ChannelSet(2, 2, 2, (np.zeros((2, 2)), np.zeros((2, 2))), 2.0)
        np.testing.assert_array_equal(gram(ch), np.zeros((4, 4)))

    def test_matches_elementwise_recomputation(self):
        rng = np.random.default_rng(0)
        ch = _channel_set(rng, n0=0.5)
        h = np.hstack(ch.channels)
        expected = np.zeros((8, 8), dtype=complex)
        for i in range(8):
            for j in range(8):
                expected[i, j] = np.sum(np.conj(h[:, i]) * h[:, j]) / 0.5
        assert np.max(np.abs(gram(ch) - expected)) < 1e-12


def _bisect_water_level(eigs, total_power):
    """1-D bisection oracle on the monotone power-vs-level function."""
    eigs = np.asarray(eigs, float)
    pos = eigs[eigs > 0]

    def allocated(level):
        return np.sum(np.maximum(level / np.sqrt(pos) - 1.0 / pos, 0.0))

    lo, hi = 0.0, 1.0
    while allocated(hi) < total_power:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if allocated(mid) < total_power:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestWaterfill:
    def test_symmetric_split(self):
        res = waterfill(np.array([4.0, 4.0]), 2.0)
        np.testing.assert_allclose(res.sigmas, [1.0, 1.0], atol=1e-12)
        assert abs(res.water_level - 2.5) < 1e-12

    def test_single_stream_takes_all(self):
        res = waterfill(np.array([3.7]), 5.0)
        assert abs(res.sigmas[0] ** 2 - 5.0) < 1e-12

    def test_weak_stream_shut_off_matches_bisection(self):
        eigs = np.array([9.0, 0.01])
        res = waterfill(eigs, 0.1)
        level = _bisect_water_level(eigs, 0.1)
        assert abs(res.water_level - level) < 1e-8
        assert res.sigmas[1] == 0.0
        assert abs(np.sum(res.sigmas**2) - 0.1) < 1e-9 * 0.1

    def test_random_cases_match_bisection(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            eigs = rng.uniform(0.001, 10.0, size=rng.integers(1, 5))
            power = float(rng.uniform(0.01, 20.0))
            res = waterfill(eigs, power)
            level = _bisect_water_level(eigs, power)
            assert abs(res.water_level - level) < 1e-7 * max(level, 1.0)
            assert abs(np.sum(res.sigmas**2) - power) < 1e-9 * power

    def test_zero_eigenvalue_gets_zero_power(self):
        res = waterfill(np.array([2.0, 0.0]), 1.0)
        assert res.sigmas[1] == 0.0
        assert abs(np.sum(res.sigmas**2) - 1.0) < 1e-12

    def test_all_nonpositive_rejected(self):
        with pytest.raises(DegenerateChannelError):
            waterfill(np.array([0.0, 0.0]), 1.0)


class TestEqualizingRotation:
    def test_trivial_size(self):
        np.testing.assert_allclose(equalizing_rotation(1), [[1.0]], atol=1e-15)

    def test_averages_two_point_diagonal(self):
        q = equalizing_rotation(2)
        e = np.diag([0.2, 0.4])
        diag = np.real(np.diag(q @ e @ q.conj().T))
        np.testing.assert_allclose(diag, [0.3, 0.3], atol=1e-14)

    def test_flattens_random_diagonal(self):
        rng = np.random.default_rng(2)
        q = equalizing_rotation(4)
        e = np.diag(rng.uniform(0.05, 1.0, 4))
        diag = np.real(np.diag(q @ e @ q.conj().T))
        assert diag.max() - diag.min() <= 1e-12

    def test_unitary_constant_modulus(self):
        for l in (1, 2, 3, 4, 5):
            q = equalizing_rotation(l)
            assert np.linalg.norm(q.conj().T @ q - np.eye(l)) <= 1e-10
            np.testing.assert_allclose(np.abs(q) ** 2, 1.0 / l, atol=1e-12)

    def test_rotation_preserves_trace(self):
        rng = np.random.default_rng(3)
        e = np.diag(rng.uniform(0.1, 1.0, 4))
        q = equalizing_rotation(4)
        assert abs(np.trace(q @ e @ q.conj().T).real - np.trace(e)) <= 1e-10


class TestGlobalPrecoder:
    def test_zero_channel_degenerates_to_unit_mse(self):
        ch = ChannelSet(2, 2, 2, (np.zeros((2, 2)), np.zeros((2, 2))), 1.0)
        _, mse = global_precoder(ch, 2, 4.0, pa_mode="equal")
        assert abs(mse - 1.0) < 1e-12

    def test_flat_spectrum_equal_mses(self):
        # identity stacked channel: all eigenvalues equal, full rank
        c = 2.0
        ch = ChannelSet(1, 3, 3, (np.sqrt(c) * np.eye(3, dtype=complex),), 1.0)
        w, mse = global_precoder(ch, 3, 3.0)
        expected = 1.0 / (1.0 + c * 3.0 / 3)
        assert abs(mse - expected) < 1e-9

    def test_sum_power_met_with_equality(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            ch = _channel_set(rng)
            w, _ = global_precoder(ch, 2, 8.0)
            assert abs(np.sum(np.abs(w) ** 2) - 8.0) <= 1e-9 * 8.0

    def test_equal_mse_and_crosscheck_against_receiver_path(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            ch = _channel_set(rng, n0=0.3)
            w, mse = global_precoder(ch, 2, 8.0)
            h_eq = ch.stacked() @ w
            rep = substream_mses(wiener_filter(h_eq, ch.n0), h_eq, ch.n0)
            assert rep.max_mse - rep.min_mse <= 1e-9
            assert abs(rep.max_mse - mse) <= 1e-9

    def test_rotation_invariance_of_sum_mse(self):
        rng = np.random.default_rng(6)
        ch = _channel_set(rng)
        r_h = gram(ch)
        w, _ = global_precoder(ch, 2, 8.0)
        from netmimo.gp import equalizing_rotation as rot

        q = rot(2)
        before = np.trace(np.linalg.inv(np.eye(2) + (w @ q).conj().T @ r_h @ (w @ q)))
        after = np.trace(np.linalg.inv(np.eye(2) + w.conj().T @ r_h @ w))
        assert abs(before - after) <= 1e-10

    def test_lower_bounds_feasible_per_bs_precoders(self):
        rng = np.random.default_rng(7)
        p = 4.0
        for _ in range(10):
            ch = _channel_set(rng)
            _, bound = global_precoder(ch, 2, 2 * p)
            # random per-BS-feasible precoders
            for _ in range(5):
                ws = []
                for _b in range(2):
                    w = _random_complex(rng, (4, 2))
                    w *= np.sqrt(p / np.sum(np.abs(w) ** 2))
                    ws.append(w)
                pset = PrecoderSet(tuple(ws), 2, p)
                h_eq = build_equivalent_channel(ch, pset, ParticipationState.full(2))
                rep = substream_mses(wiener_filter(h_eq, ch.n0), h_eq, ch.n0)
                assert rep.max_mse >= bound - 1e-9
            # the sequential design is feasible too
            pset = sip_run(ch, (1.0, 0.78), 2, p, SipConfig())
            h_eq = build_equivalent_channel(ch, pset, ParticipationState.full(2))
            rep = substream_mses(wiener_filter(h_eq, ch.n0), h_eq, ch.n0)
            assert rep.max_mse >= bound - 1e-9


class TestAgpExtract:
    def test_single_bs_identity(self):
        rng = np.random.default_rng(8)
        w = _random_complex(rng, (4, 2))
        blocks = agp_extract(w, ParticipationState.full(1), 4)
        np.testing.assert_array_equal(blocks[0], w)

    def test_absent_helper_muted(self):
        rng = np.random.default_rng(9)
        w = _random_complex(rng, (8, 2))
        blocks = agp_extract(w, ParticipationState((True, False)), 4)
        np.testing.assert_array_equal(blocks[0], w[:4])
        np.testing.assert_array_equal(blocks[1], np.zeros((4, 2)))

    def test_restack_reproduces_global(self):
        rng = np.random.default_rng(10)
        w = _random_complex(rng, (12, 2))
        blocks = agp_extract(w, ParticipationState.full(3), 4)
        np.testing.assert_array_equal(np.vstack(blocks), w)

    def test_per_bs_power_not_bounded(self):
        # documented non-invariant: sub-blocks may exceed the per-BS budget
        rng = np.random.default_rng(11)
        seen_violation = False
        for _ in range(50):
            ch = _channel_set(rng)
            w, _ = global_precoder(ch, 2, 8.0)
            blocks = agp_extract(w, ParticipationState.full(2), 4)
            powers = [np.sum(np.abs(b) ** 2) for b in blocks]
            if max(powers) > 4.0:
                seen_violation = True
                break
        assert seen_violation

    def test_row_count_validated(self):
        with pytest.raises(ValueError):
            agp_extract(np.zeros((7, 2)), ParticipationState.full(2), 4)


def test_minmax_mse_zero_gram_is_one():
    w = np.ones((4, 2)) / np.sqrt(8)
    assert abs(minmax_mse(w, np.zeros((4, 4))) - 1.0) < 1e-12
