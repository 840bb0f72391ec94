"""Tests for fdcell.uplink, with a brute-force joint-ML oracle."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdcell.channel import apply_channel, freq_response
from fdcell.modem import (
    Allocation,
    constellation,
    demap_subcarriers,
    dft_spread,
    map_subcarriers,
    qam_map,
    strip_cp_and_dft,
    to_time_with_cp,
)
from fdcell.numerics import DimensionError
from fdcell.uplink import (
    UplinkTone,
    assemble_tone,
    block_decider,
    mmse_detect_tone,
    mmse_terms,
    ssic_oo,
    ssic_oo_detect,
    tone_decider,
)

QAM16 = constellation(16)
PAIRS = np.array(list(itertools.product(QAM16, QAM16)))  # (256, 2)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def joint_ml(y, h):
    """Exhaustive search over all 16-QAM symbol pairs; returns (best, tie)."""
    d = np.linalg.norm(y[None, :] - PAIRS @ h.T, axis=1)
    order = np.argsort(d)
    tie = abs(d[order[1]] - d[order[0]]) < 1e-9 * max(1.0, d[order[0]])
    return PAIRS[order[0]], tie


class TestAssemble:
    def test_single_ue_noiseless(self):
        h = np.array([[1.0], [2j], [-1.0], [0.5]])
        tone = assemble_tone(h, np.array([0.3 - 0.1j]))
        np.testing.assert_allclose(tone.y, h[:, 0] * (0.3 - 0.1j))

    def test_zero_symbols_is_noise(self):
        noise = np.array([1j, 2, 3, 4])
        tone = assemble_tone(crandn(np.random.default_rng(0), 4, 2), np.zeros(2), noise, 1.0)
        np.testing.assert_array_equal(tone.y, noise)

    def test_matches_time_domain_chain(self):
        rng = np.random.default_rng(1)
        n, m, cp, taps, ne = 64, 40, 9, 10, 4
        alloc = Allocation.localized(n, m)
        h_t = crandn(rng, 2, ne, taps)
        xbar = np.stack([dft_spread(qam_map(rng.integers(0, 2, 4 * m), 16)) for _ in range(2)])
        y = np.zeros((ne, n + cp), dtype=complex)
        for i in range(2):
            s = to_time_with_cp(map_subcarriers(xbar[i], alloc), cp, taps)
            y += apply_channel(s[None, :], h_t[i])
        ybar = demap_subcarriers(strip_cp_and_dft(y, n, cp), alloc)
        hf = freq_response(h_t, n)[:, :, alloc.index_array]  # (2, Ne, M)
        for t in (0, 17, m - 1):
            tone = assemble_tone(hf[:, :, t].T, xbar[:, t])
            np.testing.assert_allclose(tone.y, ybar[:, t], atol=1e-10)

    def test_dims(self):
        with pytest.raises(DimensionError):
            assemble_tone(np.ones((4, 2)), np.ones(3))
        with pytest.raises(DimensionError):
            UplinkTone(np.ones(3), np.ones((4, 2)), 0.1)
        with pytest.raises(ValueError):
            UplinkTone(np.ones(4), np.ones((4, 2)), -0.1)


class TestMmse:
    def test_single_ue_is_mrc(self):
        rng = np.random.default_rng(2)
        h = crandn(rng, 4, 1)
        y = crandn(rng, 4)
        tone = UplinkTone(y, h, 0.2)
        expected = np.vdot(h[:, 0], y) / (0.2 + np.vdot(h[:, 0], h[:, 0]).real)
        assert mmse_detect_tone(tone, 0) == pytest.approx(expected)
        assert mmse_detect_tone(tone, 0, scaled=False) == pytest.approx(np.vdot(h[:, 0], y) / 0.2)

    def test_joint_covariance_oracle(self):
        rng = np.random.default_rng(3)
        h = crandn(rng, 4, 3)
        y = crandn(rng, 4)
        tone = UplinkTone(y, h, 0.3)
        full = h @ h.conj().T + 0.3 * np.eye(4)
        for l in range(3):
            oracle = h[:, l].conj() @ np.linalg.solve(full, y)
            assert abs(mmse_detect_tone(tone, l) - oracle) < 1e-10

    def test_zero_forcing_limit(self):
        rng = np.random.default_rng(4)
        h = crandn(rng, 4, 2)
        for l in range(2):
            for n0 in (1e-12, 0.0):
                probe = UplinkTone(h[:, 1 - l], h, n0)
                assert abs(mmse_detect_tone(probe, l)) < 1e-6
                own = UplinkTone(h[:, l], h, n0)
                assert abs(mmse_detect_tone(own, l) - 1.0) < 1e-6

    def test_noiseless_terms_are_zero_forcing(self):
        rng = np.random.default_rng(5)
        h = crandn(rng, 4, 2, 1)
        y = h[:, 0] * 0.7 + h[:, 1] * (2 - 1j)
        t, q, singular = mmse_terms(y, h, 0, [1], 0.0)
        assert not singular
        proj = np.eye(4) - np.outer(h[:, 1, 0], h[:, 1, 0].conj()) / np.vdot(h[:, 1, 0], h[:, 1, 0])
        assert q[0] == pytest.approx(np.vdot(h[:, 0, 0], proj @ h[:, 0, 0]).real)
        assert abs(t[0] / q[0] - 0.7) < 1e-12

    def test_dependent_interferers_regularised(self):
        rng = np.random.default_rng(5)
        h = crandn(rng, 4, 3, 1)
        h[:, 2] = 2j * h[:, 1]
        y = h[:, 0] * 0.7 + h[:, 1] * 0.3
        t, q, singular = mmse_terms(y, h, 0, [1, 2], 0.0)
        assert singular
        assert np.all(np.isfinite(t)) and abs(t[0] / q[0] - 0.7) < 1e-6

    def test_unscaled_needs_noise(self):
        with pytest.raises(ValueError):
            mmse_detect_tone(UplinkTone(np.ones(4), np.ones((4, 2)), 0.0), 0, scaled=False)

    def test_index_checked(self):
        tone = UplinkTone(np.ones(4), np.ones((4, 2)), 0.1)
        with pytest.raises(IndexError):
            mmse_detect_tone(tone, 2)


class TestSsicOo:
    def test_single_ue_equals_mrc(self):
        rng = np.random.default_rng(6)
        h = crandn(rng, 4, 1)
        x = QAM16[5]
        y = h[:, 0] * x + 0.05 * crandn(rng, 4)
        dec, order = ssic_oo_detect(UplinkTone(y, h, 0.0025))
        mrc = np.vdot(h[:, 0], y) / np.vdot(h[:, 0], h[:, 0]).real
        assert order == [0]
        assert dec[0] == QAM16[np.argmin(np.abs(QAM16 - mrc))]

    def test_stronger_ue_first(self):
        rng = np.random.default_rng(7)
        h = crandn(rng, 4, 2)
        h[:, 1] *= 3.0 / np.linalg.norm(h[:, 1]) * np.linalg.norm(h[:, 0])
        _, order = ssic_oo_detect(assemble_tone(h, QAM16[[1, 2]]))
        assert order == [1, 0]

    def test_order_invariant_to_common_scaling(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            h = crandn(rng, 4, 3, 5)
            y = crandn(rng, 4, 5)
            c = 10 ** rng.uniform(-3, 3)
            _, o1, _ = ssic_oo(y, h, 0.1, tone_decider(16))
            _, o2, _ = ssic_oo(c * y, c * h, 0.1, tone_decider(16))
            assert o1 == o2

    def test_noiseless_block_recovery(self):
        rng = np.random.default_rng(9)
        m = 180
        h = crandn(rng, 4, 2, m)
        x = np.stack([qam_map(rng.integers(0, 2, 4 * m), 16) for _ in range(2)])
        xbar = np.stack([dft_spread(v) for v in x])
        y = np.einsum("jim,im->jm", h, xbar)
        soft, order, gains = ssic_oo(y, h, 0.0, block_decider(16))
        np.testing.assert_allclose(soft, x, atol=1e-10)
        assert sorted(order) == [0, 1]
        assert np.all(gains > 0.999)

    def test_genie_cancellation(self):
        rng = np.random.default_rng(10)
        h = crandn(rng, 4, 2, 8)
        truth = QAM16[rng.integers(0, 16, (2, 8))]
        y = np.einsum("jim,im->jm", h, truth) + 0.3 * crandn(rng, 4, 8)
        seen = []

        def spy(xhat, gain):
            soft, remod = tone_decider(16)(xhat, gain)
            seen.append(soft)
            return soft, np.zeros_like(remod)  # would break cancellation without the genie

        soft, order, _ = ssic_oo(y, h, 0.09, spy, genie=truth)
        first, second = order
        resid = y - h[:, first, :] * truth[first]
        t, q, _ = mmse_terms(resid, h, second, [], 0.09)
        np.testing.assert_allclose(soft[second], t / q, atol=1e-12)

    def test_cancellation_soundness(self):
        """After cancelling a correctly decided UE the tone equals the reduced system's."""
        rng = np.random.default_rng(11)
        for _ in range(100):
            h = crandn(rng, 4, 2)
            x = QAM16[rng.integers(0, 16, 2)]
            noise = 0.01 * crandn(rng, 4)
            tone = assemble_tone(h, x, noise, 1e-4)
            reduced = assemble_tone(h[:, [0]], x[[0]], noise, 1e-4)
            np.testing.assert_allclose(tone.y - h[:, 1] * x[1], reduced.y, atol=1e-15)

    def test_dims(self):
        with pytest.raises(DimensionError):
            ssic_oo(np.ones((4, 3)), np.ones((4, 2, 2)), 0.1, tone_decider(16))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_matches_joint_ml_noiseless(self, seed):
        rng = np.random.default_rng(seed)
        h = crandn(rng, 4, 2)
        x = QAM16[rng.integers(0, 16, 2)]
        tone = assemble_tone(h, x)
        ml, tie = joint_ml(tone.y, h)
        if tie:
            return
        dec, _ = ssic_oo_detect(tone)
        np.testing.assert_array_equal(dec, ml)


class TestDeciders:
    def test_tone_decider_unbiases(self):
        soft, hard = tone_decider(16)(np.array([0.5 * QAM16[3]]), np.array([0.5]))
        np.testing.assert_allclose(soft, [QAM16[3]])
        np.testing.assert_allclose(hard, [QAM16[3]])

    def test_block_decider_round_trip(self):
        rng = np.random.default_rng(12)
        x = QAM16[rng.integers(0, 16, 36)]
        gain = np.full(36, 0.8)
        soft, remod = block_decider(16)(0.8 * dft_spread(x), gain)
        np.testing.assert_allclose(soft, x, atol=1e-12)
        np.testing.assert_allclose(remod, dft_spread(x), atol=1e-12)
