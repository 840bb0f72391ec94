"""Tests for fdcell.modem: QAM, DFT spreading, subcarrier mapping and CP."""

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
    dft_despread,
    dft_spread,
    map_subcarriers,
    qam_demap_hard,
    qam_map,
    qam_slice,
    strip_cp_and_dft,
    to_time_with_cp,
)
from fdcell.numerics import DimensionError, dft_matrix


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestQam:
    def test_all_zero_bits(self):
        np.testing.assert_allclose(qam_map([0, 0, 0, 0], 16), [(-3 - 3j) / np.sqrt(10)])

    def test_gray_axis_table(self):
        # per axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
        levels = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}
        for (b0, b1), lvl in levels.items():
            s = qam_map([b0, b1, 0, 0], 16)[0] * np.sqrt(10)
            assert s.real == pytest.approx(lvl)

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_unit_energy(self, order):
        assert np.mean(np.abs(constellation(order)) ** 2) == pytest.approx(1.0)

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_neighbours_differ_in_one_bit(self, order):
        pts = constellation(order)
        d_min = np.min(np.abs(pts[:, None] - pts[None, :]) + 10 * np.eye(order))
        k = int(np.log2(order))
        for a, b in itertools.combinations(range(order), 2):
            if abs(pts[a] - pts[b]) < d_min * 1.01:
                assert bin(a ^ b).count("1") == 1

    def test_exhaustive_four_symbol_round_trip(self):
        # every 16-bit pattern, i.e. all 2^16 blocks of four 16-QAM symbols
        words = np.arange(2**16)
        bits = ((words[:, None] >> np.arange(15, -1, -1)) & 1).astype(np.int8).ravel()
        np.testing.assert_array_equal(qam_demap_hard(qam_map(bits, 16), 16), bits)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            qam_map([0, 1, 0], 8)

    def test_bit_count_not_multiple(self):
        with pytest.raises(DimensionError):
            qam_map([0, 1, 0], 16)

    def test_small_perturbation_keeps_bits(self):
        bits = np.random.default_rng(0).integers(0, 2, 400)
        s = qam_map(bits, 16) + 1e-6 * (1 + 1j)
        np.testing.assert_array_equal(qam_demap_hard(s, 16), bits)

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_matches_brute_force_nearest(self, order):
        pts = constellation(order)
        y = np.random.default_rng(order).uniform(-1.6, 1.6, (3000, 2)) @ np.array([1, 1j])
        nearest = np.argmin(np.abs(y[:, None] - pts[None, :]), axis=1)
        np.testing.assert_allclose(qam_slice(y, order), pts[nearest])


class TestSpreading:
    def test_round_trip(self):
        x = crandn(np.random.default_rng(1), 180)
        assert np.max(np.abs(dft_despread(dft_spread(x)) - x)) < 1e-12

    def test_single_tone_to_impulse(self):
        m = 180
        tone = np.exp(2j * np.pi * 7 * np.arange(m) / m) / np.sqrt(m)
        out = dft_spread(tone)
        np.testing.assert_allclose(np.abs(out), np.eye(m)[7], atol=1e-12)

    def test_matrix_oracle(self):
        x = crandn(np.random.default_rng(2), 180)
        np.testing.assert_allclose(dft_spread(x), dft_matrix(180) @ x, atol=1e-10)


class TestAllocation:
    def test_identity_when_full(self):
        x = crandn(np.random.default_rng(3), 16)
        np.testing.assert_array_equal(map_subcarriers(x, Allocation.localized(16, 16)), x)

    def test_localized_180_of_256(self):
        a = Allocation.localized(256, 180)
        d = map_subcarriers(np.ones(180), a)
        assert np.sum(d == 0) == 76
        assert a.indices[0] == 38 and a.indices[-1] == 217

    def test_deallocation_is_transpose(self):
        a = Allocation.interleaved(256, 180)
        mat = a.matrix()
        assert np.all(mat.sum(axis=0) == 1) and np.all(mat.sum(axis=1) <= 1)
        x = crandn(np.random.default_rng(4), 180)
        d = map_subcarriers(x, a)
        np.testing.assert_array_equal(d, mat @ x)
        np.testing.assert_array_equal(demap_subcarriers(d, a), mat.T @ d)
        np.testing.assert_array_equal(demap_subcarriers(d, a), x)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            Allocation(8, (0, 8))

    def test_duplicate_index(self):
        with pytest.raises(ValueError):
            Allocation(8, (1, 1))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            map_subcarriers(np.ones(5), Allocation.localized(8, 4))


class TestCyclicPrefix:
    def test_cp_property(self):
        d = crandn(np.random.default_rng(5), 256)
        s = to_time_with_cp(d, 18, 10)
        assert s.size == 274
        np.testing.assert_array_equal(s[:18], s[-18:])

    def test_round_trip(self):
        d = crandn(np.random.default_rng(6), 256)
        assert np.max(np.abs(strip_cp_and_dft(to_time_with_cp(d, 18), 256, 18) - d)) < 1e-12

    def test_zero_in_zero_out(self):
        np.testing.assert_array_equal(strip_cp_and_dft(np.zeros(274), 256, 18), np.zeros(256))

    def test_short_cp_rejected(self):
        with pytest.raises(ValueError):
            to_time_with_cp(np.ones(256), 8, 10)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            strip_cp_and_dft(np.ones(273), 256, 18)

    def test_circular_channel_is_diagonal(self):
        rng = np.random.default_rng(7)
        d = crandn(rng, 256)
        h = crandn(rng, 10)
        y = apply_channel(to_time_with_cp(d, 18, 10), h)
        np.testing.assert_allclose(strip_cp_and_dft(y, 256, 18), freq_response(h, 256) * d, atol=1e-10)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(16, 64))
    @settings(max_examples=40, deadline=None)
    def test_body_equals_circular_convolution(self, seed, taps, n):
        rng = np.random.default_rng(seed)
        cp = taps - 1
        body = crandn(rng, n)
        h = crandn(rng, taps)
        s = np.concatenate([body[n - cp:], body]) if cp else body
        y = apply_channel(s, h)[cp:]
        circ = np.array([sum(h[b] * body[(t - b) % n] for b in range(taps)) for t in range(n)])
        np.testing.assert_allclose(y, circ, atol=1e-10)


class TestLoopback:
    @given(st.integers(0, 2**32 - 1), st.sampled_from([4, 16, 64]),
           st.sampled_from([(256, 180, "localized"), (256, 180, "interleaved"), (64, 64, "localized"),
                            (128, 12, "interleaved"), (16, 5, "localized")]))
    @settings(max_examples=40, deadline=None)
    def test_noiseless_chain_and_parseval(self, seed, order, dims):
        n, m, style = dims
        alloc = getattr(Allocation, style)(n, m)
        rng = np.random.default_rng(seed)
        k = int(np.log2(order))
        bits = rng.integers(0, 2, m * k)
        x = qam_map(bits, order)
        xbar = dft_spread(x)
        d = map_subcarriers(xbar, alloc)
        s = to_time_with_cp(d, 4)
        back = demap_subcarriers(strip_cp_and_dft(s, n, 4), alloc)
        xhat = dft_despread(back)
        np.testing.assert_array_equal(qam_demap_hard(xhat, order), bits)

        p = np.sum(np.abs(x) ** 2)
        for stage in (xbar, d, s[4:], back, xhat):
            assert abs(np.sum(np.abs(stage) ** 2) - p) < 1e-10 * max(p, 1.0)
