"""Tests for fdcell.impairments: PA model, SI composition and cancellation modes."""

import numpy as np
import pytest

from fdcell.impairments import (
    GHORBANI_AM,
    GHORBANI_PM,
    PaModel,
    SiChannel,
    SicMode,
    add_self_interference,
    draw_si_channel,
    pa_apply,
    pa_split,
    si_components,
    thermal_noise_power,
    tx_noise,
)
from fdcell.numerics import DimensionError, RngStream

LINEAR_PA = PaModel((1.0, 1.0, 0.0, 0.0), (0.0, 1.0, 0.0, 0.0), 0.0)
SOFT_PA = PaModel((1.0, 1.0, 0.05, 0.0), (0.05, 2.0, 0.0, 0.0), 30.0)
MODES = [SicMode.NONE, SicMode.LINEAR, SicMode.NL_NO_CTC, SicMode.FULL]


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def radiated(seed, chains=4, n=274, pa=PaModel()):
    rng = RngStream(seed)
    s = crandn(np.random.default_rng(seed), chains, n)
    lin, nl = pa_split(s, pa)
    return lin, nl, tx_noise(rng, s, -30.0)


class TestPa:
    def test_linear_parameters_identity(self):
        s = crandn(np.random.default_rng(0), 64)
        np.testing.assert_allclose(pa_apply(s, LINEAR_PA), s, atol=1e-12)

    def test_small_signal_is_linear(self):
        s = crandn(np.random.default_rng(1), 4096)
        y = pa_apply(s, SOFT_PA)
        assert np.linalg.norm(y - s) / np.linalg.norm(s) < 1e-3

    def test_curves_match_formula(self):
        pa = PaModel()
        r = np.array([0.1, 0.5, 1.0])
        x1, x2, x3, x4 = GHORBANI_AM
        y1, y2, y3, y4 = GHORBANI_PM
        np.testing.assert_allclose(pa.am_am(r), x1 * r**x2 / (1 + x3 * r**x2) + x4 * r)
        np.testing.assert_allclose(pa.am_pm(r), y1 * r**y2 / (1 + y3 * r**y2) + y4 * r)

    def test_operating_point(self):
        pa = PaModel(ibo_db=20.0)
        grid = np.linspace(0.01, 5, 100000)
        assert pa.saturation_input() == pytest.approx(grid[np.argmax(pa.am_am(grid))], abs=1e-3)
        assert pa.operating_rms == pytest.approx(pa.saturation_input() / 10)

    def test_distortion_uncorrelated_with_input(self):
        s = crandn(np.random.default_rng(2), 2, 8192)
        lin, d = pa_split(s, PaModel())
        for row in range(2):
            assert abs(np.vdot(s[row], d[row])) < 1e-9 * np.vdot(s[row], s[row]).real
        np.testing.assert_array_equal(lin, s)

    def test_two_tone_intermodulation(self):
        n = 1024
        t = np.arange(n)
        s = np.exp(2j * np.pi * 100 * t / n) + np.exp(2j * np.pi * 110 * t / n)
        im3 = [90, 120]
        spec = np.abs(np.fft.fft(pa_apply(s, PaModel()))) ** 2
        ref = np.abs(np.fft.fft(pa_apply(s, LINEAR_PA))) ** 2
        assert np.all(10 * np.log10(spec[im3] / spec[100]) > -60)
        assert np.all(ref[im3] < 1e-20 * ref[100])

    def test_zero_rows(self):
        s = np.zeros((2, 16), dtype=complex)
        s[1] = 1.0
        out = pa_apply(s, PaModel())
        assert not np.any(out[0]) and np.all(np.isfinite(out))

    def test_no_pa(self):
        lin, d = pa_split(np.ones(4), None)
        np.testing.assert_array_equal(d, 0)

    def test_non_monotone_rejected(self):
        with pytest.raises(ValueError):
            PaModel((-3.0, 2.0, 1.0, 1.0), (0.0, 1.0, 0.0, 0.0), 0.0)


class TestTxNoise:
    def test_evm_level(self):
        s = np.full((2, 100000), 2.0 + 0j)
        n = tx_noise(RngStream(3), s, -30.0)
        assert 10 * np.log10(np.mean(np.abs(n) ** 2) / 4.0) == pytest.approx(-30.0, abs=0.1)

    def test_disabled(self):
        np.testing.assert_array_equal(tx_noise(RngStream(3), np.ones(8), None), 0)


class TestThermalNoise:
    def test_room_temperature_3mhz(self):
        p = thermal_noise_power(3e6, 290.0)
        assert p == pytest.approx(1.2012e-14, rel=1e-4)
        assert 10 * np.log10(p / 1e-3) == pytest.approx(-109.2, abs=0.05)

    def test_zero_bandwidth(self):
        assert thermal_noise_power(0.0) == 0.0

    def test_linear_in_bandwidth(self):
        assert thermal_noise_power(2e6) == pytest.approx(2 * thermal_noise_power(1e6))

    def test_invalid(self):
        with pytest.raises(ValueError):
            thermal_noise_power(-1.0)
        with pytest.raises(ValueError):
            thermal_noise_power(1.0, 0.0)


class TestSiChannel:
    def test_neighbour_cross_talk_only(self):
        si = draw_si_channel(RngStream(4), 4, 2, -10.0)
        assert not np.any(si.taps[0, 2]) and not np.any(si.taps[0, 3])
        assert np.any(si.taps[0, 1])

    def test_self_dominates_on_average(self):
        p_self, p_cross = [], []
        for seed in range(200):
            t = draw_si_channel(RngStream(seed), 4, 2, -10.0).taps
            p_self.append(np.sum(np.abs(t[0, 0]) ** 2))
            p_cross.append(np.sum(np.abs(t[0, 1]) ** 2))
        assert 10 * np.log10(np.mean(p_cross) / np.mean(p_self)) == pytest.approx(-10.0, abs=1.0)

    def test_positive_cross_talk_rejected(self):
        with pytest.raises(ValueError):
            draw_si_channel(RngStream(0), 4, 2, 3.0)

    def test_shape_checked(self):
        with pytest.raises(DimensionError):
            SiChannel(np.zeros((3, 4, 2)))

    def test_components_sum_to_total(self):
        si = draw_si_channel(RngStream(5), 4, 2, -10.0)
        lin, nl, tn = radiated(6)
        comps = si_components(si, lin, nl, tn, 1.0)
        total = si_components(si, lin + nl + tn, np.zeros_like(lin), np.zeros_like(lin), 1.0)
        whole = total[("linear", "self")] + total[("linear", "cross")]
        np.testing.assert_allclose(sum(comps.values()), whole, atol=1e-12)


class TestAddSelfInterference:
    def _run(self, mode, seed=7, n0=1e-3, signal_power=1.0):
        si = draw_si_channel(RngStream(seed), 4, 2, -10.0, 60.0)
        lin, nl, tn = radiated(seed)
        rx = np.zeros_like(lin)
        return add_self_interference(rx, lin, nl, tn, si, mode, n0, signal_power, return_residual=True)[1]

    def test_linear_self_talk_level(self):
        si = draw_si_channel(RngStream(8), 4, 2, -10.0, 60.0)
        lin, nl, tn = radiated(8)
        self_gain = np.mean(np.sum(np.abs(si.taps[np.arange(4), np.arange(4)]) ** 2, axis=-1))
        scale = np.sqrt(1e6 * 1.0 / (np.mean(np.abs(lin) ** 2) * self_gain))
        comps = si_components(si, lin, nl, tn, scale)
        p = np.mean(np.abs(comps[("linear", "self")]) ** 2)
        assert 10 * np.log10(p) == pytest.approx(60.0, abs=0.5)

    def test_full_mode_reaches_floor(self):
        n0 = 1e-3
        res = self._run(SicMode.FULL, n0=n0)
        assert np.mean(np.abs(res) ** 2) <= n0 * (1 + 1e-9)
        assert np.mean(np.abs(res) ** 2) == pytest.approx(n0 * 10 ** (-20 / 10), rel=1e-6)

    def test_none_mode_swamps_signal(self):
        res = self._run(SicMode.NONE, n0=1e-3)
        sinr_db = 10 * np.log10(1.0 / (np.mean(np.abs(res) ** 2) + 1e-3))
        assert sinr_db < -40.0

    def test_mode_ordering(self):
        for seed in range(5):
            powers = [np.mean(np.abs(self._run(m, seed)) ** 2) for m in MODES]
            assert all(b <= a for a, b in zip(powers, powers[1:]))

    def test_cancelled_sets_nest(self):
        sets = [m.cancelled for m in MODES]
        assert all(a <= b for a, b in zip(sets, sets[1:]))
        assert len(SicMode.FULL.cancelled) == 6 and not SicMode.NONE.cancelled

    def test_silent_transmitter(self):
        si = draw_si_channel(RngStream(9), 4, 2)
        rx = crandn(np.random.default_rng(9), 4, 32)
        z = np.zeros_like(rx)
        for mode in MODES:
            np.testing.assert_array_equal(add_self_interference(rx, z, z, z, si, mode, 0.1, 1.0), rx)

    def test_shape_mismatch(self):
        si = draw_si_channel(RngStream(10), 4, 2)
        lin, nl, tn = radiated(10)
        with pytest.raises(DimensionError):
            add_self_interference(np.zeros((4, 10)), lin, nl, tn, si, SicMode.FULL, 0.1, 1.0)
