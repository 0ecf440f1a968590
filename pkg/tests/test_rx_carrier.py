import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psdm.rx.carrier import CarrierLoop, is_degenerate, ped, ped_s_curve
from psdm.rx.receiver import ReceiverConfig

CFG = ReceiverConfig()
FS = CFG.rates.chip_rate * CFG.rates.sps_timing   # carrier loop rate


def symbols(n, seed=0):
    return np.random.default_rng(seed).choice([-1.0, 1.0], n).astype(complex)


def rotated(n, phase=0.0, freq=0.0, seed=0):
    t = np.arange(n) / FS
    return symbols(n, seed) * np.exp(1j * (2 * np.pi * freq * t + phase))


class TestPed:
    @pytest.mark.parametrize("y,e", [
        (1 + 0j, 0.0),
        (cmath.exp(1j * math.pi / 4), math.pi / 4),
        (cmath.exp(2j * math.pi / 3), -math.pi / 3),
        (-1 + 0j, 0.0),
        (1j, math.pi / 2),
    ])
    def test_examples(self, y, e):
        assert ped(y) == pytest.approx(e, abs=1e-12)

    def test_zero_is_degenerate(self):
        assert ped(0j) == 0.0 and is_degenerate(0j)
        assert not is_degenerate(1e-3)

    @given(st.floats(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6), st.floats(0.01, 100))
    def test_nearest_symbol_distance(self, phi, mag):
        assert ped(mag * cmath.exp(1j * phi)) == pytest.approx(phi, abs=1e-9)
        assert ped(-mag * cmath.exp(1j * phi)) == pytest.approx(phi, abs=1e-9)

    @given(st.complex_numbers(min_magnitude=1e-6, max_magnitude=1e6))
    def test_range(self, y):
        assert -math.pi / 2 < ped(y) <= math.pi / 2


class TestSCurve:
    def test_zeros(self):
        s = ped_s_curve([-math.pi, 0.0, math.pi])
        assert np.allclose(s, 0.0, atol=1e-12)

    def test_odd_symmetry(self):
        phi = np.linspace(0.01, math.pi / 2 - 0.01, 30)
        assert np.allclose(ped_s_curve(phi), -ped_s_curve(-phi), atol=1e-12)

    def test_unit_slope(self):
        h = 1e-3
        slope = (ped_s_curve([h])[0] - ped_s_curve([-h])[0]) / (2 * h)
        assert slope == pytest.approx(1.0, rel=0.05)

    def test_noisy_slope(self):
        h = 0.05
        s = ped_s_curve([-h, h], n_symbols=20000, snr_db=20)
        assert (s[1] - s[0]) / (2 * h) == pytest.approx(1.0, rel=0.05)


class TestCarrierLoop:
    def test_gains_at_half_chip(self):
        g = CFG.carrier_gains()
        assert g.kp > 0 and g.ki > 0

    def test_pi_over_6(self):
        n = int(0.1 * FS)
        y, err, acc = CarrierLoop(CFG.carrier_gains()).process(rotated(n, math.pi / 6))
        k25 = int(0.025 * FS)
        assert np.all(np.abs(acc[k25:] - math.pi / 6) < 0.02)
        assert np.max(np.abs(err[k25:])) < 0.05
        assert abs(np.mean(err[k25:])) < 0.01

    def test_five_hz(self):
        n = int(0.5 * FS)
        y, err, _ = CarrierLoop(CFG.carrier_gains()).process(rotated(n, 0.3, 5.0, seed=1))
        tail = y[int(0.05 * FS):]
        assert np.max(np.abs(np.array([ped(v) for v in tail]))) < 0.1

    def test_zero_offset_stays(self):
        loop = CarrierLoop(CFG.carrier_gains())
        _, _, acc = loop.process(rotated(8000))
        assert np.max(np.abs(acc)) < 1e-3
        assert loop.locked

    def test_phase_acc_wrapped(self):
        loop = CarrierLoop(CFG.carrier_gains())
        _, _, acc = loop.process(rotated(int(0.5 * FS), 0.0, 40.0, seed=3))
        assert np.all(acc > -math.pi) and np.all(acc <= math.pi)
        assert np.ptp(acc) > math.pi

    def test_weak_samples_counted(self):
        loop = CarrierLoop(CFG.carrier_gains())
        x = rotated(100, 0.4)
        x[::10] = 0.0
        loop.process(x)
        assert loop.n_degenerate == 10

    @pytest.mark.parametrize("phase", [-3.0, -1.2, 0.0, 1.0, 2.5, math.pi])
    def test_differential_bits_phase_invariant(self, phase):
        from psdm.rx.demod import dbpsk_demod
        s = symbols(2000, seed=7)
        ref = dbpsk_demod(s)
        y, _, _ = CarrierLoop(CFG.carrier_gains()).process(s * cmath.exp(1j * phase))
        k = int(0.03 * FS)
        assert np.array_equal(dbpsk_demod(y[k:]), ref[k:])
