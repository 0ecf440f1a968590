import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psdm.channel import (ImpairmentConfig, add_awgn, apply_cfo, apply_gain_profile,
                          apply_impairments, apply_sro, gain_at, random_gain_schedule,
                          resample_ratio)
from psdm.dsp import PassbandStream, SampleRateConfig, fir_filter, make_pulse_shape, make_rng
from psdm.tx import modulate

RATES = SampleRateConfig()
PULSE = make_pulse_shape()
FS = RATES.fs_passband


def tone(n, f=RATES.fc_carrier, dc=15.0, amp=0.3):
    t = np.arange(n) / FS
    return PassbandStream(dc + amp * np.cos(2 * np.pi * f * t), fs=FS, dc=dc)


def chip_signal(n_chips, seed=0, dc=15.0):
    chips = make_rng(seed, 9).choice([-1.0, 1.0], n_chips)
    s = modulate(chips, RATES, PULSE)
    return PassbandStream(dc + 0.3 * s.samples, fs=FS, t0=s.t0, dc=dc), chips


def baseband(sig):
    bb = 2 * sig.ripple * np.exp(-2j * np.pi * RATES.fc_carrier * sig.time)
    return fir_filter(bb, PULSE.taps, align=True)


class TestGain:
    def test_unit_gain_identity(self):
        s = tone(1000)
        assert np.array_equal(apply_gain_profile(s, [(0, 1.0)]).samples, s.samples)

    def test_half_gain(self):
        s = tone(1000)
        out = apply_gain_profile(s, [(0, 0.5)])
        assert np.allclose(out.ripple, 0.5 * s.ripple)
        assert out.dc == 15.0
        assert np.mean(out.samples) == pytest.approx(np.mean(s.samples), abs=1e-3)

    def test_random_schedule_boundaries(self):
        sched = random_gain_schedule(1.0, rng=make_rng(3, 0))
        assert [t for t, _ in sched] == pytest.approx([0.175 * k for k in range(6)])
        assert all(0.5 <= g <= 1.25 for _, g in sched)

    def test_piecewise_lookup(self):
        sched = [(0.0, 1.0), (0.175, 2.0), (0.35, 0.5)]
        assert gain_at(sched, [0.0, 0.17, 0.175, 0.3, 0.36, 9.0]).tolist() == [1, 1, 2, 2, 0.5, 0.5]

    @pytest.mark.parametrize("sched", [[], [(0.1, 1.0)], [(0, 1.0), (0, 2.0)], [(0, 0.05)],
                                       [(0, 11.0)], [(0, 1.0), (0.2, 1.0), (0.1, 1.0)]])
    def test_bad_schedules(self, sched):
        with pytest.raises(ValueError):
            apply_gain_profile(tone(10), sched)


class TestCfo:
    def test_identity(self):
        s = tone(100)
        assert np.array_equal(apply_cfo(s, 0, 0).samples, s.samples)

    def test_constant_phase(self):
        sig, _ = chip_signal(400)
        ref = baseband(sig)
        rot = baseband(apply_cfo(sig, 0.0, math.pi / 6))
        mid = slice(400, len(ref) - 400)
        strong = np.abs(ref[mid]) > 0.2
        ang = np.angle(rot[mid][strong] / ref[mid][strong])
        assert np.max(np.abs(ang - math.pi / 6)) < 5e-3
        assert np.mean(ang) == pytest.approx(math.pi / 6, abs=5e-4)

    def test_five_hz_cycle(self):
        # constant chips -> pure carrier; the rotation should turn once in 200 ms
        n = int(0.25 * FS)
        s = PassbandStream(15 + 0.3 * np.cos(2 * np.pi * RATES.fc_carrier * np.arange(n) / FS),
                           fs=FS, dc=15.0)
        out = apply_cfo(s, 5.0, 0.0)
        bb = 2 * out.ripple * np.exp(-2j * np.pi * RATES.fc_carrier * out.time)
        z = fir_filter(bb, PULSE.taps, align=True)
        k0, k1 = int(0.02 * FS), int(0.22 * FS)
        turn = np.unwrap(np.angle(z[k0:k1 + 1]))
        assert turn[-1] - turn[0] == pytest.approx(2 * math.pi, rel=1e-3)

    @given(st.floats(-50, 50), st.floats(-math.pi, math.pi))
    @settings(max_examples=20)
    def test_power_preserved(self, df, dphi):
        sig, _ = chip_signal(300, seed=1)
        out = apply_cfo(sig, df, dphi)
        assert np.mean(out.ripple ** 2) == pytest.approx(np.mean(sig.ripple ** 2), rel=1e-6)


class TestSro:
    def test_zero_is_identity(self):
        s = tone(500)
        assert np.max(np.abs(apply_sro(s, 0.0).samples - s.samples)) < 1e-9

    def test_rejects_large_offset(self):
        with pytest.raises(ValueError):
            apply_sro(tone(10), 80.0)

    def test_interpolates_band_limited_signal(self):
        n = 4000
        x = np.cos(2 * np.pi * 0.23 * np.arange(n))
        r = 1.00025
        y = resample_ratio(x, r)
        ref = np.cos(2 * np.pi * 0.23 * np.arange(len(y)) * r)
        core = slice(40, len(y) - 40)
        # better than -60 dB
        assert np.max(np.abs(y[core] - ref[core])) < 1e-3

    def test_two_chips_per_second(self):
        # cross-correlation lag between clean and offset streams grows by 2 chips in 1 s
        sig, _ = chip_signal(8200, seed=4)
        out = apply_sro(sig, 2.0)
        a, b = baseband(sig), baseband(out)

        def lag_at(t):
            i = int(t * FS)
            w = 4000
            seg = a[i:i + w]
            best, arg = -1, 0
            for lag in range(-40, 41):
                v = abs(np.vdot(seg, b[i - lag:i - lag + w]))
                if v > best:
                    best, arg = v, lag
            return arg

        drift = lag_at(0.95) - lag_at(0.05)
        assert drift / RATES.sps_passband == pytest.approx(0.9 * 2.0, abs=0.25)

    def test_inverse_ratio(self):
        sig, _ = chip_signal(800, seed=5)
        r = 1.00025
        back = resample_ratio(resample_ratio(sig.ripple, r), 1 / r)
        n = min(len(back), len(sig.ripple))
        core = slice(200, n - 200)
        err = np.max(np.abs(back[core] - sig.ripple[core]))
        assert err < 1e-3 * np.max(np.abs(sig.ripple))


class TestAwgn:
    def test_inf_identity(self):
        s = tone(100)
        assert np.array_equal(add_awgn(s, math.inf).samples, s.samples)

    @pytest.mark.parametrize("snr", [0.0, 10.0, 20.0, -5.0])
    def test_measured_snr(self, snr):
        s = tone(100_000)
        out = add_awgn(s, snr, 7)
        noise = out.ripple - s.ripple
        got = 10 * np.log10(np.mean(s.ripple ** 2) / np.mean(noise ** 2))
        assert abs(got - snr) < 0.2

    def test_deterministic(self):
        s = tone(1000)
        assert np.array_equal(add_awgn(s, 10, 3).samples, add_awgn(s, 10, 3).samples)
        assert not np.array_equal(add_awgn(s, 10, 3).samples, add_awgn(s, 10, 4).samples)

    def test_minus_inf_noise_only(self):
        s = tone(50_000)
        out = add_awgn(s, -math.inf, 1)
        assert abs(np.corrcoef(out.ripple, s.ripple)[0, 1]) < 0.02
        assert np.mean(out.ripple ** 2) == pytest.approx(np.mean(s.ripple ** 2), rel=0.03)


class TestStack:
    def cfg(self, snr=math.inf):
        return ImpairmentConfig(gain_schedule=[(0, 0.7), (0.01, 1.2)], phase_offset=0.5,
                                freq_offset=5.0, sro_hz=2.0, snr_db=snr, rng_seed=9)

    @given(st.floats(0.1, 10.0))
    @settings(max_examples=10)
    def test_commutes_with_scaling(self, a):
        sig, _ = chip_signal(200, seed=2)
        scaled = sig.with_ripple(a * sig.ripple)
        lhs = apply_impairments(scaled, self.cfg()).ripple
        rhs = a * apply_impairments(sig, self.cfg()).ripple
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * a

    def test_deterministic(self):
        sig, _ = chip_signal(200, seed=2)
        a = apply_impairments(sig, self.cfg(15.0)).samples
        b = apply_impairments(sig, self.cfg(15.0)).samples
        assert np.array_equal(a, b)

    def test_dc_untouched(self):
        sig, _ = chip_signal(200, seed=2)
        assert apply_impairments(sig, self.cfg(15.0)).dc == 15.0

    def test_from_dict_random_schedule(self):
        d = {"gain_schedule": {"random": {"period": 0.175, "low": 0.5, "high": 1.25}},
             "phase_offset": 0.5, "snr_db": None}
        a = ImpairmentConfig.from_dict(d, duration=0.4, seed=3)
        b = ImpairmentConfig.from_dict(d, duration=0.4, seed=3)
        assert a.gain_schedule == b.gain_schedule and len(a.gain_schedule) == 3
        assert math.isinf(a.snr_db)

    def test_from_dict_unknown_field(self):
        with pytest.raises(ValueError):
            ImpairmentConfig.from_dict({"bogus": 1})
