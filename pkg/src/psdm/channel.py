"""Bus-channel impairments: ripple gain steps, carrier offset, clock offset, AWGN.

All operations act on the ripple (``samples - dc``); the DC bus level passes
through untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import hilbert

from .dsp import PassbandStream, make_rng

GAIN_MIN, GAIN_MAX = 0.1, 10.0


@dataclass
class ImpairmentConfig:
    gain_schedule: list = field(default_factory=lambda: [(0.0, 1.0)])
    phase_offset: float = 0.0
    freq_offset: float = 0.0
    sro_hz: float = 0.0
    snr_db: float = math.inf
    rng_seed: int = 0

    def __post_init__(self):
        self.gain_schedule = [(float(t), float(g)) for t, g in self.gain_schedule]
        check_schedule(self.gain_schedule)
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d: dict, duration: float | None = None, seed: int = 0) -> "ImpairmentConfig":
        d = dict(d)
        seed = int(d.pop("rng_seed", seed))
        sched = d.pop("gain_schedule", [(0.0, 1.0)])
        if isinstance(sched, dict):
            rnd = sched.get("random", sched)
            if duration is None:
                raise ValueError("a random gain schedule needs the scenario duration")
            sched = random_gain_schedule(duration, period=rnd.get("period", 0.175),
                                         low=rnd.get("low", 0.5), high=rnd.get("high", 1.25),
                                         rng=make_rng(seed, 0))
        snr = d.pop("snr_db", math.inf)
        snr = math.inf if snr is None else float(snr)
        unknown = set(d) - {"phase_offset", "freq_offset", "sro_hz"}
        if unknown:
            raise ValueError(f"unknown impairment field(s): {sorted(unknown)}")
        return cls(gain_schedule=sched, snr_db=snr, rng_seed=seed, **d)

    def to_dict(self) -> dict:
        return {"gain_schedule": [list(s) for s in self.gain_schedule],
                "phase_offset": self.phase_offset, "freq_offset": self.freq_offset,
                "sro_hz": self.sro_hz,
                "snr_db": None if math.isinf(self.snr_db) and self.snr_db > 0 else self.snr_db,
                "rng_seed": int(self.rng_seed)}


def check_schedule(schedule):
    if not schedule:
        raise ValueError("gain schedule is empty")
    times = [t for t, _ in schedule]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("gain schedule times must be strictly increasing")
    if times[0] > 0:
        raise ValueError("gain schedule must cover t = 0")
    for _, g in schedule:
        if not GAIN_MIN <= g <= GAIN_MAX:
            raise ValueError(f"gain {g} outside [{GAIN_MIN}, {GAIN_MAX}]")


def random_gain_schedule(duration: float, period: float = 0.175, low: float = 0.5,
                         high: float = 1.25, rng: np.random.Generator | None = None):
    """Piecewise-constant gains drawn uniformly from [low, high], changing every ``period`` s."""
    rng = rng if rng is not None else np.random.default_rng()
    n = max(1, int(math.ceil(duration / period)))
    return [(k * period, float(g)) for k, g in enumerate(rng.uniform(low, high, n))]


def gain_at(schedule, t) -> np.ndarray:
    """Gain in force at each time in ``t`` (first entry also covers t < 0)."""
    starts = np.array([s for s, _ in schedule])
    gains = np.array([g for _, g in schedule])
    idx = np.searchsorted(starts, np.asarray(t), side="right") - 1
    return gains[np.clip(idx, 0, len(gains) - 1)]


def apply_gain_profile(signal: PassbandStream, schedule) -> PassbandStream:
    check_schedule(list(schedule))
    return signal.with_ripple(signal.ripple * gain_at(schedule, signal.time))


def apply_cfo(signal: PassbandStream, freq_offset: float, phase_offset: float) -> PassbandStream:
    """Rotate the ripple so that nominal downconversion sees e^{j(2*pi*df*t + dphi)}."""
    if freq_offset == 0 and phase_offset == 0:
        return signal.with_ripple(signal.ripple.copy())
    z = hilbert(signal.ripple)
    rot = np.exp(1j * (2 * np.pi * freq_offset * signal.time + phase_offset))
    return signal.with_ripple(np.real(z * rot))


SRO_TAPS = 32
_KAISER_BETA = 8.0


def _sinc_kernel(frac: np.ndarray) -> np.ndarray:
    """Kaiser-windowed sinc weights for offsets k - frac, k = -15..16."""
    half = SRO_TAPS // 2
    k = np.arange(-half + 1, half + 1)
    t = k[None, :] - frac[:, None]
    w = np.i0(_KAISER_BETA * np.sqrt(np.clip(1 - (t / half) ** 2, 0, None))) / np.i0(_KAISER_BETA)
    return np.sinc(t) * w


def resample_ratio(x: np.ndarray, ratio: float, chunk: int = 1 << 15) -> np.ndarray:
    """Evaluate ``x`` at positions ``n*ratio`` with a 32-tap windowed-sinc kernel."""
    x = np.asarray(x, dtype=float)
    n_out = int(math.floor((len(x) - 1) / ratio)) + 1
    half = SRO_TAPS // 2
    xp = np.concatenate((np.zeros(half), x, np.zeros(half + 1)))
    out = np.empty(n_out)
    k = np.arange(-half + 1, half + 1)
    for s in range(0, n_out, chunk):
        n = np.arange(s, min(s + chunk, n_out))
        pos = n * ratio
        base = np.floor(pos).astype(np.int64)
        frac = pos - base
        idx = base[:, None] + k[None, :] + half
        out[s:s + len(n)] = np.sum(xp[idx] * _sinc_kernel(frac), axis=1)
    return out


def apply_sro(signal: PassbandStream, sro_hz: float, chip_rate: float = 8000.0) -> PassbandStream:
    """Emulate a transmit chip clock running at ``chip_rate + sro_hz``."""
    if abs(sro_hz) >= chip_rate / 100:
        raise ValueError("sampling offset too large")
    if sro_hz == 0:
        return signal.with_ripple(signal.ripple.copy())
    ratio = (chip_rate + sro_hz) / chip_rate
    return signal.with_ripple(resample_ratio(signal.ripple, ratio))


def add_awgn(signal: PassbandStream, snr_db: float, rng_seed=0) -> PassbandStream:
    """Add white Gaussian noise at ``snr_db`` relative to the measured ripple power.

    ``+inf`` returns the input unchanged; ``-inf`` returns noise alone (ripple
    removed) at the ripple's power. ``rng_seed`` may be an int or a Generator.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return signal.with_ripple(signal.ripple.copy())
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(int(rng_seed), 1)
    r = signal.ripple
    p = float(np.mean(r ** 2)) if r.size else 0.0
    if math.isinf(snr_db):
        return signal.with_ripple(rng.normal(0.0, math.sqrt(p), r.shape))
    sigma = math.sqrt(p / 10 ** (snr_db / 10))
    return signal.with_ripple(r + rng.normal(0.0, sigma, r.shape))


def apply_impairments(signal: PassbandStream, cfg: ImpairmentConfig,
                      chip_rate: float = 8000.0) -> PassbandStream:
    """Gain schedule, carrier offset, clock offset, then noise."""
    out = apply_gain_profile(signal, cfg.gain_schedule)
    out = apply_cfo(out, cfg.freq_offset, cfg.phase_offset)
    out = apply_sro(out, cfg.sro_hz, chip_rate)
    return add_awgn(out, cfg.snr_db, make_rng(cfg.rng_seed, 1))
