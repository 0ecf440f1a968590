"""Shared numeric primitives used by both ends of the link.

Sample-rate bookkeeping, signal containers, Hadamard codes, the SRRC pulse,
FIR filtering with group-delay alignment and PI loop-gain design.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SPREADING_FACTOR = 8


@dataclass(frozen=True)
class SampleRateConfig:
    chip_rate: float = 8000.0
    fc_carrier: float = 16000.0
    sps_passband: int = 8
    sps_timing: int = 2

    def __post_init__(self):
        if self.sps_passband < 2 or int(self.sps_passband) != self.sps_passband:
            raise ValueError("sps_passband must be an integer >= 2")
        if self.sps_timing != 2:
            raise ValueError("the Gardner loop needs exactly 2 samples per chip")
        if self.sps_passband % self.sps_timing:
            raise ValueError("sps_passband must be a multiple of sps_timing")
        if not 0 < self.fc_carrier < self.fs_passband / 2:
            raise ValueError("carrier must lie below fs/2")

    @property
    def fs_passband(self) -> float:
        return self.sps_passband * self.chip_rate

    @property
    def tc(self) -> float:
        return 1.0 / self.chip_rate

    @property
    def decimation(self) -> int:
        return self.sps_passband // self.sps_timing


@dataclass
class PassbandStream:
    """Real bus-voltage samples.

    ``t0`` is the time of sample 0 in seconds and ``dc`` the DC level the
    ripple rides on (the channel scales only ``samples - dc``).
    """

    samples: np.ndarray
    fs: float
    t0: float = 0.0
    dc: float = 0.0

    def __len__(self):
        return len(self.samples)

    @property
    def time(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.fs

    @property
    def ripple(self) -> np.ndarray:
        return self.samples - self.dc

    def with_ripple(self, ripple: np.ndarray) -> "PassbandStream":
        return replace(self, samples=np.asarray(ripple, dtype=float) + self.dc)


@dataclass
class BasebandStream:
    samples: np.ndarray
    fs: float
    t0: float = 0.0

    def __len__(self):
        return len(self.samples)

    @property
    def time(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.fs


def _is_pow2(n) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def hadamard(order: int) -> np.ndarray:
    """Sylvester Hadamard matrix, H_2n = [[H_n, H_n], [H_n, -H_n]], H_1 = [1]."""
    if not _is_pow2(order):
        raise ValueError(f"Hadamard order must be a power of two, got {order!r}")
    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


def spreading_code(load_index: int) -> np.ndarray:
    """Row ``load_index`` (0-based) of H_8 as a float chip sequence."""
    if not 0 <= load_index < SPREADING_FACTOR:
        raise ValueError(f"spreading code index must be in [0, 8), got {load_index}")
    return hadamard(SPREADING_FACTOR)[load_index].astype(float)


@dataclass(frozen=True)
class PulseShape:
    taps: np.ndarray = field(repr=False)
    rolloff: float
    span: int
    sps: int

    @property
    def energy(self) -> float:
        return float(np.sum(self.taps ** 2))

    @property
    def delay(self) -> int:
        """Group delay in samples."""
        return (len(self.taps) - 1) // 2


def make_pulse_shape(rolloff: float = 0.5, span: int = 8, sps: int = 8) -> PulseShape:
    """Unit-energy square-root raised-cosine pulse, ``span*sps + 1`` taps."""
    if not 0 < rolloff <= 1:
        raise ValueError("rolloff must be in (0, 1]")
    if span < 4 or span % 2:
        raise ValueError("span must be an even number of chips >= 4")
    if sps < 2:
        raise ValueError("sps must be >= 2")
    b = rolloff
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    h = np.empty_like(t)
    sing = 1.0 / (4 * b)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1 - b + 4 * b / np.pi
        elif abs(abs(ti) - sing) < 1e-12:
            h[i] = b / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                     + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
        else:
            h[i] = ((np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b)))
                    / (np.pi * ti * (1 - (4 * b * ti) ** 2)))
    # fold to force exact symmetry before normalizing
    h = 0.5 * (h + h[::-1])
    h /= np.sqrt(np.sum(h ** 2))
    return PulseShape(taps=h, rolloff=rolloff, span=span, sps=sps)


def group_delay(taps) -> float:
    """Group delay of a linear-phase FIR, in samples."""
    return (len(taps) - 1) / 2.0


def fir_filter(signal, taps, align: bool = False) -> np.ndarray:
    """Direct-form FIR filtering.

    With ``align=False`` returns the full linear convolution
    (``len(signal) + len(taps) - 1`` samples). With ``align=True`` the
    group delay of the (odd-length, linear-phase) filter is removed so that
    output index n lines up with input index n and the length is unchanged.
    """
    taps = np.asarray(taps)
    if taps.size == 0:
        raise ValueError("taps must be non-empty")
    y = np.convolve(np.asarray(signal), taps)
    if not align:
        return y
    if len(taps) % 2 == 0:
        raise ValueError("align=True needs an odd number of taps")
    d = (len(taps) - 1) // 2
    return y[d:d + len(signal)]


@dataclass(frozen=True)
class LoopGains:
    kp: float
    ki: float
    bn: float
    zeta: float
    k0: float
    kd: float
    tc: float

    @property
    def wn(self) -> float:
        return natural_frequency(self.bn)


def natural_frequency(bn: float) -> float:
    """omega_n = 1.89 * B_n (rad/s)."""
    return 1.89 * bn


def loop_gains(bn: float, zeta: float, k0: float, kd: float, tc: float) -> LoopGains:
    """PI loop-filter gains for a second-order loop.

    ``tc`` is the loop update interval. Both denominators use
    ``4 + 4*zeta*wn*tc + (wn*tc)**2``.
    """
    if k0 * kd == 0:
        raise ValueError("k0*kd must be non-zero")
    if bn < 0 or zeta <= 0 or tc <= 0:
        raise ValueError("need bn >= 0, zeta > 0, tc > 0")
    theta = natural_frequency(bn) * tc
    den = 4.0 + 4.0 * zeta * theta + theta * theta
    kp = 8.0 * zeta * theta / den / (k0 * kd)
    ki = 4.0 * theta * theta / den / (k0 * kd)
    return LoopGains(kp=kp, ki=ki, bn=bn, zeta=zeta, k0=k0, kd=kd, tc=tc)


# Table values for the two loops; tc is filled in by the caller.
CARRIER_LOOP = dict(bn=200.0, zeta=0.7071, k0=1.0, kd=1.0)
TIMING_LOOP = dict(bn=100.0, zeta=0.7071, k0=-1.0, kd=2.55)


def wrap_phase(phi):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(phi) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator keyed by a root seed and a spawn path."""
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))

