"""Decision-directed carrier recovery for BPSK chips."""
from __future__ import annotations

import cmath
import math
from collections import deque

import numpy as np

from ..dsp import LoopGains

_TWO_PI = 2.0 * math.pi


def ped(y: complex) -> float:
    """Angle from ``y`` to the nearest BPSK point (0 or pi), in (-pi/2, pi/2].

    A zero input carries no phase; it yields 0 (see :func:`is_degenerate`).
    """
    if y == 0:
        return 0.0
    e = math.atan2(y.imag, y.real) - (math.pi if y.real < 0 else 0.0)
    if e <= -math.pi:
        e += _TWO_PI
    if e <= -math.pi / 2:
        # on the imaginary axis both symbols are equally near; report +pi/2
        e += math.pi
    return e


def is_degenerate(y: complex) -> bool:
    return y == 0


def ped_s_curve(phase_offsets, n_symbols: int = 1000, snr_db: float = math.inf,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Mean detector output against the true carrier offset.

    Random equiprobable +-1 symbols are rotated by each offset; with the
    default infinite SNR the curve is the noise-free S-curve.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    syms = rng.choice([-1.0, 1.0], n_symbols)
    noise = 0.0
    if not math.isinf(snr_db):
        sigma = math.sqrt(0.5 / 10 ** (snr_db / 10))
        noise = rng.normal(0, sigma, n_symbols) + 1j * rng.normal(0, sigma, n_symbols)
    out = []
    for phi in np.atleast_1d(phase_offsets):
        ys = syms * cmath.exp(1j * phi) + noise
        out.append(np.mean([ped(complex(y)) for y in np.atleast_1d(ys)]))
    return np.array(out)


class CarrierLoop:
    """PED -> PI loop filter -> phase accumulator -> rotator.

    Samples weaker than ``min_level`` (zero crossings between chips, guard
    silence) carry no usable phase; they are counted as degenerate and feed
    a zero error. The level assumes AGC-normalized input.
    """

    def __init__(self, gains: LoopGains, lock_window: int = 128, lock_level: float = 0.1,
                 min_level: float = 0.1):
        self.gains = gains
        self.min_level = min_level
        self.integrator = 0.0
        self.phase_acc = 0.0
        self.last_error = 0.0
        self.n_degenerate = 0
        self._abs_err = deque(maxlen=lock_window)
        self._abs_sum = 0.0
        self.lock_level = lock_level

    @property
    def locked(self) -> bool:
        w = self._abs_err
        return len(w) == w.maxlen and self._abs_sum / len(w) < self.lock_level

    def step(self, x: complex) -> complex:
        y = x * cmath.exp(-1j * self.phase_acc)
        if abs(y) <= self.min_level:
            self.n_degenerate += 1
            e = 0.0
        else:
            e = ped(y)
        self.last_error = e
        self.integrator += self.gains.ki * e
        phi = self.phase_acc + self.gains.kp * e + self.integrator
        self.phase_acc = (phi + math.pi) % _TWO_PI - math.pi
        if self.phase_acc == -math.pi:
            self.phase_acc = math.pi
        w = self._abs_err
        if len(w) == w.maxlen:
            self._abs_sum -= w[0]
        w.append(abs(e))
        self._abs_sum += abs(e)
        return y

    def process(self, x):
        """Returns (corrected samples, phase error, phase accumulator before each sample)."""
        x = np.asarray(x, dtype=complex)
        y = np.empty_like(x)
        err = np.empty(len(x))
        acc = np.empty(len(x))
        for k, xk in enumerate(x.tolist()):
            acc[k] = self.phase_acc
            y[k] = self.step(xk)
            err[k] = self.last_error
        return y, err, acc
