"""Chip-clock recovery: cubic Farrow interpolator, Gardner TED, modulo-1 control."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..dsp import LoopGains

# b_l(i): rows i = -2, -1, 0, 1; columns l = 0..3
FARROW_COEFFS = np.array([
    [0.0, -1 / 6, 0.0, 1 / 6],
    [0.0, 1.0, 0.5, -0.5],
    [1.0, -0.5, -1.0, 0.5],
    [0.0, -1 / 3, 0.5, -1 / 6],
])


def farrow_interpolate(window, mu: float):
    """Cubic interpolant at fractional delay ``mu`` past the base sample.

    ``window`` is a delay line ordered i = -2, -1, 0, 1, newest sample first:
    ``[x(m+2), x(m+1), x(m), x(m-1)]``. Returns x(m + mu).
    """
    v = np.asarray(window) @ FARROW_COEFFS
    return ((v[3] * mu + v[2]) * mu + v[1]) * mu + v[0]


def _farrow4(w0, w1, w2, w3, mu):
    # scalar fast path of farrow_interpolate for the per-sample loop
    v0 = w2
    v1 = -w0 / 6 + w1 - 0.5 * w2 - w3 / 3
    v2 = 0.5 * w1 - w2 + 0.5 * w3
    v3 = (w0 - w3) / 6 + 0.5 * (w2 - w1)
    return ((v3 * mu + v2) * mu + v1) * mu + v0


def gardner_ted(y_prev, y_half, y_curr) -> float:
    """Re{conj(y_half) * (y_prev - y_curr)}: positive when sampling early."""
    return float((np.conj(y_half) * (y_prev - y_curr)).real)


class TimingControl:
    """Decrementing modulo-1 counter that raises a strobe on underflow.

    The counter drops by ``1/N + nu`` per sample. On underflow the
    fractional interval becomes ``N * counter`` (value before the wrap),
    otherwise it is held.
    """

    def __init__(self, n: int = 2, counter: float = 0.0):
        self.n = n
        self.counter = counter
        self.mu = 0.0
        self.strobe = False

    def step(self, nu: float = 0.0):
        before = self.counter
        c = before - (1.0 / self.n + nu)
        self.strobe = c < 0.0
        if self.strobe:
            self.mu = min(max(self.n * before, 0.0), np.nextafter(1.0, 0.0))
            c %= 1.0
        self.counter = c % 1.0 if c >= 1.0 else c
        return self.strobe, self.mu


@dataclass
class TimingResult:
    chips: np.ndarray
    position: np.ndarray   # fractional input-sample index of each chip
    ted_error: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    events: list = field(default_factory=list)

    @property
    def timing_phase(self) -> np.ndarray:
        """Fractional chip timing of each strobe against the local chip clock, in chips."""
        return np.mod(self.position / 2.0, 1.0)


class TimingLoop:
    """Interpolator + Gardner TED + PI filter + modulo-1 control at 2 samples/chip."""

    N = 2

    def __init__(self, gains: LoopGains, los_chips: int = 100, lock_window: int = 64,
                 nu_limit: float = 0.05, ted_average: int = 8):
        self.gains = gains
        # Mean TED output over one spreading period. A constant symbol repeats
        # its 8-chip code, so the TED sees a periodic pattern whose self-noise
        # this smooths; rows with few transitions (0, 2) jitter most.
        if ted_average < 1:
            raise ValueError("ted_average must be >= 1")
        self._ted_hist = deque([0.0] * ted_average, maxlen=ted_average)
        self._ted_sum = 0.0
        # keeps the counter step positive when a burst arrives before the AGC settles
        self.nu_limit = nu_limit
        self.control = TimingControl(self.N)
        self.integrator = 0.0
        self.nu = 0.0
        self.last_error = 0.0
        self._line = deque([0j] * 5, maxlen=5)
        self._prev = 0j
        self._n = -1
        self._quiet = 0
        self._los_samples = los_chips * self.N
        self._lost = False
        self._errs = deque(maxlen=lock_window)
        self._acq_var = None
        self.events = []

    @property
    def locked(self) -> bool:
        if self._acq_var is None or len(self._errs) < self._errs.maxlen:
            return False
        return float(np.var(self._errs)) < 0.1 * self._acq_var

    def step(self, x: complex):
        """Push one input sample; returns (chip, position) on a strobe, else None."""
        self._n += 1
        line = self._line
        line.appendleft(x)
        if abs(x) < 1e-9:
            self._quiet += 1
            if self._quiet > self._los_samples and not self._lost:
                self._lost = True
                self.events.append(("loss_of_signal", self._n))
        else:
            if self._lost:
                self.events.append(("signal_restored", self._n))
            self._quiet = 0
            self._lost = False

        strobe, mu = self.control.step(self.nu)
        if not strobe:
            return None
        y = _farrow4(line[0], line[1], line[2], line[3], mu)
        y_half = _farrow4(line[1], line[2], line[3], line[4], mu)
        e = (y_half.conjugate() * (self._prev - y)).real
        self._prev = y
        self.last_error = e
        hist = self._ted_hist
        self._ted_sum += e - hist[0]
        hist.append(e)
        ef = self._ted_sum / hist.maxlen
        lim = self.nu_limit
        self.integrator = min(max(self.integrator + self.gains.ki * ef, -lim), lim)
        self.nu = min(max(self.gains.kp * ef + self.integrator, -lim), lim)
        self._errs.append(e)
        if self._acq_var is None and len(self._errs) == self._errs.maxlen:
            self._acq_var = float(np.var(self._errs))
        return y, self._n - 2 + mu

    def process(self, x) -> TimingResult:
        chips, pos, err, mus, nus = [], [], [], [], []
        for xk in np.asarray(x, dtype=complex).tolist():
            out = self.step(xk)
            if out is not None:
                chips.append(out[0])
                pos.append(out[1])
                err.append(self.last_error)
                mus.append(self.control.mu)
                nus.append(self.nu)
        return TimingResult(np.array(chips, dtype=complex), np.array(pos), np.array(err),
                            np.array(mus), np.array(nus), list(self.events))


def timing_recovery(stream, gains: LoopGains) -> TimingResult:
    """Recover one chip-rate sample per chip from a 2 samples/chip baseband stream."""
    samples = getattr(stream, "samples", stream)
    return TimingLoop(gains).process(samples)
