"""Correlator frame synchronization on the chip stream."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..dsp import SPREADING_FACTOR
from ..tx import CODEWORD_CHIPS, FRAME_CHIPS, SYNC_CHIPS, sync_pattern

DEFAULT_THRESHOLD = 0.5


def correlation_metric(chips, code_index: int) -> np.ndarray:
    """Normalized correlation |c|^2 / (64 * window energy) for every window end.

    Entry n scores the 78 chips ending at chip n (zero for n < 77). A noise-free
    matching sync word scores exactly 1.
    """
    chips = np.asarray(chips, dtype=complex)
    taps = sync_pattern(code_index)
    out = np.zeros(len(chips))
    if len(chips) < SYNC_CHIPS:
        return out
    c = np.correlate(chips, taps.astype(complex), mode="valid")
    e = np.convolve(np.abs(chips) ** 2, np.ones(SYNC_CHIPS), mode="valid")
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(e > 0, np.abs(c) ** 2 / (CODEWORD_CHIPS * e), 0.0)
    out[SYNC_CHIPS - 1:] = np.minimum(rho, 1.0)
    return out


def sharpen(rho):
    """Output nonlinearity applied after normalization (squares the metric again)."""
    return np.asarray(rho) ** 2


@dataclass
class FrameEvent:
    payload_start: int     # chip index of the first payload chip
    metric: float          # normalized metric at the peak, before sharpening
    ambiguous: bool = False


class FrameSync:
    """Streaming correlator with peak picking.

    Runs of above-threshold chips collapse to their maximum. A peak is held
    for ``hold`` chips; a second peak inside that span keeps whichever is
    larger. The survivor is marked ambiguous when the two lie at least one
    sync word apart; closer runs are the word's own sidelobes.
    """

    def __init__(self, code_index: int, threshold: float = DEFAULT_THRESHOLD,
                 hold: int = FRAME_CHIPS - SPREADING_FACTOR):
        self.code_index = code_index
        self.taps = sync_pattern(code_index)
        self.threshold = threshold
        self.hold = hold
        self._buf = deque([0j] * SYNC_CHIPS, maxlen=SYNC_CHIPS)
        self._energy = deque([0.0] * SYNC_CHIPS, maxlen=SYNC_CHIPS)
        self.window_energy = 0.0
        self.index = -1
        self.metric = 0.0
        self._run = None       # (index, metric) of the current above-threshold run
        self._pending = None   # FrameEvent waiting out its hold span
        self._pending_idx = None

    def _raw_metric(self) -> float:
        if self.window_energy <= 1e-300:
            return 0.0
        c = np.dot(self.taps, np.fromiter(self._buf, dtype=complex, count=SYNC_CHIPS))
        return min(abs(c) ** 2 / (CODEWORD_CHIPS * self.window_energy), 1.0)

    def _offer(self, idx: int, metric: float):
        if self._pending is None:
            self._pending = FrameEvent(idx + 1, metric)
            self._pending_idx = idx
            return
        # runs closer than one sync word are sidelobes of the same peak
        rival = abs(idx - self._pending_idx) >= SYNC_CHIPS
        if metric > self._pending.metric:
            self._pending = FrameEvent(idx + 1, metric, self._pending.ambiguous or rival)
            self._pending_idx = idx
        elif rival:
            self._pending.ambiguous = True

    def step(self, chip: complex):
        """Consume one chip; returns a FrameEvent once its hold span has passed."""
        self.index += 1
        p = abs(chip) ** 2
        self.window_energy += p - self._energy[0]
        self._energy.append(p)
        self._buf.append(chip)
        if self.index % 4096 == 0:
            self.window_energy = float(sum(self._energy))
        self.metric = self._raw_metric() if self.index >= SYNC_CHIPS - 1 else 0.0

        if self.metric >= self.threshold:
            if self._run is None or self.metric > self._run[1]:
                self._run = (self.index, self.metric)
        elif self._run is not None:
            self._offer(*self._run)
            self._run = None

        if self._pending is not None and self.index - self._pending_idx >= self.hold:
            ev, self._pending = self._pending, None
            return ev
        return None

    def flush(self):
        """Close any open run and release the held event."""
        if self._run is not None:
            self._offer(*self._run)
            self._run = None
        ev, self._pending = self._pending, None
        return ev

    def process(self, chips):
        """Run over a block; returns (events, metric per chip)."""
        events, metric = [], np.empty(len(chips))
        for k, c in enumerate(np.asarray(chips, dtype=complex).tolist()):
            ev = self.step(c)
            metric[k] = self.metric
            if ev is not None:
                events.append(ev)
        ev = self.flush()
        if ev is not None:
            events.append(ev)
        return events, metric
