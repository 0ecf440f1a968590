"""Full receive chain.

DC block -> downconvert -> matched filter -> decimate to 2 samples/chip ->
AGC -> carrier loop -> timing loop -> frame sync -> despread -> DBPSK.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter, lfilter_zi

from ..dsp import (CARRIER_LOOP, TIMING_LOOP, BasebandStream, PassbandStream, SampleRateConfig,
                   fir_filter, loop_gains, make_pulse_shape, spreading_code)
from ..tx import (PAYLOAD_CHIPS, PAYLOAD_SYMBOLS, SYNC_CHIPS, CrcError, EnergyPacketMessage,
                  decode_payload)
from .agc import Agc
from .carrier import CarrierLoop
from .demod import dbpsk_demod, despread
from .framesync import DEFAULT_THRESHOLD, FrameSync, sharpen
from .timing import TimingLoop

log = logging.getLogger(__name__)


@dataclass
class ReceiverConfig:
    rates: SampleRateConfig = field(default_factory=SampleRateConfig)
    rolloff: float = 0.5
    span: int = 8
    agc_reference: float = 1.0
    agc_alpha: float = 0.01
    carrier_bn: float = CARRIER_LOOP["bn"]
    timing_bn: float = TIMING_LOOP["bn"]
    threshold: float = DEFAULT_THRESHOLD
    dc_pole: float = 0.995

    def carrier_gains(self):
        # the carrier loop runs once per 2-sps sample
        p = dict(CARRIER_LOOP, bn=self.carrier_bn)
        return loop_gains(tc=self.rates.tc / self.rates.sps_timing, **p)

    def timing_gains(self):
        p = dict(TIMING_LOOP, bn=self.timing_bn)
        return loop_gains(tc=self.rates.tc, **p)


def remove_dc(signal: PassbandStream, pole: float = 0.995) -> PassbandStream:
    """One-pole DC blocker, started in steady state on the first sample."""
    x = np.asarray(signal.samples, dtype=float)
    if x.size == 0:
        return PassbandStream(x, signal.fs, signal.t0)
    b, a = [1.0, -1.0], [1.0, -pole]
    y, _ = lfilter(b, a, x, zi=lfilter_zi(b, a) * x[0])
    return PassbandStream(y, signal.fs, signal.t0)


def downconvert(signal: PassbandStream, rates: SampleRateConfig) -> BasebandStream:
    """x(k) = 2 r(k) e^{-j w0 t_k}; the double-frequency term is left for the matched filter."""
    t = signal.time
    x = 2.0 * np.asarray(signal.samples, dtype=float) * np.exp(-2j * np.pi * rates.fc_carrier * t)
    return BasebandStream(x, signal.fs, signal.t0)


def front_end(signal: PassbandStream, cfg: ReceiverConfig) -> BasebandStream:
    """DC block, downconvert, matched filter and decimate to 2 samples/chip."""
    rates = cfg.rates
    pulse = make_pulse_shape(cfg.rolloff, cfg.span, rates.sps_passband)
    bb = downconvert(remove_dc(signal, cfg.dc_pole), rates)
    mf = fir_filter(bb.samples, pulse.taps, align=True)
    d = rates.decimation
    return BasebandStream(mf[::d], bb.fs / d, bb.t0)


@dataclass
class Detection:
    message: EnergyPacketMessage | None
    time: float            # "valid data" instant: centre of the last payload chip
    sync_time: float       # centre of the first payload chip
    frame_start: float     # estimated centre of sync chip 0
    metric: float
    ambiguous: bool
    payload_start: int     # chip index
    bits: np.ndarray = field(repr=False, default=None)
    error: str | None = None

    @property
    def valid(self) -> bool:
        return self.message is not None

    def to_dict(self) -> dict:
        d = {"time_s": self.time, "sync_time_s": self.sync_time,
             "frame_start_s": self.frame_start, "metric": self.metric,
             "ambiguous": self.ambiguous, "payload_start_chip": self.payload_start,
             "valid": self.valid}
        if self.message is not None:
            d["message"] = self.message.to_dict()
        if self.error:
            d["error"] = self.error
        return d


@dataclass
class RxDiagnostics:
    """Per-stage probes.

    Sample-rate arrays (2 samples/chip): ``sample_time``, ``agc_gain``,
    ``phase_err``, ``phase_acc``, ``baseband``, ``agc_out``, ``carrier_out``.
    Chip-rate arrays: ``chip_time``, ``chips``, ``ted_err``, ``mu``,
    ``timing_phase``, ``corr_metric``, ``corr_sharp``.
    """

    sample_time: np.ndarray
    baseband: np.ndarray
    agc_gain: np.ndarray
    agc_out: np.ndarray
    phase_err: np.ndarray
    phase_acc: np.ndarray
    carrier_out: np.ndarray
    chip_time: np.ndarray
    chips: np.ndarray
    ted_err: np.ndarray
    mu: np.ndarray
    timing_phase: np.ndarray
    corr_metric: np.ndarray
    detections: list
    failed: list
    events: list
    carrier_degenerate: int = 0

    @property
    def corr_sharp(self) -> np.ndarray:
        return sharpen(self.corr_metric)

    def sample_probes(self) -> dict:
        return {"agc_gain": self.agc_gain, "phase_err": self.phase_err, "phase_acc": self.phase_acc}

    def chip_probes(self) -> dict:
        return {"ted_err": self.ted_err, "mu": self.mu, "timing_phase": self.timing_phase,
                "corr_metric": self.corr_metric}


class Receiver:
    """Self-synchronizing receiver for one load's spreading code."""

    def __init__(self, load_code: int, config: ReceiverConfig | None = None):
        self.code_index = load_code
        self.code = spreading_code(load_code)
        self.cfg = config or ReceiverConfig()

    def process(self, signal: PassbandStream):
        """Returns (crc-clean detections, diagnostics)."""
        cfg = self.cfg
        bb = front_end(signal, cfg)
        agc = Agc(cfg.agc_reference, cfg.agc_alpha)
        y_agc, gains = agc.process(bb.samples)
        carrier = CarrierLoop(cfg.carrier_gains())
        y_car, perr, pacc = carrier.process(y_agc)
        timing = TimingLoop(cfg.timing_gains()).process(y_car)
        fsync = FrameSync(self.code_index, cfg.threshold)
        events, metric = fsync.process(timing.chips)

        def chip_time(pos):
            return bb.t0 + pos / bb.fs

        good, bad = [], []
        for ev in events:
            p = ev.payload_start
            if p + PAYLOAD_CHIPS > len(timing.chips):
                nan = float("nan")
                bad.append(Detection(None, nan, nan, nan, ev.metric, ev.ambiguous, p,
                                     error="truncated"))
                continue
            syms = despread(timing.chips, self.code, p, PAYLOAD_SYMBOLS)
            bits = dbpsk_demod(syms)
            det = Detection(None, chip_time(timing.position[p + PAYLOAD_CHIPS - 1]),
                            chip_time(timing.position[p]),
                            chip_time(timing.position[p - SYNC_CHIPS]) if p >= SYNC_CHIPS else float("nan"),
                            ev.metric, ev.ambiguous, p, bits=bits)
            try:
                det.message = decode_payload(bits)
                good.append(det)
            except CrcError as exc:
                det.error = str(exc)
                bad.append(det)
                log.info("frame at chip %d failed: %s", p, exc)

        diag = RxDiagnostics(
            sample_time=bb.time, baseband=bb.samples, agc_gain=gains, agc_out=y_agc,
            phase_err=perr, phase_acc=pacc, carrier_out=y_car,
            chip_time=chip_time(timing.position), chips=timing.chips, ted_err=timing.ted_error,
            mu=timing.mu, timing_phase=timing.timing_phase, corr_metric=metric,
            detections=good, failed=bad, events=timing.events,
            carrier_degenerate=carrier.n_degenerate)
        return good, diag


def receive(signal: PassbandStream, load_code: int, config: ReceiverConfig | None = None):
    """Decode every crc-clean frame carrying ``load_code``'s sync word.

    Returns ``[(message, valid_data_time_s, detection), ...]``; the
    detection object links to the frame's probes, and rejected frames are in
    the diagnostics of :meth:`Receiver.process`.
    """
    good, _ = Receiver(load_code, config).process(signal)
    return [(d.message, d.time, d) for d in good]
