"""Link-level trials: frame trains through the combined test channel."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ImpairmentConfig, apply_impairments, random_gain_schedule
from .dsp import SampleRateConfig, make_pulse_shape, make_rng
from .rx.receiver import Receiver, ReceiverConfig
from .tx import (FRAME_CHIPS, PAYLOAD_BITS, SYNC_CHIPS, EnergyPacketMessage, PowerSignalConfig,
                 assemble_info, encode_payload, inject_power_signal, message_frame)

# the combined-impairment test channel
TEST_PHASE = math.pi / 6
TEST_CFO = 5.0
TEST_SRO = 2.0
TEST_GAIN_PERIOD = 0.175
TEST_GAIN_RANGE = (0.5, 1.25)


def random_messages(n: int, rng: np.random.Generator) -> list:
    return [EnergyPacketMessage(int(rng.integers(0, 256)), int(rng.integers(0, 1 << 16)),
                                int(rng.integers(1, 1 << 16))) for _ in range(n)]


@dataclass
class FrameTrain:
    bus: object            # PassbandStream
    schedule: list         # (t_start, message, code)
    duration: float
    rates: SampleRateConfig


def frame_train(messages, codes, rates: SampleRateConfig | None = None,
                t_first_chips: float = 20.37, gap_chips: int = 0, tail_chips: int = 40,
                v_dc: float = 15.0, mod_index: float = 0.02) -> FrameTrain:
    """Frames back to back (plus ``gap_chips`` of silence) on a clean bus."""
    rates = rates or SampleRateConfig()
    if isinstance(codes, int):
        codes = [codes] * len(messages)
    tc = rates.tc
    pulse = make_pulse_shape(0.5, 8, rates.sps_passband)
    t = t_first_chips * tc
    sched, frames = [], []
    for msg, code in zip(messages, codes):
        sched.append((t, msg, code))
        frames.append((t, message_frame(msg, code)))
        t += (FRAME_CHIPS + gap_chips) * tc
    duration = t + tail_chips * tc
    info = assemble_info(frames, rates, pulse, duration)
    bus = inject_power_signal(info, PowerSignalConfig(v_dc, mod_index))
    return FrameTrain(bus, sched, duration, rates)


def combined_channel(duration: float, snr_db: float, seed: int, phase=TEST_PHASE, cfo=TEST_CFO,
                     sro=TEST_SRO) -> ImpairmentConfig:
    sched = random_gain_schedule(duration, TEST_GAIN_PERIOD, *TEST_GAIN_RANGE,
                                 rng=make_rng(seed, 0))
    return ImpairmentConfig(gain_schedule=sched, phase_offset=phase, freq_offset=cfo,
                            sro_hz=sro, snr_db=snr_db, rng_seed=seed)


def match_frames(schedule, code: int, diag, tc: float) -> list:
    """Pair each sent frame for ``code`` with the nearest receiver event.

    Returns one dict per frame: sent bits, received bits (None if the
    frame was never found), decoded message.
    """
    events = [d for d in diag.detections + diag.failed if not math.isnan(d.sync_time)]
    rows = []
    for t, msg, c in schedule:
        if c != code:
            continue
        expect = t + SYNC_CHIPS * tc
        near = [d for d in events if abs(d.sync_time - expect) < FRAME_CHIPS * tc / 2]
        det = min(near, key=lambda d: abs(d.sync_time - expect), default=None)
        rows.append({"sent": msg, "sent_bits": encode_payload(msg),
                     "bits": None if det is None else det.bits,
                     "message": None if det is None else det.message,
                     "sync_error_chips": None if det is None else (det.sync_time - expect) / tc})
    return rows


def count_bit_errors(rows) -> tuple:
    """(errors, bits); a frame that was never found counts half its bits in error."""
    errs = 0
    for r in rows:
        if r["bits"] is None:
            errs += PAYLOAD_BITS // 2
        else:
            errs += int(np.sum(np.asarray(r["bits"]) != r["sent_bits"]))
    return errs, PAYLOAD_BITS * len(rows)


def link_trial(snr_db: float, seed: int, n_frames: int = 10, code: int = 3, impaired: bool = True,
               gap_chips: int = 0, config: ReceiverConfig | None = None) -> dict:
    rng = make_rng(seed, 2)
    msgs = random_messages(n_frames, rng)
    train = frame_train(msgs, code, gap_chips=gap_chips)
    if impaired:
        ch = combined_channel(train.duration, snr_db, seed)
    else:
        ch = ImpairmentConfig(snr_db=snr_db, rng_seed=seed)
    rx_in = apply_impairments(train.bus, ch, train.rates.chip_rate)
    good, diag = Receiver(code, config).process(rx_in)
    rows = match_frames(train.schedule, code, diag, train.rates.tc)
    errs, bits = count_bit_errors(rows)
    decoded = sum(r["message"] == r["sent"] for r in rows)
    return {"snr_db": snr_db, "seed": seed, "bit_errors": errs, "bits": bits,
            "frames": len(rows), "decoded": decoded, "detections": len(good),
            "rows": rows, "diag": diag}


def bit_xcorr(a, b, max_lag: int | None = None):
    """Normalized cross-correlation of two bit streams in +-1 form.

    Returns (lags, values); value at lag 0 is 1 for identical streams.
    """
    x = 2.0 * np.asarray(a, dtype=float) - 1.0
    y = 2.0 * np.asarray(b, dtype=float) - 1.0
    if len(x) != len(y):
        raise ValueError("bit streams must have equal length")
    n = len(x)
    max_lag = n - 1 if max_lag is None else max_lag
    full = np.correlate(y, x, mode="full") / n
    lags = np.arange(-n + 1, n)
    sel = np.abs(lags) <= max_lag
    return lags[sel], full[sel]
