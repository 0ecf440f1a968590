"""Energy-packet transmitter: payload framing, DBPSK, DSSS and the bus ripple."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (SPREADING_FACTOR, PassbandStream, PulseShape, SampleRateConfig,
                  spreading_code)

PAYLOAD_BITS = 48
CODEWORD_CHIPS = 64
GUARD_CHIPS = 14
SYNC_CHIPS = CODEWORD_CHIPS + GUARD_CHIPS
PAYLOAD_SYMBOLS = PAYLOAD_BITS + 1  # DBPSK reference symbol
PAYLOAD_CHIPS = PAYLOAD_SYMBOLS * SPREADING_FACTOR
FRAME_CHIPS = SYNC_CHIPS + PAYLOAD_CHIPS

CRC8_POLY = 0x07


class CrcError(ValueError):
    """Payload checksum does not match its contents."""


def crc8(data: bytes, poly: int = CRC8_POLY, init: int = 0) -> int:
    crc = init
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


@dataclass(frozen=True)
class EnergyPacketMessage:
    """Dispatch command for one load.

    current_setpoint is in mA, duration in ms.
    """

    dest_address: int
    current_setpoint: int
    duration: int

    def __post_init__(self):
        for name, bits in (("dest_address", 8), ("current_setpoint", 16), ("duration", 16)):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= v < (1 << bits):
                raise ValueError(f"{name}={v!r} does not fit in {bits} unsigned bits")
        if self.duration == 0:
            raise ValueError("a dispatch command needs duration > 0")

    def header_bytes(self) -> bytes:
        return (bytes([self.dest_address])
                + int(self.current_setpoint).to_bytes(2, "big")
                + int(self.duration).to_bytes(2, "big"))

    @property
    def checksum(self) -> int:
        return crc8(self.header_bytes())

    def to_dict(self) -> dict:
        return {"dest_address": int(self.dest_address),
                "current_setpoint": int(self.current_setpoint),
                "duration": int(self.duration),
                "checksum": self.checksum}

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyPacketMessage":
        msg = cls(int(d["dest_address"]), int(d["current_setpoint"]), int(d["duration"]))
        if "checksum" in d and int(d["checksum"]) != msg.checksum:
            raise CrcError("checksum field does not match message contents")
        return msg


def _bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def encode_payload(msg: EnergyPacketMessage) -> np.ndarray:
    """48 bits, MSB first: address | current | duration | crc8."""
    hdr = msg.header_bytes()
    return _bytes_to_bits(hdr + bytes([crc8(hdr)])).astype(np.int8)


def decode_payload(bits) -> EnergyPacketMessage:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (PAYLOAD_BITS,):
        raise ValueError(f"expected {PAYLOAD_BITS} bits, got {bits.shape}")
    raw = np.packbits(bits).tobytes()
    if crc8(raw[:5]) != raw[5]:
        raise CrcError(f"crc mismatch: computed {crc8(raw[:5]):#04x}, received {raw[5]:#04x}")
    duration = int.from_bytes(raw[3:5], "big")
    if duration == 0:
        raise CrcError("zero duration in a crc-clean payload")
    return EnergyPacketMessage(raw[0], int.from_bytes(raw[1:3], "big"), duration)


def dbpsk_encode(bits) -> np.ndarray:
    """Differential encoding with a leading +1 reference; bit 1 flips the phase."""
    bits = np.asarray(bits, dtype=np.int64)
    flips = np.where(bits & 1, -1.0, 1.0)
    return np.concatenate(([1.0], np.cumprod(flips)))


def spread(symbols, code) -> np.ndarray:
    code = np.asarray(code, dtype=float)
    if code.shape != (SPREADING_FACTOR,):
        raise ValueError("spreading code must have 8 chips")
    return np.kron(np.asarray(symbols, dtype=float), code)


def sync_codeword(code_index: int) -> np.ndarray:
    """64-chip sync codeword: H_8 row ``code_index`` with each entry held for 8 chips."""
    return np.kron(spreading_code(code_index), np.ones(SPREADING_FACTOR))


def sync_pattern(code_index: int) -> np.ndarray:
    """Full 78-chip sync word: codeword followed by the silent guard."""
    return np.concatenate((sync_codeword(code_index), np.zeros(GUARD_CHIPS)))


@dataclass(frozen=True)
class ChipFrame:
    sync_word: np.ndarray
    payload_chips: np.ndarray
    dest: int

    @property
    def chips(self) -> np.ndarray:
        return np.concatenate((self.sync_word, self.payload_chips))

    def __len__(self):
        return len(self.sync_word) + len(self.payload_chips)


def build_frame(payload_chips, dest: int) -> ChipFrame:
    payload_chips = np.asarray(payload_chips, dtype=float)
    if payload_chips.ndim != 1 or len(payload_chips) % SPREADING_FACTOR:
        raise ValueError("payload chip count must be a multiple of the spreading factor")
    return ChipFrame(sync_word=sync_pattern(dest), payload_chips=payload_chips, dest=dest)


def message_frame(msg: EnergyPacketMessage, code_index: int) -> ChipFrame:
    code = spreading_code(code_index)
    return build_frame(spread(dbpsk_encode(encode_payload(msg)), code), code_index)


def shape_chips(frame, rates: SampleRateConfig, pulse: PulseShape) -> np.ndarray:
    """Upsample chips to sps_passband and pulse-shape them (real baseband)."""
    chips = frame.chips if isinstance(frame, ChipFrame) else np.asarray(frame, dtype=float)
    if pulse.sps != rates.sps_passband:
        raise ValueError("pulse shape oversampling does not match sps_passband")
    up = np.zeros(len(chips) * rates.sps_passband)
    up[::rates.sps_passband] = chips
    return np.convolve(up, pulse.taps)


def modulate(frame, rates: SampleRateConfig, pulse: PulseShape) -> PassbandStream:
    """Pulse-shape chips and mix them onto the carrier.

    The stream carries ``chips*sps + len(taps) - 1`` samples; sample 0 sits
    at ``t0 = -delay/fs`` so that chip k is centred on ``t = k*Tc``.
    """
    shaped = shape_chips(frame, rates, pulse)
    fs = rates.fs_passband
    t0 = -pulse.delay / fs
    t = t0 + np.arange(len(shaped)) / fs
    return PassbandStream(shaped * np.cos(2 * np.pi * rates.fc_carrier * t), fs=fs, t0=t0)


@dataclass(frozen=True)
class PowerSignalConfig:
    v_dc: float = 15.0
    mod_index: float = 0.02

    def __post_init__(self):
        if not 0 < self.mod_index <= 0.05:
            raise ValueError("mod_index must be in (0, 0.05]")


def inject_power_signal(info: PassbandStream, cfg: PowerSignalConfig) -> PassbandStream:
    """Superimpose the information ripple on the DC bus level."""
    x = np.asarray(info.samples, dtype=float)
    peak = np.max(np.abs(x)) if x.size else 0.0
    ripple = np.zeros_like(x) if peak == 0 else cfg.mod_index * cfg.v_dc * x / peak
    return PassbandStream(cfg.v_dc + ripple, fs=info.fs, t0=info.t0, dc=cfg.v_dc)


def assemble_info(frames, rates: SampleRateConfig, pulse: PulseShape,
                  duration: float) -> PassbandStream:
    """Lay frames onto one stream starting at t = 0.

    ``frames`` is an iterable of ``(t_start, ChipFrame)``; chip 0 of each
    frame is centred on ``t_start`` (rounded to the sample grid). One
    free-running carrier, referenced to t = 0, modulates every frame.
    """
    fs = rates.fs_passband
    n = int(round(duration * fs))
    base = np.zeros(n)
    for t_start, frame in frames:
        wave = shape_chips(frame, rates, pulse)
        i0 = int(round(t_start * fs)) - pulse.delay
        lo, hi = max(i0, 0), min(i0 + len(wave), n)
        if hi > lo:
            base[lo:hi] += wave[lo - i0:hi - i0]
    t = np.arange(n) / fs
    return PassbandStream(base * np.cos(2 * np.pi * rates.fc_carrier * t), fs=fs)
