"""Despreading and DBPSK decisions."""
from __future__ import annotations

import numpy as np

from ..dsp import SPREADING_FACTOR


def despread(chips, code, start: int = 0, n_symbols: int | None = None) -> np.ndarray:
    """Symbol k = mean over m of chips[start + 8k + m] * code[m]."""
    chips = np.asarray(chips)
    code = np.asarray(code, dtype=float)
    avail = (len(chips) - start) // SPREADING_FACTOR if start >= 0 else 0
    if n_symbols is None:
        n_symbols = avail
    if start < 0 or n_symbols < 1 or n_symbols > avail:
        raise ValueError(f"need {max(n_symbols, 1)} whole symbols from chip {start}, "
                         f"stream holds {max(avail, 0)}")
    block = chips[start:start + n_symbols * SPREADING_FACTOR].reshape(n_symbols, SPREADING_FACTOR)
    return block @ code / SPREADING_FACTOR


def dbpsk_demod(symbols) -> np.ndarray:
    """bit k = 1 where Re{s(k) * conj(s(k-1))} < 0."""
    s = np.asarray(symbols)
    if len(s) < 2:
        raise ValueError("DBPSK demodulation needs at least two symbols")
    return (np.real(s[1:] * np.conj(s[:-1])) < 0).astype(np.int8)
