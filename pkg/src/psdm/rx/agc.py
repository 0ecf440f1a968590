"""LMS level adaptation in the baseband, ahead of any synchronization."""
from __future__ import annotations

import numpy as np


class Agc:
    """x(k+1) = x(k)*(1 - alpha*|u(k)|) + alpha*R,  y(k) = x(k)*u(k).

    ``x`` is the divide-by factor; at a constant input magnitude c it
    settles to R/c with time constant 1/(alpha*c) samples. It is clamped to
    ``gain_limits`` so long silent stretches cannot run it away.
    """

    def __init__(self, reference=1.0, alpha=0.01, gain=1.0, gain_limits=(1e-6, 1e6)):
        if reference <= 0 or alpha <= 0 or gain <= 0:
            raise ValueError("reference, alpha and initial gain must be positive")
        self.r = float(reference)
        self.alpha = float(alpha)
        self.lo, self.hi = gain_limits
        self.x = min(max(float(gain), self.lo), self.hi)

    def step(self, u: complex) -> complex:
        y = self.x * u
        x = self.x * (1.0 - self.alpha * abs(u)) + self.alpha * self.r
        self.x = min(max(x, self.lo), self.hi)
        return y

    def process(self, u):
        """Run over a block; returns (output, gain applied to each sample)."""
        u = np.asarray(u, dtype=complex)
        y = np.empty_like(u)
        gains = np.empty(len(u))
        for k, uk in enumerate(u.tolist()):
            gains[k] = self.x
            y[k] = self.step(uk)
        return y, gains
