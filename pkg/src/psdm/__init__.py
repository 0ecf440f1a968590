"""Power-signal dual modulation transceiver and DC-bus energy-packet simulator."""

__version__ = "0.1.0"
