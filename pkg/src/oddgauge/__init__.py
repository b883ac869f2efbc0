"""Odd-parity linearized gravity on Schwarzschild in harmonic gauge.

Mode-decomposed time-domain evolution, Regge-Wheeler diagnostics, energy
currents and exact-arithmetic positivity certificates.
"""

from oddgauge.geometry import Background, PotentialKind, lapse, tortoise, radius_from_tortoise
from oddgauge.harmonics import ModeIndex, ModeWeights, weights

__all__ = [
    "Background",
    "PotentialKind",
    "lapse",
    "tortoise",
    "radius_from_tortoise",
    "ModeIndex",
    "ModeWeights",
    "weights",
]

__version__ = "0.1.0"
