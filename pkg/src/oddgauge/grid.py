"""Uniform tortoise-coordinate grid and fourth-order finite differences."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from oddgauge.geometry import Background, DomainError, offset_from_tortoise


@dataclass(frozen=True)
class GridSpec:
    """Truncated tortoise domain ``[rstar_min, rstar_max]`` with ``n_points`` nodes."""

    rstar_min: float = -40.0
    rstar_max: float = 300.0
    n_points: int = 4096
    cfl: float = 0.5

    def __post_init__(self):
        if not self.rstar_min < 0 < self.rstar_max:
            raise DomainError("the photon sphere r* = 0 must lie inside the domain")
        if int(self.n_points) != self.n_points or self.n_points < 16:
            raise DomainError("n_points must be an integer >= 16")
        if not 0 < self.cfl <= 1:
            raise DomainError("cfl must lie in (0, 1]")

    @property
    def spacing(self):
        return (self.rstar_max - self.rstar_min) / (self.n_points - 1)

    @property
    def dt(self):
        return self.cfl * self.spacing

    def build(self, bg: Background) -> "TortoiseGrid":
        return TortoiseGrid(bg, self)


class TortoiseGrid:
    """Nodes ``r*_i = rstar_min + i h`` with the background scalars sampled on them.

    ``offset`` is ``r - 2M`` computed directly from ``r*``; ``lapse`` uses it so
    that points deep in the near-horizon region keep full relative precision.
    """

    def __init__(self, bg: Background, spec: GridSpec):
        self.bg = bg
        self.spec = spec
        self.h = spec.spacing
        self.rstar = spec.rstar_min + self.h * np.arange(spec.n_points)
        self.offset = offset_from_tortoise(bg, self.rstar)
        self.r = 2 * bg.mass + self.offset
        self.lapse = self.offset / self.r

    @property
    def n(self):
        return self.rstar.size

    @cached_property
    def trapezoid_weights(self):
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def index_of(self, rstar) -> int:
        """Index of the node nearest to ``rstar``."""
        i = int(round((rstar - self.spec.rstar_min) / self.h))
        if not 0 <= i < self.n:
            raise DomainError(f"r* = {rstar} lies outside the grid")
        return i

    def window(self, lo=-np.inf, hi=np.inf):
        """Boolean mask of nodes with ``lo <= r* <= hi``."""
        return (self.rstar >= lo) & (self.rstar <= hi)

    def d1(self, u):
        return d1(u, self.h)

    def d2(self, u):
        return d2(u, self.h)


def d1(u, h):
    """First derivative, fourth order; one-sided at the two end nodes on each side."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    out[..., 2:-2] = (u[..., :-4] - 8 * u[..., 1:-3] + 8 * u[..., 3:-1] - u[..., 4:]) / (12 * h)
    out[..., 0] = (-25 * u[..., 0] + 48 * u[..., 1] - 36 * u[..., 2] + 16 * u[..., 3] - 3 * u[..., 4]) / (12 * h)
    out[..., 1] = (-3 * u[..., 0] - 10 * u[..., 1] + 18 * u[..., 2] - 6 * u[..., 3] + u[..., 4]) / (12 * h)
    out[..., -1] = -(-25 * u[..., -1] + 48 * u[..., -2] - 36 * u[..., -3] + 16 * u[..., -4] - 3 * u[..., -5]) / (12 * h)
    out[..., -2] = -(-3 * u[..., -1] - 10 * u[..., -2] + 18 * u[..., -3] - 6 * u[..., -4] + u[..., -5]) / (12 * h)
    return out


def d2(u, h):
    """Second derivative, fourth order; one-sided six-point stencils at the ends."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    h2 = 12 * h * h
    out[..., 2:-2] = (-u[..., :-4] + 16 * u[..., 1:-3] - 30 * u[..., 2:-2] + 16 * u[..., 3:-1] - u[..., 4:]) / h2
    out[..., 0] = (45 * u[..., 0] - 154 * u[..., 1] + 214 * u[..., 2] - 156 * u[..., 3] + 61 * u[..., 4] - 10 * u[..., 5]) / h2
    out[..., 1] = (10 * u[..., 0] - 15 * u[..., 1] - 4 * u[..., 2] + 14 * u[..., 3] - 6 * u[..., 4] + u[..., 5]) / h2
    out[..., -1] = (45 * u[..., -1] - 154 * u[..., -2] + 214 * u[..., -3] - 156 * u[..., -4] + 61 * u[..., -5] - 10 * u[..., -6]) / h2
    out[..., -2] = (10 * u[..., -1] - 15 * u[..., -2] - 4 * u[..., -3] + 14 * u[..., -4] - 6 * u[..., -5] + u[..., -6]) / h2
    return out
