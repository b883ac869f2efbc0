"""Per-mode radial equations of the odd-parity harmonic-gauge system.

Fields are the mode coefficients of ``H0 = h0 Z``, ``H1 = h1 Z`` and
``H2 = h2 Z2`` sampled on a :class:`~oddgauge.grid.TortoiseGrid`.  Every radial
derivative is taken in ``r*`` (``d/dr = f^-1 d/dr*``) so that the equations stay
regular at the horizon end of the grid:

    d_t^2 h0 = D2 h0 + f [(1 - lam)/r^2 - 2M/r^3 - V0] h0 + (2M/r^3) fP
    d_t^2 h1 = D2 h1 + f [(1 - lam)/r^2 - 2M/r^3 - V1] h1 - f c12 h2
    d_t^2 h2 = D2 h2 - (2f/r) D1 h2 + f [(4 - lam)/r^2 + (2/r^2)(1 - 4M/r) - V2] h2 - (2f/r) h1

with ``c12 = 2 (lam - 2)(1 - 3M/r) / r^3`` and ``fP = f p``.  For ``ell = 1``
the L(-2) coefficients ``h2`` and ``q`` are absent and represented by ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from oddgauge.geometry import Background, DomainError, PotentialKind, potential
from oddgauge.grid import TortoiseGrid
from oddgauge.harmonics import ModeIndex


class ContractError(ValueError):
    """Raised when a state violates its structural invariants."""


def _lam(mode: ModeIndex):
    return mode.ell * (mode.ell + 1)


def _check(name, arr, n):
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (n,):
        raise ContractError(f"{name} has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ModeFields:
    """Coefficients ``(h0, h1, h2)`` and their time derivatives for one mode."""

    mode: ModeIndex
    grid: TortoiseGrid
    h0: np.ndarray
    h1: np.ndarray
    h2: Optional[np.ndarray]
    dth0: np.ndarray
    dth1: np.ndarray
    dth2: Optional[np.ndarray]
    time: float = 0.0

    def __post_init__(self):
        n = self.grid.n
        for name in ("h0", "h1", "dth0", "dth1"):
            object.__setattr__(self, name, _check(name, getattr(self, name), n))
        if self.mode.ell == 1:
            for name in ("h2", "dth2"):
                val = getattr(self, name)
                if val is not None and np.any(np.asarray(val) != 0):
                    raise ContractError("ell = 1 carries no L(-2) field; h2 must be absent")
                object.__setattr__(self, name, None)
        else:
            for name in ("h2", "dth2"):
                val = getattr(self, name)
                if val is None:
                    raise ContractError(f"{name} is required for ell >= 2")
                object.__setattr__(self, name, _check(name, val, n))

    @property
    def names(self):
        return ("h0", "h1") if self.mode.ell == 1 else ("h0", "h1", "h2")

    def fields(self):
        return np.stack([getattr(self, k) for k in self.names])

    def rates(self):
        return np.stack([getattr(self, "dt" + k) for k in self.names])

    @classmethod
    def from_arrays(cls, mode, grid, u, v, time=0.0):
        """Build from stacked field and rate arrays (inverse of ``fields``/``rates``)."""
        if mode.ell == 1:
            return cls(mode, grid, u[0], u[1], None, v[0], v[1], None, time)
        return cls(mode, grid, u[0], u[1], u[2], v[0], v[1], v[2], time)

    def scaled(self, a):
        u, v = self.fields(), self.rates()
        return ModeFields.from_arrays(self.mode, self.grid, a * u, a * v, self.time)


@dataclass(frozen=True)
class RWFields:
    """Regge-Wheeler scalars ``(p, q)`` and their time derivatives."""

    mode: ModeIndex
    grid: TortoiseGrid
    p: np.ndarray
    q: Optional[np.ndarray]
    dtp: np.ndarray
    dtq: Optional[np.ndarray]
    time: float = 0.0

    def __post_init__(self):
        n = self.grid.n
        for name in ("p", "dtp"):
            object.__setattr__(self, name, _check(name, getattr(self, name), n))
        for name in ("q", "dtq"):
            val = getattr(self, name)
            if self.mode.ell == 1:
                if val is not None and np.any(np.asarray(val) != 0):
                    raise ContractError("ell = 1 carries no Q field")
                object.__setattr__(self, name, None)
            else:
                if val is None:
                    raise ContractError(f"{name} is required for ell >= 2")
                object.__setattr__(self, name, _check(name, val, n))

    @property
    def names(self):
        return ("p",) if self.mode.ell == 1 else ("p", "q")

    def fields(self):
        return np.stack([getattr(self, k) for k in self.names])

    def rates(self):
        return np.stack([getattr(self, "dt" + k) for k in self.names])

    @classmethod
    def from_arrays(cls, mode, grid, u, v, time=0.0):
        if mode.ell == 1:
            return cls(mode, grid, u[0], None, v[0], None, time)
        return cls(mode, grid, u[0], u[1], v[0], v[1], time)


@dataclass(frozen=True)
class GeneratorFields:
    """Scalar gauge generator ``x`` of the odd one-form ``X = x Z``."""

    mode: ModeIndex
    grid: TortoiseGrid
    x: np.ndarray
    dtx: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        n = self.grid.n
        for name in ("x", "dtx"):
            object.__setattr__(self, name, _check(name, getattr(self, name), n))

    names = ("x",)

    def fields(self):
        return self.x[None, :]

    def rates(self):
        return self.dtx[None, :]

    @classmethod
    def from_arrays(cls, mode, grid, u, v, time=0.0):
        return cls(mode, grid, u[0], v[0], time)


def _geom(grid, bg):
    return grid.r, grid.lapse, bg.mass


def scaled_P(state: ModeFields, bg: Background):
    """``f p = r d_t h1 - r D1 h0 + 2 f h0``, regular at the horizon."""
    r, f, _ = _geom(state.grid, bg)
    return r * state.dth1 - r * state.grid.d1(state.h0) + 2 * f * state.h0


def derive_P(state: ModeFields, bg: Background):
    """Gauge-invariant Regge-Wheeler scalar ``p = r f^-1 d_t h1 - r d_r h0 + 2 h0``."""
    return scaled_P(state, bg) / state.grid.lapse


def derive_Q(state: ModeFields, bg: Background):
    """Gauge-invariant scalar ``q = h1 + f (d_r h2 - 2 h2 / r)``; ``None`` for ``ell = 1``."""
    if state.mode.ell == 1:
        return None
    r, f, _ = _geom(state.grid, bg)
    return state.h1 + state.grid.d1(state.h2) - 2 * f * state.h2 / r


def scaled_gauge_residual(state: ModeFields, bg: Background):
    """``f C``: the harmonic-gauge residual multiplied by the lapse."""
    r, f, _ = _geom(state.grid, bg)
    out = -state.dth0 + state.grid.d1(state.h1) + 2 * f * state.h1 / r
    if state.h2 is not None:
        out = out + f * (_lam(state.mode) - 2) * state.h2 / r**2
    return out


def gauge_residual(state: ModeFields, bg: Background):
    """``C = -f^-1 d_t h0 + d_r h1 + (2/r) h1 + ((lam - 2)/r^2) h2``."""
    return scaled_gauge_residual(state, bg) / state.grid.lapse


def rhs_coupled(state: ModeFields, bg: Background):
    """Second time derivatives ``(ddth0, ddth1, ddth2)``; ``ddth2`` is ``None`` for ``ell = 1``."""
    g = state.grid
    r, f, M = _geom(g, bg)
    lam = _lam(state.mode)
    base = (1 - lam) / r**2 - 2 * M / r**3
    ddth0 = g.d2(state.h0) + f * (base - potential(bg, PotentialKind.V0, r)) * state.h0
    ddth0 += (2 * M / r**3) * scaled_P(state, bg)
    ddth1 = g.d2(state.h1) + f * (base - potential(bg, PotentialKind.V1, r)) * state.h1
    if state.h2 is None:
        return ddth0, ddth1, None
    c12 = 2 * (lam - 2) * (1 - 3 * M / r) / r**3
    ddth1 -= f * c12 * state.h2
    ang2 = (4 - lam) / r**2 + 2 * (1 - 4 * M / r) / r**2
    ddth2 = (
        g.d2(state.h2)
        - (2 * f / r) * g.d1(state.h2)
        + f * (ang2 - potential(bg, PotentialKind.V2, r)) * state.h2
        - (2 * f / r) * state.h1
    )
    return ddth0, ddth1, ddth2


def rhs_rw(state: RWFields, bg: Background, potential_off: bool = False):
    """Regge-Wheeler right-hand sides ``(ddtp, ddtq)``.

    ``potential_off`` drops every non-principal term, leaving the flat
    ``d_t^2 = d_r*^2`` operator (a test hook for characteristic speed checks).
    """
    g = state.grid
    if potential_off:
        return g.d2(state.p), None if state.q is None else g.d2(state.q)
    r, f, M = _geom(g, bg)
    lam = _lam(state.mode)
    vp = potential(bg, PotentialKind.VP, r)
    ddtp = g.d2(state.p) + f * ((1 - lam) / r**2 - 2 * M / r**3 - vp) * state.p
    if state.q is None:
        return ddtp, None
    vq = potential(bg, PotentialKind.VQ, r)
    ang2 = (4 - lam) / r**2 + 2 * (1 - 4 * M / r) / r**2
    ddtq = g.d2(state.q) - (2 * f / r) * g.d1(state.q) + f * (ang2 - vq) * state.q
    return ddtp, ddtq


def rhs_gauge_generator(state: GeneratorFields, bg: Background):
    """``d_t^2 x = D2 x - f lam x / r^2``: the angular component of ``box X = 0``."""
    g = state.grid
    return g.d2(state.x) - g.lapse * _lam(state.mode) * state.x / g.r**2


def kerr_mode(bg: Background, m: int, grid: TortoiseGrid) -> ModeFields:
    """Stationary linearized-Kerr mode ``h0 = 1/r``, ``h1 = 2M/r^2`` with ``ell = 1``."""
    if abs(m) > 1:
        raise DomainError("kerr_mode requires |m| <= 1")
    r = grid.r
    zero = np.zeros_like(r)
    return ModeFields(ModeIndex(1, m), grid, 1 / r, 2 * bg.mass / r**2, None, zero, zero, None)


def pure_gauge_fields(gen: GeneratorFields, bg: Background, ddtx=None) -> ModeFields:
    """Fields generated by ``L_X g`` for ``X = x Z``.

    ``h0 = d_t x``, ``h1 = D1 x - 2 f x / r`` and ``h2 = -x``.  The second time
    derivative of ``x`` is taken from the generator equation unless supplied.
    """
    g = gen.grid
    r, f = g.r, g.lapse
    if ddtx is None:
        ddtx = rhs_gauge_generator(gen, bg)
    h1 = g.d1(gen.x) - 2 * f * gen.x / r
    dth1 = g.d1(gen.dtx) - 2 * f * gen.dtx / r
    if gen.mode.ell == 1:
        return ModeFields(gen.mode, g, gen.dtx, h1, None, ddtx, dth1, None, gen.time)
    return ModeFields(gen.mode, g, gen.dtx, h1, -gen.x, ddtx, dth1, -gen.dtx, gen.time)


def l1_relation_residuals(state: ModeFields, bg: Background):
    """First-order ``ell = 1`` relations.

    ``res_r = d_r h1 + 2 h1 / r - f^-1 d_t h0`` (the gauge residual) and
    ``res_t = d_t h1 - f (d_r h0 - 2 h0 / r)``, which equals ``+f p / r``.
    """
    if state.mode.ell != 1:
        raise DomainError("l1_relation_residuals requires ell = 1")
    g = state.grid
    r, f = g.r, g.lapse
    res_r = gauge_residual(state, bg)
    res_t = state.dth1 - g.d1(state.h0) + 2 * f * state.h0 / r
    return res_r, res_t


def subtract_fields(a: ModeFields, b: ModeFields, scale=1.0) -> ModeFields:
    """``a - scale * b`` for states on the same grid and mode."""
    if a.mode.ell != b.mode.ell or a.grid is not b.grid:
        raise DomainError("states must share mode and grid")
    return ModeFields.from_arrays(
        a.mode, a.grid, a.fields() - scale * b.fields(), a.rates() - scale * b.rates(), a.time
    )


def with_time(state, time):
    return replace(state, time=time)
