"""Schwarzschild background scalars.

All functions take the mass explicitly through a :class:`Background` and accept
scalars or numpy arrays for the radius.  Near the horizon the radius ``r`` is a
poor coordinate in floating point (``r - 2M`` underflows relative to ``2M``), so
the inverse tortoise map also returns the offset ``y = r - 2M`` and the lapse can
be evaluated from it directly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a function."""


class ConvergenceError(ArithmeticError):
    """Raised when an iterative solver fails to reach its tolerance."""


@dataclass(frozen=True)
class Background:
    """Schwarzschild background of mass ``mass`` in geometric units."""

    mass: float = 1.0

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise DomainError(f"mass must be positive and finite, got {self.mass!r}")


class PotentialKind(enum.Enum):
    V0 = "V0"
    V1 = "V1"
    V2 = "V2"
    VP = "VP"
    VQ = "VQ"


class Sector(enum.Enum):
    """Field sector selecting the Morawetz multiplier."""

    H0 = "H0"
    H12 = "H12"


def _check_radius(bg, r, strict=False):
    r = np.asarray(r, dtype=float)
    bad = r <= 2 * bg.mass if strict else r < 2 * bg.mass
    if np.any(bad) or np.any(np.isnan(r)):
        op = ">" if strict else ">="
        raise DomainError(f"radius must satisfy r {op} 2M = {2 * bg.mass}")
    return r


def _out(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def lapse(bg: Background, r):
    """Return ``1 - 2M/r`` for ``r >= 2M``."""
    r = _check_radius(bg, r)
    return _out(1.0 - 2.0 * bg.mass / r)


def lapse_from_offset(bg: Background, y):
    """Lapse evaluated from the offset ``y = r - 2M`` without cancellation."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("offset r - 2M must be non-negative")
    return _out(y / (y + 2.0 * bg.mass))


def tortoise(bg: Background, r):
    """Tortoise coordinate ``r + 2M ln(r - 2M) - 3M - 2M ln M``.

    The constant places the photon sphere ``r = 3M`` at ``r* = 0``.
    """
    r = _check_radius(bg, r, strict=True)
    M = bg.mass
    return _out(r + 2 * M * np.log(r - 2 * M) - 3 * M - 2 * M * math.log(M))


def tortoise_from_offset(bg: Background, y):
    """Tortoise coordinate as a function of ``y = r - 2M > 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("offset r - 2M must be positive")
    M = bg.mass
    return _out(y + 2 * M * np.log(y / M) - M)


def offset_from_tortoise(bg: Background, rstar, tol: float = 1e-12, max_iter: int = 200):
    """Return ``y = r - 2M`` solving ``tortoise(2M + y) = rstar``.

    Solves ``M (e^u + 2u - 1) = rstar`` for ``u = ln(y/M)`` by Newton's method
    safeguarded with bisection.  The function of ``u`` is increasing and convex,
    so Newton started to the right of the root decreases monotonically; the
    bracket only guards against roundoff.  Each element iterates independently,
    which keeps results bit-identical whatever array they are part of.

    Parameters
    ----------
    rstar : float or ndarray
        Tortoise coordinate(s).
    tol : float
        Absolute tolerance on the tortoise residual, scaled by ``max(1, |rstar|/M)``.

    Raises
    ------
    ConvergenceError
        If some element does not converge within ``max_iter`` iterations.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    M = bg.mass
    rs = np.atleast_1d(np.asarray(rstar, dtype=float))
    if not np.all(np.isfinite(rs)):
        raise DomainError("rstar must be finite")
    hi = np.where(rs < 0, (rs + M) / (2 * M), np.log1p(np.maximum(rs, 0.0) / M))
    lo = hi - 1.0
    # walk the lower end of the bracket down until the residual is negative
    for _ in range(max_iter):
        g_lo = M * (np.exp(lo) + 2 * lo - 1) - rs
        if np.all(g_lo < 0):
            break
        lo = np.where(g_lo < 0, lo, lo - 2.0 * (hi - lo))
    u = hi.copy()
    scale = tol * np.maximum(1.0, np.abs(rs) / M)
    done = np.zeros(rs.shape, dtype=bool)
    for _ in range(max_iter):
        eu = np.exp(u)
        g = M * (eu + 2 * u - 1) - rs
        done = np.abs(g) <= scale
        if np.all(done):
            break
        lo = np.where(g < 0, u, lo)
        hi = np.where(g > 0, u, hi)
        step = u - g / (M * (eu + 2))
        inside = (step > lo) & (step < hi)
        new = np.where(inside, step, 0.5 * (lo + hi))
        u = np.where(done, u, new)
    else:
        done = np.abs(M * (np.exp(u) + 2 * u - 1) - rs) <= scale
    if not np.all(done):
        raise ConvergenceError("inverse tortoise map did not converge")
    y = M * np.exp(u)
    return float(y[0]) if np.ndim(rstar) == 0 else y


def radius_from_tortoise(bg: Background, rstar, tol: float = 1e-12):
    """Return ``r > 2M`` with ``tortoise(r) = rstar`` to within ``tol``.

    For very negative ``rstar`` the result rounds to ``2M`` in double precision;
    use :func:`offset_from_tortoise` when ``r - 2M`` itself is needed.
    """
    y = offset_from_tortoise(bg, rstar, tol)
    return _out(2 * bg.mass + np.asarray(y))


def potential(bg: Background, kind: PotentialKind, r):
    """Radial potentials of the mode equations."""
    kind = PotentialKind(kind)
    r = _check_radius(bg, r)
    M = bg.mass
    if kind is PotentialKind.V0:
        val = (1 - 2 * M / r) / r**2
    elif kind is PotentialKind.V1:
        val = (5 - 18 * M / r) / r**2
    elif kind is PotentialKind.V2:
        val = 2 / r**2
    elif kind is PotentialKind.VP:
        val = (1 - 8 * M / r) / r**2
    else:
        val = 4 * (1 - 2 * M / r) / r**2
    return _out(val)


@dataclass(frozen=True)
class MorawetzMultipliers:
    """Morawetz multiplier data at a radius (arrays broadcast with ``r``)."""

    f: object
    df_dr: object
    omegaX: object
    g: object


def morawetz_f(sector: Sector):
    """Multiplier ``f`` as a polynomial in ``x = M/r`` (ascending coefficients)."""
    sector = Sector(sector)
    if sector is Sector.H0:
        # (1 + 3x/2)^2 (1 - 3x)
        return (Fraction(1), Fraction(0), Fraction(-27, 4), Fraction(-27, 4))
    # (1 + 3x + 2x^2)(1 - 3x)
    return (Fraction(1), Fraction(0), Fraction(-7), Fraction(-6))


def morawetz_multipliers(bg: Background, sector: Sector, r) -> MorawetzMultipliers:
    """Multiplier ``f``, ``df/dr``, ``omega^X = lapse (f' + 2f/r)`` and the
    photon-sphere weight ``g = lapse (1 - 3M/r)^2 / r^3``."""
    r = _check_radius(bg, r)
    M = bg.mass
    x = M / r
    c = [float(a) for a in morawetz_f(sector)]
    f = c[0] + x * (c[1] + x * (c[2] + x * c[3]))
    df_dx = c[1] + x * (2 * c[2] + 3 * c[3] * x)
    df_dr = -x / r * df_dx
    lap = 1 - 2 * x
    omega = lap * (df_dr + 2 * f / r)
    g = lap * (1 - 3 * x) ** 2 / r**3
    return MorawetzMultipliers(_out(f), _out(df_dr), _out(omega), _out(g))


class Radial:
    """Radial function ``M^(-k) P(x)`` with ``x = M/r`` and ``P`` a polynomial.

    Closed under sums, products and ``d/dr``, which is all the currents need.
    ``k`` is the length dimension (``r^-2`` is ``Radial(2, (0, 0, 1))``).
    Coefficients may be floats or :class:`fractions.Fraction`, so the same
    algebra serves numerical evaluation and exact certificates.
    """

    __slots__ = ("k", "coeffs")

    def __init__(self, k: int, coeffs: Sequence):
        self.k = int(k)
        coeffs = list(coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        self.coeffs = tuple(coeffs) if coeffs else (0,)

    @classmethod
    def const(cls, c):
        return cls(0, (c,))

    @classmethod
    def inverse_power(cls, n: int):
        """``r^-n`` for ``n >= 0``."""
        return cls(n, [0] * n + [1])

    def __add__(self, other):
        if not isinstance(other, Radial):
            other = Radial.const(other)
        if other.k != self.k:
            raise ValueError("cannot add radial functions of different dimension")
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0] * (n - len(self.coeffs))
        b = list(other.coeffs) + [0] * (n - len(other.coeffs))
        return Radial(self.k, [p + q for p, q in zip(a, b)])

    __radd__ = __add__

    def __neg__(self):
        return Radial(self.k, [-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Radial) else Radial.const(-other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Radial):
            return Radial(self.k, [c * other for c in self.coeffs])
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return Radial(self.k + other.k, out)

    __rmul__ = __mul__

    def dx(self):
        """Polynomial derivative ``P'(x)`` (same ``k``)."""
        return Radial(self.k, [n * c for n, c in enumerate(self.coeffs)][1:] or [0])

    def deriv(self):
        """``d/dr``, using ``dx/dr = -x^2/M``."""
        return Radial(self.k + 1, [0, 0] + [-c for c in self.dx().coeffs])

    def __call__(self, mass, r):
        r = np.asarray(r, dtype=float)
        x = mass / r
        acc = np.zeros_like(x)
        for c in reversed(self.coeffs):
            acc = acc * x + float(c)
        return _out(acc / mass**self.k)

    def __repr__(self):
        return f"Radial(k={self.k}, coeffs={self.coeffs})"


def radial_lapse():
    """``1 - 2M/r`` as a :class:`Radial`."""
    return Radial(0, (1, -2))


def radial_potential(kind: PotentialKind):
    """Potential as a :class:`Radial` with exact coefficients."""
    kind = PotentialKind(kind)
    table = {
        PotentialKind.V0: (0, 0, 1, -2),
        PotentialKind.V1: (0, 0, 5, -18),
        PotentialKind.V2: (0, 0, 2),
        PotentialKind.VP: (0, 0, 1, -8),
        PotentialKind.VQ: (0, 0, 4, -8),
    }
    return Radial(2, [Fraction(c) for c in table[kind]])


def radial_box(w: Radial) -> Radial:
    """Wave operator on a static radial function, ``r^-2 d/dr (r^2 lapse dw/dr)``.

    With ``w = M^-k P(x)``: ``r^2 lapse w' = M^(1-k) A(x)`` where
    ``A = -(1 - 2x) P'``, and the result is ``M^(-k-2) (-x^4 A'(x))``.
    """
    A = radial_lapse() * (-w.dx())
    return Radial(w.k + 2, [0, 0, 0, 0] + [-c for c in A.dx().coeffs])


def radial_morawetz(sector: Sector):
    """Multiplier ``f``, ``omega^X`` and ``g`` as :class:`Radial` objects."""
    f = Radial(0, morawetz_f(sector))
    lap = radial_lapse()
    omega = lap * (f.deriv() + Radial.inverse_power(1) * f * 2)
    g = lap * Radial(0, (1, -3)) * Radial(0, (1, -3)) * Radial.inverse_power(3)
    return f, omega, g
