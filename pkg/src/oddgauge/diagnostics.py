"""Energies, current densities, divergence and flux checks, fits and ``ell = 1`` extraction.

Every mode coefficient ``u`` of an ``L(-k)`` field is reduced to the scalar
``phi = u / r^k``.  Bundle derivatives in ``(t, r)`` become ordinary derivatives
of ``phi``, the pointwise norm picks up the angular constant ``n_k`` and the
angular Laplacian acts as ``-Lambda / r^2`` with ``Lambda = grad_k / n_k``.  Each
field then obeys the scalar equation ``box phi - V phi = G`` where ``G`` collects
the coupling to the other fields.

A current ``J`` satisfies, after angular integration,

    d_t (f r^2 J^t) + d_r* (r^2 J^r) = f r^2 (K + Err)

where ``K`` is the field-only bulk term and ``Err`` the part proportional to
``G``.  :func:`eval_current` returns ``J^t``, ``J^r``, ``K`` and ``Err`` with the
``n_k`` weights applied; :func:`divergence_check` compares the left side, by
finite differences, against the closed-form right side.
"""

from __future__ import annotations

import enum
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from oddgauge.geometry import (
    Background,
    DomainError,
    PotentialKind,
    Radial,
    Sector,
    radial_box,
    radial_morawetz,
    radial_potential,
    tortoise,
)
from oddgauge.harmonics import weights
from oddgauge.modesystem import (
    GeneratorFields,
    ModeFields,
    RWFields,
    derive_P,
    kerr_mode,
    rhs_rw,
    subtract_fields,
)

DEFAULT_DELTA = 1 / 16


def derivative_count(delta: float = DEFAULT_DELTA) -> int:
    """``m(delta) = ceil(-log2 delta) + 1``."""
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    return math.ceil(-math.log2(delta)) + 1


class FieldId(enum.Enum):
    H0 = "H0"
    H1H2 = "H1H2"
    P = "P"
    Q = "Q"
    X = "X"


@dataclass(frozen=True)
class EnergyRecord:
    time: float
    p_exponent: float
    value: float
    degenerate: bool
    field_id: FieldId


class ScalarField(NamedTuple):
    """One reduced scalar ``phi = u / r^k`` with its derivatives and source."""

    name: str
    k: int
    norm: float  # n_k
    Lam: float  # angular eigenvalue of phi
    potential: Radial
    phi: np.ndarray
    phi_t: np.ndarray
    phi_s: np.ndarray  # d phi / d r*
    source: np.ndarray  # G


def _reduce(name, k, norm, Lam, kind, u, ut, grid, source):
    r, f = grid.r, grid.lapse
    rk = r**k
    phi = u / rk
    phi_s = grid.d1(u) / rk - k * f * u / (rk * r)
    return ScalarField(name, k, norm, Lam, radial_potential(kind), phi, ut / rk, phi_s, source)


def scalarize(state, bg: Background, field_id=None) -> List[ScalarField]:
    """Reduced scalars of ``state`` for the requested field group."""
    grid = state.grid
    r = grid.r
    M = bg.mass
    w = weights(state.mode)
    lam = w.lam
    zero = np.zeros(grid.n)
    if isinstance(state, ModeFields):
        fid = FieldId(field_id or FieldId.H0)
        if fid is FieldId.H0:
            g0 = -2 * M * derive_P(state, bg) / r**4
            return [_reduce("h0", 1, w.n1, w.angular1, PotentialKind.V0, state.h0, state.dth0, grid, g0)]
        if fid is not FieldId.H1H2:
            raise DomainError(f"field {fid.value} is not part of ModeFields")
        if state.h2 is None:
            return [_reduce("h1", 1, w.n1, w.angular1, PotentialKind.V1, state.h1, state.dth1, grid, zero)]
        g1 = 2 * (lam - 2) * (1 - 3 * M / r) * state.h2 / r**4
        g2 = 2 * state.h1 / r**3
        return [
            _reduce("h1", 1, w.n1, w.angular1, PotentialKind.V1, state.h1, state.dth1, grid, g1),
            _reduce("h2", 2, w.n2, w.angular2, PotentialKind.V2, state.h2, state.dth2, grid, g2),
        ]
    if isinstance(state, RWFields):
        fid = FieldId(field_id or FieldId.P)
        if fid is FieldId.P:
            return [_reduce("p", 1, w.n1, w.angular1, PotentialKind.VP, state.p, state.dtp, grid, zero)]
        if fid is FieldId.Q and state.q is not None:
            return [_reduce("q", 2, w.n2, w.angular2, PotentialKind.VQ, state.q, state.dtq, grid, zero)]
        raise DomainError(f"field {fid.value} is not available in this RWFields state")
    if isinstance(state, GeneratorFields):
        return [_reduce("x", 1, w.n1, w.angular1, PotentialKind.V0, state.x, state.dtx, grid, zero)]
    raise DomainError(f"cannot scalarize {type(state).__name__}")


# --- energies ---------------------------------------------------------------


def energy_density(r, f, mass, sf: ScalarField, p_exponent, degenerate=False, d_rho=None):
    """``e^p`` of one scalar; ``d_rho`` is ``d phi / d rho`` (defaults to the t-slice ``phi_s / f``)."""
    if d_rho is None:
        d_rho = sf.phi_s / f
    wL = (1 - 3 * mass / r) ** 2 if degenerate else 1.0
    dL = sf.phi_t + sf.phi_s
    e = wL * (dL**2 + sf.Lam * sf.phi**2 / r**2) + (d_rho**2 + sf.phi**2) / r**2
    return sf.norm * r**p_exponent * e


def mode_energy(state, bg: Background, p_exponent: float, degenerate: bool = False, field_id=None, window=None):
    """``E^p`` (or ``E^{p,deg}``) on the ``t = const`` slice, measure ``f^(1/2) r^2 dr*``."""
    if not 0 <= p_exponent <= 2:
        raise DomainError("p_exponent must lie in [0, 2]")
    grid = state.grid
    r, f = grid.r, grid.lapse
    fields = scalarize(state, bg, field_id)
    dens = sum(energy_density(r, f, bg.mass, sf, p_exponent, degenerate) for sf in fields)
    wts = grid.trapezoid_weights * np.sqrt(f) * r**2
    if window is not None:
        wts = wts * grid.window(*window)
    fid = FieldId(field_id) if field_id else (FieldId.H0 if isinstance(state, ModeFields) else FieldId.P)
    return EnergyRecord(state.time, float(p_exponent), float(np.sum(dens * wts)), bool(degenerate), fid)


def smooth_step(x):
    """``C^inf`` step rising from 0 at ``x <= 0`` to 1 at ``x >= 1``, and its derivative."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1 / np.where(x > 0, x, 1)), 0.0)
        b = np.where(x < 1, np.exp(-1 / np.where(x < 1, 1 - x, 1)), 0.0)
        s = a / (a + b)
        ds = np.where((x > 0) & (x < 1), s * (1 - s) * (1 / x**2 + 1 / (1 - x) ** 2), 0.0)
    return s, ds


def cutoff(r, r_in, r_out):
    """``chi = 1`` for ``r <= r_in``, ``0`` for ``r >= r_out``; returns ``(chi, dchi/dr)``."""
    s, ds = smooth_step((np.asarray(r) - r_in) / (r_out - r_in))
    return 1 - s, -ds / (r_out - r_in)


class PenetratingSlices:
    """Slices ``t = tau + h(r)`` that cross the future horizon.

    ``dh/dr = -chi (1/f - 1)`` with ``chi`` the cutoff of :func:`cutoff`, so the
    slices coincide with ``t = tau`` for ``r >= r_out`` and with ingoing
    ``v - r = const`` surfaces near the horizon.  Energies are evaluated by
    interpolating the energy density of stored ``t``-slice snapshots in time.
    """

    def __init__(self, grid, bg: Background, r_in=2.1, r_out=2.9, window=(-30.0, None)):
        M = bg.mass
        self.grid, self.bg = grid, bg
        chi, _ = cutoff(grid.r, r_in * M, r_out * M)
        self.chi = chi
        lo, hi = window
        hi = np.inf if hi is None else hi
        self.mask = grid.window(lo, hi)
        # dh/dr* = -chi (1 - f); integrate from the right where h = 0
        rate = chi * (1 - grid.lapse)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * grid.h)])
        self.h = cum[-1] - cum
        self.times = []
        self.densities = []

    def density(self, state, p_exponent, degenerate=False, field_ids=(None,)):
        g, bg = self.grid, self.bg
        r, f = g.r, g.lapse
        out = np.zeros(g.n)
        for fid in field_ids:
            for sf in scalarize(state, bg, fid):
                d_rho = (sf.phi_s - self.chi * (1 - f) * sf.phi_t) / f
                out += energy_density(r, f, bg.mass, sf, p_exponent, degenerate, d_rho)
        # r^2 sqrt(f (1 - chi^2 (1 - f)^2)) per dr*, factored to avoid cancellation
        c = self.chi * (1 - f)
        measure = r**2 * np.sqrt(f * ((1 - self.chi) + self.chi * f) * (1 + c))
        return out * measure

    def observe(self, state, p_exponent, degenerate=False, field_ids=(None,)):
        self.times.append(state.time)
        self.densities.append(self.density(state, p_exponent, degenerate, field_ids)[self.mask])

    def energy(self, tau):
        """Energy on the slice ``tau`` by 4-point Lagrange interpolation in time."""
        t = np.asarray(self.times)
        D = np.asarray(self.densities)
        dt = t[1] - t[0]
        target = tau + self.h[self.mask]
        j = np.floor((target - t[0]) / dt).astype(int) - 1
        if np.any(j < 0) or np.any(j + 3 >= t.size):
            raise DomainError(f"slice tau = {tau} needs data outside the stored time range")
        s = (target - t[j]) / dt  # in [1, 2)
        cols = np.arange(target.size)
        L = [-(s - 1) * (s - 2) * (s - 3) / 6, s * (s - 2) * (s - 3) / 2, -s * (s - 1) * (s - 3) / 2, s * (s - 1) * (s - 2) / 6]
        val = sum(L[m] * D[j + m, cols] for m in range(4))
        w = self.grid.trapezoid_weights[self.mask]
        return float(np.sum(val * w))


# --- currents ---------------------------------------------------------------


class CurrentTag(enum.Enum):
    T = "T"
    REDSHIFT = "redshift"
    MORAWETZ = "morawetz"
    RP = "rp"


@dataclass(frozen=True)
class CurrentKind:
    tag: CurrentTag
    sector: Sector = Sector.H0
    p_exponent: float = 1.0
    epsilon1: float = 0.0
    s: float = 1.0
    sigma: float = 1.0
    r_in: float = 2.1
    r_out: float = 2.9
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        object.__setattr__(self, "tag", CurrentTag(self.tag))
        object.__setattr__(self, "sector", Sector(self.sector))
        if self.tag is CurrentTag.RP and not self.delta <= self.p_exponent <= 2 - self.delta:
            raise DomainError("rp current requires p in [delta, 2 - delta]")


@dataclass
class CurrentFields:
    """Angular-integrated current data on one slice (arrays over the grid)."""

    jt: np.ndarray
    jr: np.ndarray
    bulk: np.ndarray
    err: np.ndarray
    normal: np.ndarray


def _default_field(state, kind: CurrentKind):
    if isinstance(state, ModeFields):
        return FieldId.H0 if kind.sector is Sector.H0 else FieldId.H1H2
    return None


def _tensor_parts(sf, f, r):
    ang = sf.Lam * sf.phi**2 / r**2
    grad = (sf.phi_s**2 - sf.phi_t**2) / f + ang
    Ttt = sf.phi_t**2 + 0.5 * f * grad
    Ttr = sf.phi_t * sf.phi_s / f
    Trr = sf.phi_s**2 / f**2 - 0.5 * grad / f
    return ang, grad, Ttt, Ttr, Trr


def _vector_current(sf, M, r, f, Yt, Yr, dYt, dYr):
    """Current ``T.Y - V phi^2 Y / 2`` for a static multiplier ``Y = Yt d_t + Yr d_r``."""
    V = sf.potential(M, r)
    dV = sf.potential.deriv()(M, r)
    df = 2 * M / r**2
    ang, grad, Ttt, Ttr, Trr = _tensor_parts(sf, f, r)
    jt = -(Ttt * Yt + Ttr * Yr) / f - 0.5 * V * sf.phi**2 * Yt
    jr = f * (Ttr * Yt + Trr * Yr) - 0.5 * V * sf.phi**2 * Yr
    deform = 0.5 * (-Ttt * Yr * df / f**2 + 2 * Ttr * f * dYt + f**2 * Trr * (-Yr * df / f**2 + 2 * dYr / f))
    bulk = deform + (Yr / r) * (ang - grad) - 0.5 * Yr * dV * sf.phi**2 - 0.5 * V * sf.phi**2 * (dYr + 2 * Yr / r)
    err = (Yt * sf.phi_t + Yr * sf.phi_s / f) * sf.source
    return jt, jr, bulk, err


def _morawetz_current(sf, M, r, f, sector, eps1):
    fX, omega, g = radial_morawetz(sector)
    # epsilon1 is given in units of M^2 so that omega - 2 epsilon1 g is homogeneous
    g = Radial(g.k - 2, g.coeffs)
    w = omega - g * (2 * eps1)
    V = sf.potential(M, r)
    dV = sf.potential.deriv()(M, r)
    fx = fX(M, r)
    phi, pt, ps = sf.phi, sf.phi_t, sf.phi_s
    ang = sf.Lam * phi**2 / r**2
    grad = (ps**2 - pt**2) / f + ang
    wv = w(M, r)
    dw = w.deriv()(M, r)
    jt = -(fx * pt * ps + 0.5 * wv * phi * pt) / f
    jr = fx * (0.5 * (pt**2 + ps**2) - 0.5 * f * ang) - 0.5 * V * phi**2 * f * fx + 0.5 * wv * phi * ps - 0.25 * f * dw * phi**2
    gv = g(M, r)
    bulk = (
        fX.deriv()(M, r) * ps**2
        + (fx / r) * (1 - 3 * M / r) * ang
        + (-0.25 * radial_box(omega)(M, r) - 0.5 * fx * f * dV - (M / r**2) * fx * V) * phi**2
    )
    if eps1:
        bulk = bulk - eps1 * gv * grad - eps1 * gv * V * phi**2 + 0.5 * eps1 * radial_box(g)(M, r) * phi**2
    err = (fx * ps + 0.5 * wv * phi) * sf.source
    return jt, jr, bulk, err


def _rp_current(sf, M, r, f, p):
    V = sf.potential(M, r)
    dV = sf.potential.deriv()(M, r)
    psi = r * sf.phi
    psi_t = r * sf.phi_t
    psi_s = r * sf.phi_s + f * sf.phi
    dL = psi_t + psi_s
    ang = sf.Lam * psi**2 / r**2
    rp2 = r ** (p - 2)
    jt = -(rp2 / f**2) * (0.5 * dL**2 + 0.5 * f * ang) - M * r ** (p - 5) * psi**2 / f - 0.5 * rp2 * V * psi**2 / f
    jr = rp2 * (0.5 * dL**2 / f - 0.5 * ang) - M * r ** (p - 5) * psi**2 - 0.5 * rp2 * V * psi**2
    df = 2 * M / r**2
    d_weight = 0.5 * ((p - 2) * r ** (p - 3) * V / f + rp2 * dV / f - rp2 * V * df / f**2)
    bulk = (
        r ** (p - 3) * (p * f / 2 - M / r) * dL**2 / f**2
        + (1 - p / 2) * r ** (p - 3) * ang
        + ((3 - p) * M * r ** (p - 6) - r ** (p - 3) * (1 - M / r) * V / f - f * d_weight) * psi**2
    )
    err = (rp2 / f) * dL * r * sf.source
    return jt, jr, bulk, err


def eval_current(kind: CurrentKind, state, bg: Background, field_id=None) -> CurrentFields:
    """Current components, bulk term ``K`` and source term ``Err`` summed over the sector."""
    if not isinstance(kind, CurrentKind):
        raise DomainError(f"unknown current kind {kind!r}")
    grid = state.grid
    r, f, M = grid.r, grid.lapse, bg.mass
    fields = scalarize(state, bg, field_id or _default_field(state, kind))
    tot = [np.zeros(grid.n) for _ in range(4)]
    for sf in fields:
        if kind.tag is CurrentTag.T:
            one, zero = np.ones(grid.n), np.zeros(grid.n)
            parts = _vector_current(sf, M, r, f, one, zero, zero, zero)
        elif kind.tag is CurrentTag.REDSHIFT:
            chi, dchi = cutoff(r, kind.r_in * M, kind.r_out * M)
            y = grid.offset
            yv, yR = 0.5 * kind.s * y, -2 - kind.sigma * y
            df = 2 * M / r**2
            Yt = chi * (yv - yR / f)
            Yr = chi * yR
            dYt = dchi * (yv - yR / f) + chi * (0.5 * kind.s + kind.sigma / f + yR * df / f**2)
            dYr = dchi * yR - chi * kind.sigma
            parts = _vector_current(sf, M, r, f, Yt, Yr, dYt, dYr)
        elif kind.tag is CurrentTag.MORAWETZ:
            parts = _morawetz_current(sf, M, r, f, kind.sector, kind.epsilon1)
        else:
            parts = _rp_current(sf, M, r, f, kind.p_exponent)
        for acc, part in zip(tot, parts):
            acc += sf.norm * part
    jt, jr, bulk, err = tot
    return CurrentFields(jt, jr, bulk, err, -np.sqrt(f) * jt)


def morawetz_zeroth_order(bg: Background, sector, kind: PotentialKind, r, angular=0):
    """Coefficient of ``phi^2`` in the Morawetz bulk term (``epsilon1 = 0``).

    With ``angular = Lambda`` the angular term ``(f/r)(1 - 3M/r) Lambda / r^2``
    is added, i.e. the bound obtained from the Poincare inequality on the sphere.
    """
    return morawetz_zeroth_order_radial(sector, kind, angular)(bg.mass, r)


def morawetz_zeroth_order_radial(sector, kind: PotentialKind, angular=0) -> Radial:
    """Exact :class:`Radial` form of :func:`morawetz_zeroth_order`."""
    fX, omega, _ = radial_morawetz(sector)
    V = radial_potential(kind)
    lap = Radial(0, (1, -2))
    coeff = -radial_box(omega) * Fraction(1, 4) - fX * lap * V.deriv() * Fraction(1, 2) - Radial(1, (0, 0, 1)) * fX * V
    if angular:
        coeff = coeff + fX * Radial(0, (1, -3)) * Radial.inverse_power(3) * angular
    return coeff


# --- checks on time series -------------------------------------------------


def _uniform_dt(states):
    t = np.array([s.time for s in states])
    d = np.diff(t)
    if d.size == 0 or np.any(np.abs(d - d[0]) > 1e-9 * max(1.0, abs(d[0]))):
        raise DomainError("snapshots must be equally spaced in time")
    return d[0]


def _d5(a, dt):
    """First time derivative at the middle of five equally spaced samples."""
    return (a[0] - 8 * a[1] + 8 * a[3] - a[4]) / (12 * dt)


def _dd5(a, dt):
    return (-a[0] + 16 * a[1] - 30 * a[2] + 16 * a[3] - a[4]) / (12 * dt * dt)


class DivergenceResult(NamedTuple):
    residual: float  # max relative residual over the centres checked
    absolute: float
    scale: float


def divergence_check(kind: CurrentKind, states: Sequence, bg: Background, window=None, field_id=None, centers=None):
    """Relative residual of the discrete divergence identity.

    Five equally spaced snapshots around each centre give ``d_t``; ``d_r*`` uses
    the grid stencil.  The residual is normalised by the largest of the three
    terms of the identity over the window.
    """
    if len(states) < 5:
        raise DomainError("divergence_check needs at least 5 snapshots")
    dt = _uniform_dt(states)
    grid = states[0].grid
    r, f = grid.r, grid.lapse
    mask = np.ones(grid.n, bool) if window is None else grid.window(*window)
    mask[:2] = mask[-2:] = False
    cur = [eval_current(kind, s, bg, field_id) for s in states]
    if centers is None:
        centers = range(2, len(states) - 2)
    worst, worst_abs, worst_scale = 0.0, 0.0, 0.0
    for c in centers:
        A = np.stack([f * r**2 * cur[c + j].jt for j in range(-2, 3)])
        dA = _d5(A, dt)
        dB = grid.d1(r**2 * cur[c].jr)
        rhs = f * r**2 * (cur[c].bulk + cur[c].err)
        res = (dA + dB - rhs)[mask]
        scale = max(np.abs(dA[mask]).max(), np.abs(dB[mask]).max(), np.abs(rhs[mask]).max())
        if scale == 0:
            continue
        a = float(np.abs(res).max())
        if a / scale > worst:
            worst, worst_abs, worst_scale = a / scale, a, scale
    return DivergenceResult(worst, worst_abs, worst_scale)


def _simpson_weights(n, dt):
    """Fourth-order composite weights for ``n >= 4`` equally spaced samples.

    Simpson's rule is used throughout; an odd number of intervals ends with a
    three-interval Simpson 3/8 panel.
    """
    if n < 4:
        raise DomainError("quadrature needs at least 4 samples")
    w = np.zeros(n)
    m = n - 1 if (n - 1) % 2 == 0 else n - 4
    w[: m + 1 : 2] += 2 / 3
    w[1:m:2] += 4 / 3
    w[0] -= 1 / 3
    w[m] -= 1 / 3
    if m < n - 1:
        w[m : m + 4] += np.array([3, 9, 9, 3]) / 8
    return w * dt


class FluxBalance(NamedTuple):
    defect: float  # relative to E(t1), with the source work included
    defect_without_source: float
    energy_start: float
    energy_end: float


def flux_balance(states: Sequence, bg: Background, window, field_id=None, kind: Optional[CurrentKind] = None):
    """Energy balance of the T current over ``window`` between the first and last snapshot.

    ``E(t2) - E(t1) - int [r^2 J^r] dt + int int f r^2 Err dr* dt``; the
    defect is reported with and without the source term, relative to ``E(t1)``.
    """
    kind = kind or CurrentKind(CurrentTag.T, Sector.H0 if field_id in (None, FieldId.H0, "H0") else Sector.H12)
    if len(states) < 4:
        raise DomainError("flux_balance needs at least 4 snapshots")
    dt = _uniform_dt(states)
    grid = states[0].grid
    r, f = grid.r, grid.lapse
    lo, hi = window
    ia, ib = grid.index_of(lo), grid.index_of(hi)
    sl = slice(ia, ib + 1)
    w = _simpson_weights(ib - ia + 1, grid.h)
    energy, flux, work = [], [], []
    for s in states:
        cur = eval_current(kind, s, bg, field_id)
        energy.append(float(np.sum(-f[sl] * r[sl] ** 2 * cur.jt[sl] * w)))
        B = r**2 * cur.jr
        flux.append(B[ib] - B[ia])
        work.append(float(np.sum(f[sl] * r[sl] ** 2 * cur.err[sl] * w)))
    tw = _simpson_weights(len(states), dt)
    e1, e2 = energy[0], energy[-1]
    base = e2 - e1 - float(np.dot(tw, flux))
    with_src = base + float(np.dot(tw, work))
    denom = abs(e1) if e1 else 1.0
    return FluxBalance(abs(with_src) / denom, abs(base) / denom, e1, e2)


def rw_consistency(states: Sequence, bg: Background, window=None):
    """``L^2`` norms of the Regge-Wheeler residual of derived ``(p, q)`` per centre time.

    Returns an array of shape ``(n_centres, 2)`` (the ``q`` column is zero for
    ``ell = 1``) and the centre times.
    """
    if len(states) < 5:
        raise DomainError("rw_consistency needs at least 5 snapshots")
    from oddgauge.modesystem import derive_Q

    dt = _uniform_dt(states)
    grid = states[0].grid
    mask = np.ones(grid.n, bool) if window is None else grid.window(*window)
    w = grid.trapezoid_weights * mask
    P = np.stack([derive_P(s, bg) for s in states])
    ell1 = states[0].mode.ell == 1
    Q = None if ell1 else np.stack([derive_Q(s, bg) for s in states])
    out, times = [], []
    for c in range(2, len(states) - 2):
        ddp = _dd5(P[c - 2 : c + 3], dt)
        if ell1:
            rw = RWFields(states[c].mode, grid, P[c], None, np.zeros(grid.n), None)
            a, _ = rhs_rw(rw, bg)
            out.append((math.sqrt(np.sum(w * (ddp - a) ** 2)), 0.0))
        else:
            ddq = _dd5(Q[c - 2 : c + 3], dt)
            z = np.zeros(grid.n)
            rw = RWFields(states[c].mode, grid, P[c], Q[c], z, z)
            a, b = rhs_rw(rw, bg)
            out.append((math.sqrt(np.sum(w * (ddp - a) ** 2)), math.sqrt(np.sum(w * (ddq - b) ** 2))))
        times.append(states[c].time)
    return np.asarray(out), np.asarray(times)


# --- fits and ell = 1 -------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    window: tuple
    residual: float


def fit_decay(times, values, window) -> FitResult:
    """Least-squares slope of ``log(value)`` against ``log(time)`` inside ``window``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if np.count_nonzero(sel) < 2:
        raise DomainError("fit window contains fewer than two samples")
    if np.any(t[sel] <= 0):
        raise DomainError("fit times must be positive")
    if np.any(v[sel] <= 0):
        raise DomainError("non-positive values in the fit window (round-off floor reached?)")
    x, y = np.log(t[sel]), np.log(v[sel])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return FitResult(float(coef[0]), float(coef[1]), (float(lo), float(hi)), resid)


@dataclass(frozen=True)
class DmEstimate:
    m: int
    value: float
    spread: float
    unconverged: bool
    per_probe: tuple


def extract_dm(states: Sequence, bg: Background, late_window, probe_radii=(6.0, 10.0, 20.0), tolerance=0.1):
    """Amplitude of the stationary ``p = 3 d / r`` part of an ``ell = 1`` series.

    ``d`` is the time average over ``late_window`` of ``r p / 3`` at each probe;
    the relative spread across probes is the error estimate and values above
    ``tolerance`` are flagged.
    """
    if not states or states[0].mode.ell != 1:
        raise DomainError("extract_dm requires an ell = 1 series")
    grid = states[0].grid
    lo, hi = late_window
    sel = [s for s in states if lo <= s.time <= hi]
    if not sel:
        raise DomainError("late window contains no snapshots")
    idx = [grid.index_of(tortoise(bg, r)) for r in probe_radii]
    per = []
    for i in idx:
        vals = [grid.r[i] * derive_P(s, bg)[i] / 3 for s in sel]
        per.append(float(np.mean(vals)))
    value = float(np.mean(per))
    spread = float(np.max(per) - np.min(per))
    scale = abs(value) if value else 1.0
    rel = spread / scale if value else (0.0 if spread == 0 else np.inf)
    return DmEstimate(states[0].mode.m, value, spread, bool(rel > tolerance), tuple(per))


def subtract_kerr(state: ModeFields, d: float) -> ModeFields:
    """``state - d K_m`` for the linearized-Kerr mode of the state's ``m``."""
    if state.mode.ell != 1:
        raise DomainError("subtract_kerr requires ell = 1")
    return subtract_fields(state, kerr_mode(state.grid.bg, state.mode.m, state.grid), d)
