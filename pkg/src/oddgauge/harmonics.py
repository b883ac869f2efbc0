"""Angular constants of the odd-parity harmonics and a quadrature self-test.

The odd harmonics are ``Z_a = eps_a^b d_b Y`` on ``L(-1)`` and
``Z_ab = nabla_a Z_b + nabla_b Z_a`` on ``L(-2)``.  Inner products of bundle
sections use the spacetime metric ``r^2 sigma`` on the sphere factor, so a mode
``u Z_a`` has pointwise norm ``n1 u^2 / r^2`` after angular integration and a
mode ``w Z_ab`` has ``n2 w^2 / r^4``.  Harmonics ``Y`` are real and have unit
``L^2(S^2)`` norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, NamedTuple

import numpy as np

from oddgauge.geometry import DomainError


@dataclass(frozen=True)
class ModeIndex:
    ell: int
    m: int = 0

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise DomainError(f"ell must be an integer >= 1, got {self.ell!r}")
        if int(self.m) != self.m or abs(self.m) > self.ell:
            raise DomainError(f"m must satisfy |m| <= ell, got m={self.m!r}")


@dataclass(frozen=True)
class ModeWeights:
    """Per-ell constants; see the module docstring for the conventions."""

    lam: float
    eig1: float
    eig2: float
    n1: float
    n2: float
    grad1: float
    grad2: float

    @property
    def angular1(self):
        """``grad1 / n1``: angular eigenvalue seen by ``u / r`` on ``L(-1)``."""
        return self.grad1 / self.n1

    @property
    def angular2(self):
        """``grad2 / n2``: angular eigenvalue seen by ``w / r^2`` on ``L(-2)``."""
        return self.grad2 / self.n2 if self.n2 else float("nan")


def weights(mode: ModeIndex) -> ModeWeights:
    """Closed-form constants for the mode ``mode.ell``."""
    lam = float(mode.ell * (mode.ell + 1))
    n1 = lam
    n2 = 2 * lam * (lam - 2)
    return ModeWeights(
        lam=lam,
        eig1=1 - lam,
        eig2=4 - lam,
        n1=n1,
        n2=n2,
        grad1=lam * (lam - 1),
        grad2=(lam - 4) * n2,
    )


class Coefficient(NamedTuple):
    value: float
    trivial_target: bool


def d_coefficient(mode: ModeIndex, r) -> Coefficient:
    """``D (u Z_a) = (c u) Z_ab`` with ``c = r``; zero with a flag for ``ell = 1``."""
    if mode.ell == 1:
        return Coefficient(0.0 * np.asarray(r, dtype=float), True)
    return Coefficient(np.asarray(r, dtype=float) * 1.0, False)


def ddag_coefficient(mode: ModeIndex, r):
    """``D^dagger (w Z_ab) = (c w) Z_a`` with ``c = 2 (lambda - 2) / r``."""
    if mode.ell == 1:
        raise DomainError("ell = 1 has no L(-2) mode")
    lam = mode.ell * (mode.ell + 1)
    return 2.0 * (lam - 2) / np.asarray(r, dtype=float)


# --- truncated bivariate Taylor series ------------------------------------


class Jet:
    """Truncated Taylor expansion in ``(dtheta, dphi)`` at many base points.

    ``c[i, j]`` holds the coefficient of ``dtheta^i dphi^j`` (entries with
    ``i + j > order`` are ignored).  Arithmetic propagates exact derivatives,
    so derivatives of explicitly constructed harmonics carry only roundoff.
    """

    __slots__ = ("c", "order")

    def __init__(self, c, order):
        self.c = c
        self.order = order

    @classmethod
    def constant(cls, value, order, shape):
        c = np.zeros((order + 1, order + 1) + shape)
        c[0, 0] = value
        return cls(c, order)

    @classmethod
    def from_derivs(cls, derivs, axis, order, shape):
        """Series in one variable from its derivatives ``derivs[k]``."""
        c = np.zeros((order + 1, order + 1) + shape)
        for k in range(order + 1):
            idx = (k, 0) if axis == 0 else (0, k)
            c[idx] = derivs[k] / math.factorial(k)
        return cls(c, order)

    @property
    def value(self):
        return self.c[0, 0]

    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.order, self.c.shape[2:])

    def __add__(self, other):
        other = self._coerce(other)
        n = min(self.order, other.order)
        return Jet(self.c[: n + 1, : n + 1] + other.c[: n + 1, : n + 1], n)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.order)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * other, self.order)
        n = min(self.order, other.order)
        out = np.zeros((n + 1, n + 1) + self.c.shape[2:])
        for i, j in product(range(n + 1), repeat=2):
            if i + j > n:
                continue
            acc = 0.0
            for a in range(i + 1):
                for b in range(j + 1):
                    acc = acc + self.c[a, b] * other.c[i - a, j - b]
            out[i, j] = acc
        return Jet(out, n)

    __rmul__ = __mul__

    def reciprocal(self):
        n = self.order
        out = np.zeros_like(self.c)
        a0 = self.c[0, 0]
        out[0, 0] = 1.0 / a0
        for deg in range(1, n + 1):
            for i in range(deg + 1):
                j = deg - i
                acc = 0.0
                for a in range(i + 1):
                    for b in range(j + 1):
                        if a == 0 and b == 0:
                            continue
                        acc = acc + self.c[a, b] * out[i - a, j - b]
                out[i, j] = -acc / a0
        return Jet(out, n)

    def d(self, axis):
        """Partial derivative along ``axis`` (0 = theta, 1 = phi)."""
        n = self.order - 1
        if n < 0:
            raise ValueError("jet has no derivative information left")
        out = np.zeros((n + 1, n + 1) + self.c.shape[2:])
        for i, j in product(range(n + 1), repeat=2):
            if i + j > n:
                continue
            if axis == 0:
                out[i, j] = (i + 1) * self.c[i + 1, j]
            else:
                out[i, j] = (j + 1) * self.c[i, j + 1]
        return Jet(out, n)


# --- tensors on the unit sphere ------------------------------------------


class SphereGrid:
    """Gauss-Legendre nodes in ``cos(theta)`` times uniform nodes in ``phi``."""

    def __init__(self, n_theta, n_phi, order):
        x, w = np.polynomial.legendre.leggauss(n_theta)
        theta = np.arccos(x)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        T, P = np.meshgrid(theta, phi, indexing="ij")
        self.shape = T.shape
        self.weights = np.outer(w, np.full(n_phi, 2 * np.pi / n_phi))
        self.order = order
        sh = self.shape
        st, ct = np.sin(T), np.cos(T)
        self.sin = Jet.from_derivs([st, ct, -st, -ct] * (order // 4 + 1), 0, order, sh)
        self.cos = Jet.from_derivs([ct, -st, -ct, st] * (order // 4 + 1), 0, order, sh)
        self.phi = P
        inv_sin = self.sin.reciprocal()
        self.inv_metric = (Jet.constant(1.0, order, sh), inv_sin * inv_sin)
        # nonzero Christoffel symbols Gamma^c_ab
        cot = self.cos * inv_sin
        self.christoffel = {(0, 1, 1): -(self.sin * self.cos), (1, 0, 1): cot, (1, 1, 0): cot}
        # eps_a^b: eps_theta^phi = 1/sin, eps_phi^theta = -sin
        self.eps_up = {(0, 1): inv_sin, (1, 0): -self.sin}

    def trig_phi(self, m):
        """Jet of ``cos(m phi)`` (m > 0), ``sin(|m| phi)`` (m < 0) or 1."""
        sh, n, P = self.shape, self.order, self.phi
        if m == 0:
            return Jet.constant(1.0, n, sh)
        k = abs(m)
        if m > 0:
            cyc = [np.cos(k * P), -k * np.sin(k * P), -(k**2) * np.cos(k * P), k**3 * np.sin(k * P)]
        else:
            cyc = [np.sin(k * P), k * np.cos(k * P), -(k**2) * np.sin(k * P), -(k**3) * np.cos(k * P)]
        derivs = [cyc[i % 4] * (k ** (4 * (i // 4))) for i in range(n + 1)]
        return Jet.from_derivs(derivs, 1, n, sh)

    def integrate(self, values):
        return float(np.sum(self.weights * values))


def real_harmonic(grid: SphereGrid, ell: int, m: int) -> Jet:
    """Unit-norm real spherical harmonic from the associated Legendre recursion."""
    k = abs(m)
    x, s = grid.cos, grid.sin
    p_prev = Jet.constant(float(np.prod(np.arange(1, 2 * k, 2))) if k else 1.0, grid.order, grid.shape)
    for _ in range(k):
        p_prev = p_prev * s
    if ell == k:
        p = p_prev
    else:
        p_cur = x * p_prev * (2 * k + 1)
        for n in range(k + 2, ell + 1):
            p_prev, p_cur = p_cur, (x * p_cur * (2 * n - 1) - p_prev * (n + k - 1)) * (1.0 / (n - k))
        p = p_cur
    norm = math.sqrt((2 * ell + 1) / (4 * math.pi) * math.factorial(ell - k) / math.factorial(ell + k))
    if m != 0:
        norm *= math.sqrt(2.0)
    return p * grid.trig_phi(m) * norm


def covariant_derivative(grid: SphereGrid, T: dict, rank: int) -> dict:
    """``(nabla T)_{c a1..ak} = d_c T_{a..} - sum_i Gamma^e_{c a_i} T_{..e..}``."""
    out = {}
    for c in (0, 1):
        for idx in product((0, 1), repeat=rank):
            val = T[idx].d(c)
            for i in range(rank):
                for e in (0, 1):
                    G = grid.christoffel.get((e, c, idx[i]))
                    if G is not None:
                        j = idx[:i] + (e,) + idx[i + 1 :]
                        val = val - G * T[j]
            out[(c,) + idx] = val
    return out


def contract(grid: SphereGrid, A: dict, B: dict, rank: int):
    """Full contraction ``sigma^.. A_.. B_..`` evaluated at the nodes."""
    total = 0.0
    for idx in product((0, 1), repeat=rank):
        w = 1.0
        for i in idx:
            w = w * grid.inv_metric[i].value
        total = total + w * A[idx].value * B[idx].value
    return total


def trace_first_two(grid: SphereGrid, T: dict, rank: int) -> dict:
    """``sigma^{ab} T_{ab c..}``."""
    out = {}
    for rest in product((0, 1), repeat=rank - 2):
        out[rest] = grid.inv_metric[0] * T[(0, 0) + rest] + grid.inv_metric[1] * T[(1, 1) + rest]
    return out


def odd_harmonics(grid: SphereGrid, ell: int, m: int):
    """Return ``(Z_a, Z_ab)`` as dicts of jets."""
    Y = real_harmonic(grid, ell, m)
    dY = {(0,): Y.d(0), (1,): Y.d(1)}
    Z = {(0,): grid.eps_up[(0, 1)] * dY[(1,)], (1,): grid.eps_up[(1, 0)] * dY[(0,)]}
    nZ = covariant_derivative(grid, Z, 1)
    Zab = {(a, b): nZ[(a, b)] + nZ[(b, a)] for a, b in product((0, 1), repeat=2)}
    return Z, Zab


@dataclass
class SelftestReport:
    ell_max: int
    n_theta: int
    n_phi: int
    tol: float
    residuals: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v <= self.tol for v in self.residuals.values())

    def lines(self):
        out = [f"identity,max_residual,status"]
        for k, v in self.residuals.items():
            out.append(f"{k},{v:.3e},{'ok' if v <= self.tol else 'FAIL'}")
        out.extend(f"# {n}" for n in self.notes)
        return out


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


def quadrature_selftest(
    ell_max: int,
    n_theta: int = 16,
    n_phi: int = 33,
    tol: float = 1e-10,
    radius: float = 1.0,
    weights_fn: Callable[[ModeIndex], ModeWeights] = weights,
) -> SelftestReport:
    """Check the closed-form constants and the angular identities by quadrature.

    Every ``(ell, m)`` with ``1 <= ell <= ell_max`` is built explicitly.  The
    residuals are maxima over modes of relative errors (``|a - b| / max(1, |b|)``)
    for integrals and of absolute errors for pointwise identities.
    ``weights_fn`` lets a caller inject wrong constants as a negative control.
    """
    if ell_max > 6:
        raise DomainError("ell_max above 6 is outside the supported range")
    if n_theta < 2 * ell_max + 2:
        raise DomainError("n_theta must be at least 2 ell_max + 2")
    grid = SphereGrid(n_theta, n_phi, order=4)
    rep = SelftestReport(ell_max, n_theta, n_phi, tol)
    r = float(radius)
    res = rep.residuals

    def bump(key, val):
        res[key] = max(res.get(key, 0.0), float(val))

    for ell in range(1, ell_max + 1):
        w = weights_fn(ModeIndex(ell))
        lam = ell * (ell + 1)
        for m in range(-ell, ell + 1):
            Z, Zab = odd_harmonics(grid, ell, m)
            nZ = covariant_derivative(grid, Z, 1)
            lapZ = trace_first_two(grid, covariant_derivative(grid, nZ, 2), 3)
            bump("eigen_L1", max(np.max(np.abs(lapZ[(a,)].value - (1 - lam) * Z[(a,)].value)) for a in (0, 1)))
            bump("eigen_L1_printed", abs(w.eig1 - (1 - lam)))
            n1 = grid.integrate(contract(grid, Z, Z, 1))
            grad1 = grid.integrate(contract(grid, nZ, nZ, 2))
            bump("n1", _rel(n1, w.n1))
            bump("grad1", _rel(grad1, w.grad1))
            # |Phi|^2, |nabla-slash Phi|^2 for Phi = Z with spacetime contractions at radius r
            phi2 = n1 / r**2
            dphi2 = grad1 / r**4
            if ell == 1:
                bump("Zab_vanishes_l1", max(np.max(np.abs(v.value)) for v in Zab.values()))
                bump("n2", abs(w.n2))
                continue
            # D Z = r (nabla_a Z_b + nabla_b Z_a - div Z sigma_ab); div Z = 0 for odd harmonics
            divZ = trace_first_two(grid, nZ, 2)[()]
            sigma = {(0, 0): 1.0, (1, 1): grid.sin * grid.sin, (0, 1): 0.0, (1, 0): 0.0}
            DZ = {k: (nZ[k] + nZ[k[::-1]] - divZ * sigma[k]) * r for k in product((0, 1), repeat=2)}
            dc = float(d_coefficient(ModeIndex(ell, m), r).value)
            bump("d_coefficient", max(np.max(np.abs(DZ[k].value - dc * Zab[k].value)) for k in DZ))
            nZab = covariant_derivative(grid, Zab, 2)
            lapZab = trace_first_two(grid, covariant_derivative(grid, nZab, 3), 4)
            bump("eigen_L2", max(np.max(np.abs(lapZab[k].value - (4 - lam) * Zab[k].value)) for k in Zab))
            bump("eigen_L2_printed", abs(w.eig2 - (4 - lam)))
            tr = grid.inv_metric[0].value * Zab[(0, 0)].value + grid.inv_metric[1].value * Zab[(1, 1)].value
            bump("Zab_traceless", np.max(np.abs(tr)))
            n2 = grid.integrate(contract(grid, Zab, Zab, 2))
            grad2 = grid.integrate(contract(grid, nZab, nZab, 3))
            bump("n2", _rel(n2, w.n2))
            bump("grad2", _rel(grad2, w.grad2))
            # D^dagger Z_ab = -(2/r) sigma^{cb} nabla_c Z_ab
            divZab = trace_first_two(grid, {(c, b, a): nZab[(c, a, b)] for c, a, b in product((0, 1), repeat=3)}, 3)
            DdZ = {k: v * (-2.0 / r) for k, v in divZab.items()}
            ddc = float(ddag_coefficient(ModeIndex(ell, m), r))
            bump("ddag_coefficient", max(np.max(np.abs(DdZ[k].value - ddc * Z[k].value)) for k in DdZ))
            # adjointness with spacetime contractions: <DPhi, Psi> uses r^-4, <Phi, D^dag Psi> uses r^-2
            lhs = grid.integrate(contract(grid, DZ, Zab, 2)) / r**4
            rhs = grid.integrate(contract(grid, Z, DdZ, 1)) / r**2
            bump("adjointness", _rel(lhs, rhs))
            # first L2 identity for Phi = Z
            DPhi2 = grid.integrate(contract(grid, DZ, DZ, 2)) / r**4
            bump("identity_D", _rel(DPhi2, 2 * r**2 * dphi2 - 2 * phi2))
            # second L2 identity for Psi = Z_ab
            Dd2 = grid.integrate(contract(grid, DdZ, DdZ, 1)) / r**2
            psi2 = n2 / r**4
            dpsi2 = grad2 / r**6
            bump("identity_Ddag", _rel(Dd2, 2 * r**2 * dpsi2 + 4 * psi2))
            # closed-form mode identities
            bump("mode_identity_D", _rel(w.n2, 2 * w.grad1 - 2 * w.n1))
            bump("mode_identity_Ddag", _rel(4 * (w.lam - 2) ** 2 * w.n1, 2 * w.grad2 + 4 * w.n2))
            bump("mode_adjointness", _rel(dc * w.n2 / r**4, ddc * w.n1 / r**2))
    if ell_max < 2:
        rep.notes.append("L(-2) basis is empty for ell = 1; tensor identities skipped")
    return rep


def corrupted_weights(mode: ModeIndex) -> ModeWeights:
    """Constants with a deliberately wrong ``n1``; negative control for self-tests."""
    return replace(weights(mode), n1=weights(mode).n1 * (1 + 1e-6))
