"""Exact-arithmetic positivity certificates for the polynomial inequalities
behind the energy and Morawetz estimates.

Every claim is a polynomial inequality in ``x = M/r``: ``[2M, inf)`` maps to
``(0, 1/2]`` and ``[3M, inf)`` to ``(0, 1/3]``.  Expressions are assembled
with :class:`~oddgauge.geometry.Radial` using :class:`fractions.Fraction`
coefficients, so no floating point enters a verdict.

The certifier first divides out zeros sitting exactly at an interval endpoint
(``x = 0`` for the far region, ``x = 1/3`` at the photon sphere, ``x = 1/2`` at
the horizon) and records their multiplicity.  The remaining cofactor must be
strictly positive on the closed interval, which is shown by dyadic bisection:
on ``[m - w, m + w]`` the Taylor expansion ``sum c_k t^k`` about ``m`` gives the
lower bound ``c_0 - sum_{k>=1} |c_k| w^k``.
"""

from __future__ import annotations

import csv
import enum
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from oddgauge.geometry import (
    DomainError,
    PotentialKind,
    Radial,
    Sector,
    radial_box,
    radial_lapse,
    radial_morawetz,
    radial_potential,
)

MAX_LEAVES = 2**24

Poly = Tuple[Fraction, ...]


class Status(enum.Enum):
    CERTIFIED = "certified"
    FAILED = "failed"
    INCONCLUSIVE = "inconclusive"


# --- exact polynomial helpers (ascending coefficients) ----------------------


def _poly(coeffs) -> Poly:
    out = [Fraction(c) for c in coeffs]
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out) if out else (Fraction(0),)


def evaluate(p: Sequence, x) -> Fraction:
    """Exact Horner evaluation."""
    x = Fraction(x)
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def taylor_shift(p: Sequence, m) -> Poly:
    """Coefficients of ``p(m + t)`` in ``t``."""
    m = Fraction(m)
    a = list(p)
    n = len(a)
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            a[j] += m * a[j + 1]
    return tuple(a)


def divide_root(p: Sequence, e) -> Tuple[Poly, Fraction]:
    """Synthetic division ``p = (x - e) q + rem``."""
    e = Fraction(e)
    n = len(p) - 1
    q = [Fraction(0)] * max(n, 1)
    acc = Fraction(0)
    for k in range(n, 0, -1):
        acc = acc * e + p[k]
        q[k - 1] = acc
    rem = acc * e + p[0]
    return _poly(q), rem


def strip_root(p: Sequence, e) -> Tuple[Poly, int]:
    """Divide out the full power of ``(x - e)``; returns ``(cofactor, multiplicity)``."""
    p = _poly(p)
    if all(c == 0 for c in p):
        raise DomainError("cannot certify the zero polynomial")
    mult = 0
    while evaluate(p, e) == 0:
        p, _ = divide_root(p, e)
        mult += 1
    return p, mult


def lower_bound(p: Sequence, a, b) -> Tuple[Fraction, Fraction]:
    """Rigorous lower bound of ``p`` on ``[a, b]`` and the value at the midpoint."""
    a, b = Fraction(a), Fraction(b)
    m = (a + b) / 2
    w = (b - a) / 2
    c = taylor_shift(p, m)
    bound = c[0]
    wk = Fraction(1)
    for ck in c[1:]:
        wk *= w
        bound -= abs(ck) * wk
    return bound, c[0]


# --- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class Claim:
    """``poly(x) > threshold`` (``strict``) or ``>= threshold`` on an interval in ``x = M/r``."""

    id: str
    poly: Poly
    lo: Fraction
    hi: Fraction
    open_lo: bool = False
    open_hi: bool = False
    strict: bool = True
    threshold: Fraction = Fraction(0)
    description: str = ""
    ell: Optional[int] = None

    def interval_text(self):
        left = "(" if self.open_lo else "["
        right = ")" if self.open_hi else "]"
        return f"{left}{self.lo}, {self.hi}{right}"


@dataclass(frozen=True)
class PartReport:
    claim: Claim
    status: Status
    leaves: int
    lower_bound: Optional[Fraction]
    endpoint_zeros: Tuple[Tuple[Fraction, int], ...] = ()
    attained_at: Optional[Fraction] = None
    witness: Optional[Fraction] = None


@dataclass(frozen=True)
class CertificateReport:
    """Aggregate verdict of one named claim made of one or more parts.

    ``lower_bound`` is the smallest certified lower bound over the parts (each
    in its own units); it is ``None`` unless every part is certified.
    """

    claim_id: str
    status: Status
    subdivisions: int
    lower_bound: Optional[Fraction]
    parts: Tuple[PartReport, ...] = field(default_factory=tuple)

    @property
    def certified(self):
        return self.status is Status.CERTIFIED


def certify(claim: Claim, max_leaves: int = MAX_LEAVES) -> PartReport:
    """Certify one polynomial inequality."""
    lo, hi = Fraction(claim.lo), Fraction(claim.hi)
    if not lo < hi:
        raise DomainError("empty certification interval")
    p = list(claim.poly)
    p[0] -= claim.threshold
    g = _poly(p)
    zeros = []
    sign = 1
    for e, is_open, is_hi in ((lo, claim.open_lo, False), (hi, claim.open_hi, True)):
        g, mult = strip_root(g, e)
        if mult:
            zeros.append((e, mult))
            if is_hi and mult % 2:
                sign = -sign
            if claim.strict and not is_open:
                return PartReport(claim, Status.FAILED, 0, None, tuple(zeros), witness=e)
    if sign < 0:
        g = tuple(-c for c in g)
    leaves = 0
    best = None
    stack = [(lo, hi)]
    while stack:
        a, b = stack.pop()
        bound, mid = lower_bound(g, a, b)
        if bound > 0:
            leaves += 1
            best = bound if best is None else min(best, bound)
            continue
        if mid < 0 or (mid == 0 and claim.strict):
            return PartReport(claim, Status.FAILED, leaves, None, tuple(zeros), witness=(a + b) / 2)
        for e in (a, b):
            val = evaluate(g, e)
            if val < 0 or (val == 0 and claim.strict):
                return PartReport(claim, Status.FAILED, leaves, None, tuple(zeros), witness=e)
        if leaves + len(stack) + 2 > max_leaves:
            return PartReport(claim, Status.INCONCLUSIVE, leaves, None, tuple(zeros))
        m = (a + b) / 2
        stack.append((m, b))
        stack.append((a, m))
    closed_zero = next((e for e, _ in zeros if not (claim.open_lo if e == lo else claim.open_hi)), None)
    # with a stripped endpoint zero the infimum of poly - threshold is exactly 0
    bound = claim.threshold if zeros else claim.threshold + best
    return PartReport(claim, Status.CERTIFIED, leaves, bound, tuple(zeros), attained_at=closed_zero)


def _aggregate(claim_id: str, parts: Sequence[PartReport]) -> CertificateReport:
    statuses = {p.status for p in parts}
    if Status.FAILED in statuses:
        status = Status.FAILED
    elif Status.INCONCLUSIVE in statuses:
        status = Status.INCONCLUSIVE
    else:
        status = Status.CERTIFIED
    bound = min(p.lower_bound for p in parts) if status is Status.CERTIFIED else None
    return CertificateReport(claim_id, status, sum(p.leaves for p in parts), bound, tuple(parts))


def _run(claim_id, claims, max_leaves):
    return _aggregate(claim_id, [certify(c, max_leaves) for c in claims])


# --- expressions ---------------------------------------------------------------

HALF = Fraction(1, 2)
THIRD = Fraction(1, 3)
PHOTON_AUX = Fraction(10, 33)  # x at r = 3.3M


def _coeffs(expr: Radial) -> Poly:
    # M = 1: the sign of M^-k P(x) is the sign of P
    return _poly(expr.coeffs)


def _x(power=1, k=None):
    """``M^a / r^b`` as a Radial: ``x^power`` with dimension ``k`` (default 0)."""
    return Radial(0 if k is None else k, [0] * power + [1])


def quintic() -> Poly:
    """``8 - 24x - 54x^2 + 108x^3 + 513x^4 - 891x^5``."""
    return _poly((8, -24, -54, 108, 513, -891))


@dataclass(frozen=True)
class MorawetzTerms:
    """Radial building blocks of the H1/H2 Morawetz bulk term."""

    f: Radial
    df: Radial
    lapse: Radial
    b1: Radial
    b2: Radial
    a1_num: Radial
    a1_den: Radial
    q: Radial


def morawetz_terms() -> MorawetzTerms:
    """``B_i = -box(omega)/4 - (1/2) X(V_i) - (M/r^2) f V_i`` and the pieces of ``A_1 = N / (4 den)``."""
    f, omega, _ = radial_morawetz(Sector.H12)
    lap = radial_lapse()
    df = f.deriv()
    m_r2 = Radial(1, (0, 0, 1))

    def b(kind):
        v = radial_potential(kind)
        return radial_box(omega) * Fraction(-1, 4) - f * lap * v.deriv() * HALF - m_r2 * f * v

    m_r3 = Radial(2, (0, 0, 0, 1))
    num = m_r3 * lap * f * 36
    den = lap * lap * df * 2 - Radial(0, (0, 1)) * lap * df * HALF + m_r2 * lap * f * 12
    q = Radial(0, (4, -18, 12))
    return MorawetzTerms(f, df, lap, b(PotentialKind.V1), b(PotentialKind.V2), num * num, den, q)


def _angular(t: MorawetzTerms, n):
    """``(f/r^3)(1 - 3M/r) n``."""
    return t.f * Radial(3, (0, 0, 0, 1)) * Radial(0, (1, -3)) * n


def dout_numerator(lam) -> Radial:
    """``-D_out`` times the positive factor ``4 den`` (denominator of ``A_1`` cleared)."""
    t = morawetz_terms()
    lam = Fraction(lam)
    den4 = t.a1_den * 4
    first = den4 * (t.b1 * 2 + _angular(t, 2 * (lam - 1))) - t.a1_num
    second = t.b2 + _angular(t, lam - 4)
    f2q2 = t.f * t.f * Radial(6, [0] * 6 + [1]) * t.q * t.q
    return first * second * 4 - den4 * f2q2 * (2 * lam - 4)


def dout_lambda_coefficients() -> Tuple[Radial, Radial, Radial]:
    """``(gamma, beta, alpha)`` with ``dout_numerator(lam) = gamma + beta lam + alpha lam^2``."""
    p0, p1, p2 = dout_numerator(0), dout_numerator(1), dout_numerator(2)
    alpha = (p2 - p1 * 2 + p0) * HALF
    beta = p1 - p0 - alpha
    return p0, beta, alpha


def dout_value(ell: int, x) -> float:
    """``-D_out`` at ``x = M/r`` with ``M = 1`` (floating point, for inspection only)."""
    t = morawetz_terms()
    x = Fraction(x)
    den = evaluate(_coeffs(t.a1_den), x)
    return float(evaluate(_coeffs(dout_numerator(ell * (ell + 1))), x) / (4 * den))


def boundary_form_minors(ell: int, h1) -> Tuple[Poly, Poly]:
    """Diagonal entry and determinant of the (|H1|, |H2|) form of the H1/H2 energy density.

    ``a = h1 (lam + 4 - 18x)``, ``c = (lam - 2)/2``, ``b^2 = 2 lam - 4`` and
    ``det = a c - b^2``; both must be positive for a positive definite form.
    """
    lam = Fraction(ell * (ell + 1))
    h1 = Fraction(h1)
    a = _poly((h1 * (lam + 4), -18 * h1))
    det = _poly((a[0] * (lam - 2) / 2 - (2 * lam - 4), a[1] * (lam - 2) / 2))
    return a, det


# --- verifications -------------------------------------------------------------


def quintic_claims() -> List[Claim]:
    # Q >= 7/32 with equality only at the closed end x = 1/2 implies Q > 0
    return [
        Claim(
            "quintic_min",
            quintic(),
            Fraction(0),
            HALF,
            open_lo=True,
            strict=False,
            threshold=Fraction(7, 32),
            description="Q(x) >= 7/32 on (0, 1/2], equality at x = 1/2",
        )
    ]


def verify_quintic(max_leaves: int = MAX_LEAVES) -> CertificateReport:
    """Positivity of the quintic on ``(0, 1/2]`` and its minimum ``7/32`` at ``x = 1/2``."""
    return _run("quintic", quintic_claims(), max_leaves)


def h0_boundary_claims(ell: int) -> List[Claim]:
    if ell < 2:
        raise DomainError("the H1/H2 energy form needs ell >= 2")
    out = []

    def add(tag, h1, lo, hi, open_lo, strict, text):
        a, det = boundary_form_minors(ell, h1)
        for name, p in (("diag", a), ("det", det)):
            # the diagonal entry stays strictly positive even where det only reaches zero
            out.append(Claim(f"h0_form_l{ell}_{tag}_{name}", p, lo, hi, open_lo, False,
                             strict or name == "diag", description=f"{text}: {name}", ell=ell))

    if ell == 2:
        add("h5_near", 5, Fraction(1, 4), HALF, False, True, "h1 = 5 on [2M, 4M], positive definite")
        add("h1_far", 1, Fraction(0), THIRD, True, False, "h1 = 1 on [3M, inf), positive semidefinite")
        add("h1_far_strict", 1, Fraction(0), Fraction(1, 4), True, True, "h1 = 1 on [4M, inf), positive definite")
    else:
        add("h1_all", 1, Fraction(0), HALF, True, True, "h1 = 1 on [2M, inf), positive definite")
    return out


def verify_h0_boundary_form(ell: int, max_leaves: int = MAX_LEAVES) -> CertificateReport:
    """Positivity of the H1/H2 energy quadratic form.

    The determinant grows with ``h1`` wherever ``lam + 4 - 18x > 0``, so
    certifying ``h1 = 1`` covers every admissible ``h1 >= 1``.
    """
    return _run(f"h0_form_l{ell}", h0_boundary_claims(ell), max_leaves)


def _claim(cid, expr, lo, hi, open_lo=False, open_hi=False, strict=True, text="", ell=None):
    return Claim(cid, _coeffs(expr), Fraction(lo), Fraction(hi), open_lo, open_hi, strict, Fraction(0), text, ell)


def a1_denominator_claim() -> Claim:
    t = morawetz_terms()
    return _claim("a1_den", t.a1_den, 0, THIRD, open_lo=True, text="denominator of A_1 > 0 on [3M, inf)")


def photon_aux_claims() -> List[Claim]:
    """The two large-lam coefficients on ``[3M, 3.3M]`` (for ``ell >= 3``) and the ratio bound."""
    t = morawetz_terms()
    den4 = t.a1_den * 4
    lam = Fraction(12)
    # (2 B1 - A1) B2 + 2 f^2/r^6 (1 - 3x)^2 lam^2, times 4 den
    photon = Radial(0, (1, -3))
    lead = (den4 * t.b1 * 2 - t.a1_num) * t.b2 + den4 * t.f * t.f * Radial(6, [0] * 6 + [1]) * photon * photon * (2 * lam * lam)
    # 4 (2B1 + 2B2 - A1) - 2 f q^2 / (r^3 (1 - 3x)), with f / (1 - 3x) = 1 + 3x + 2x^2, times 4 den
    f_red = Radial(0, (1, 3, 2))
    lin = (den4 * (t.b1 * 2 + t.b2 * 2) - t.a1_num) * 4 - den4 * f_red * Radial(3, (0, 0, 0, 1)) * t.q * t.q * 2
    # |q| <= 4 (1 - 3x) on x <= 10/33
    up = photon * 4 - t.q
    down = photon * 4 + t.q
    return [
        _claim("aux_quadratic_l3", lead, PHOTON_AUX, THIRD, text="lam^2 coefficient part on [3M, 3.3M], ell >= 3"),
        _claim("aux_linear", lin, PHOTON_AUX, THIRD, text="lam coefficient part on [3M, 3.3M]"),
        _claim("ratio_upper", up, 0, PHOTON_AUX, open_lo=True, text="4(1 - 3x) - q > 0 on [3.3M, inf)"),
        _claim("ratio_lower", down, 0, PHOTON_AUX, open_lo=True, text="4(1 - 3x) + q > 0 on [3.3M, inf)"),
    ]


def _l2_outer_claims() -> List[Claim]:
    """3x3 form in (d_r H1, H1, H2) for ell = 2 on ``[3M, inf)``; ``D H1 . H2`` bounded by ``sqrt(8)``."""
    t = morawetz_terms()
    lap, f, df = t.lapse, t.f, t.df
    m_r2 = Radial(1, (0, 0, 1))
    m_r3 = Radial(2, (0, 0, 0, 1))
    a11 = lap * lap * df * 2 + m_r2 * lap * f * 12
    a22 = _angular(t, 10) + t.b1 * 2 + m_r3 * lap * df * 18
    a12 = (m_r3 * lap * f * 36 + m_r2 * lap * df * 6) * HALF
    a33 = _angular(t, 2) + t.b2
    a23_sq = f * f * Radial(6, [0] * 6 + [1]) * t.q * t.q * Fraction(8, 4)
    m2 = a11 * a22 - a12 * a12
    m3 = a33 * m2 - a11 * a23_sq
    return [
        _claim("l2_outer_m1", a11, 0, THIRD, open_lo=True, text="ell = 2 outer form, first minor", ell=2),
        _claim("l2_outer_m2", m2, 0, THIRD, open_lo=True, text="ell = 2 outer form, second minor", ell=2),
        _claim("l2_outer_m3", m3, 0, THIRD, open_lo=True, text="ell = 2 outer form, determinant", ell=2),
    ]


def _l2_inner_claims() -> List[Claim]:
    """2x2 form in (d_r H2, H2) for ell = 2 on ``[2M, 3M]``; degenerate at the horizon."""
    t = morawetz_terms()
    lap, f, df = t.lapse, t.f, t.df
    m_r2 = Radial(1, (0, 0, 1))
    photon = Radial(0, (1, -3))
    c11 = (df - m_r2 * f * 6) * lap * lap
    c22 = _angular(t, 2) + t.b2
    c12 = (m_r2 * lap * lap * df * -3 - Radial(2, (0, 0, 1)) * f * lap * photon * photon * 4) * HALF
    det = c11 * c22 - c12 * c12
    return [
        _claim("l2_inner_m1", c11, THIRD, HALF, open_hi=True, text="ell = 2 inner form, first minor", ell=2),
        _claim("l2_inner_m2", c22, THIRD, HALF, text="ell = 2 inner form, H2 coefficient", ell=2),
        _claim("l2_inner_det", det, THIRD, HALF, open_hi=True, text="ell = 2 inner form, determinant", ell=2),
    ]


def dout_claims(ell: int) -> List[Claim]:
    if ell < 2:
        raise DomainError("the Morawetz discriminant needs ell >= 2")
    if ell == 2:
        return [a1_denominator_claim()] + _l2_outer_claims() + _l2_inner_claims()
    lam = ell * (ell + 1)
    return [
        a1_denominator_claim(),
        _claim(f"dout_l{ell}", dout_numerator(lam), 0, THIRD, open_lo=True,
               text=f"-D_out > 0 on [3M, inf) for ell = {ell}", ell=ell),
    ] + photon_aux_claims()


def verify_Dout(ell: int, max_leaves: int = MAX_LEAVES) -> CertificateReport:
    """Morawetz discriminant positivity on the photon-sphere exterior.

    ``ell = 2`` certifies the two replacement quadratic forms instead of the
    discriminant, which is negative on part of ``[3M, 4.5M]`` there.
    """
    return _run(f"dout_l{ell}", dout_claims(ell), max_leaves)


def dout_tail_claims(ell_min: int = 7) -> List[Claim]:
    """``-D_out > 0`` for every ``ell >= ell_min`` at once.

    With ``lam = lam_0 + mu`` the cleared discriminant is a quadratic in
    ``mu >= 0``; non-negative coefficients and a positive constant term suffice.
    """
    lam0 = Fraction(ell_min * (ell_min + 1))
    gamma, beta, alpha = dout_lambda_coefficients()
    c0 = gamma + beta * lam0 + alpha * lam0 * lam0
    c1 = beta + alpha * (2 * lam0)
    c2 = alpha
    return [
        a1_denominator_claim(),
        _claim(f"tail_l{ell_min}_mu0", c0, 0, THIRD, open_lo=True, text="constant coefficient > 0"),
        _claim(f"tail_l{ell_min}_mu1", c1, 0, THIRD, open_lo=True, strict=False, text="mu coefficient >= 0"),
        _claim(f"tail_l{ell_min}_mu2", c2, 0, THIRD, open_lo=True, strict=False, text="mu^2 coefficient >= 0"),
    ]


def verify_Dout_tail(ell_min: int = 7, max_leaves: int = MAX_LEAVES) -> CertificateReport:
    return _run(f"dout_tail_l{ell_min}", dout_tail_claims(ell_min), max_leaves)


# --- registry and output ------------------------------------------------------

REGISTRY: Dict[str, Callable[[], CertificateReport]] = {
    "quintic": verify_quintic,
    "h0_form_l2": lambda: verify_h0_boundary_form(2),
    "h0_form_l3": lambda: verify_h0_boundary_form(3),
    **{f"dout_l{ell}": (lambda ell=ell: verify_Dout(ell)) for ell in range(2, 7)},
    "dout_tail_l7": verify_Dout_tail,
}


def _call(name):
    return REGISTRY[name]()


def run_claims(pattern: str = "", workers: int = 1) -> List[CertificateReport]:
    """Run every registered claim whose id contains ``pattern``, in registry order."""
    names = [n for n in REGISTRY if pattern in n]
    if workers > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_call, names))
    return [_call(n) for n in names]


def _fmt(v):
    return "" if v is None else str(v)


def report_rows(reports: Iterable[CertificateReport]):
    """One row per part: claim, part, interval, lower bound, endpoint zeros, leaves, status."""
    for rep in reports:
        for part in rep.parts:
            zeros = ";".join(f"{e}^{m}" for e, m in part.endpoint_zeros)
            yield {
                "claim": rep.claim_id,
                "part": part.claim.id,
                "interval": part.claim.interval_text(),
                "bound": _fmt(part.lower_bound),
                "endpoint_zeros": zeros,
                "leaves": str(part.leaves),
                "status": part.status.value,
                "witness": _fmt(part.witness),
            }


def report_csv(reports: Iterable[CertificateReport]) -> str:
    buf = io.StringIO()
    fields = ["claim", "part", "interval", "bound", "endpoint_zeros", "leaves", "status", "witness"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in report_rows(reports):
        writer.writerow(row)
    return buf.getvalue()


def report_table(reports: Iterable[CertificateReport]) -> str:
    reports = list(reports)
    lines = []
    for rep in reports:
        lines.append(f"{rep.claim_id}: {rep.status.value} ({rep.subdivisions} subintervals)")
        for row in report_rows([rep]):
            extra = f", zeros {row['endpoint_zeros']}" if row["endpoint_zeros"] else ""
            bound = f"bound {row['bound']}" if row["bound"] else f"witness {row['witness']}"
            lines.append(f"  {row['part']:<28} x in {row['interval']:<16} {row['status']:<12} {bound}{extra}")
    return "\n".join(lines) + ("\n" if lines else "")
