"""Dipole matrix elements: radial integrals and angular factors.

The radial integral between two Rydberg states is computed with the
quasiclassical (semiclassical) formula of Kaulakys (primary method, accurate
for large n), with direct Numerov integration of the radial equation in the
Coulomb approximation available as an independent test oracle
(:func:`radial_numerov`).

Angular factors use Condon-Shortley phase conventions throughout, with
exact Clebsch-Gordan / Wigner 3j/6j coefficients evaluated by Racah's
closed formulas in exact integer arithmetic (converted to float at the
end). The full matrix element factorizes as radial * angular via the
Wigner-Eckart theorem in the fine-structure basis:

    <n1 l1 j1 m1 | T_q | n2 l2 j2 m2> = R(n1 l1 j1; n2 l2 j2) * A(...)

nonzero only for |l1 - l2| = 1 and m2 - m1 = q (spherical component
convention of this package: ``q = m_ket - m_bra``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np

from .atomic_data import QuantumDefectTable, RydbergState, default_defects
from .errors import SelectionRuleError

__all__ = [
    "DipoleMatrixElement",
    "cg",
    "wigner_3j",
    "wigner_6j",
    "angular_factor",
    "radial_qc",
    "radial_numerov",
    "dipole_component",
    "dipole_reachable",
]


# --------------------------------------------------------------------------
# Exact angular-momentum coefficients (Racah closed formulas)
# --------------------------------------------------------------------------

def _as_twice(x: float, name: str) -> int:
    t = round(2 * x)
    if abs(2 * x - t) > 1e-9:
        raise ValueError(f"{name} must be a half-integer, got {x}")
    return t


def _tri_fraction(a2: int, b2: int, c2: int) -> Fraction | None:
    """Triangle coefficient Delta(a,b,c) as an exact Fraction, or None if
    the triangle rule fails (arguments are doubled angular momenta)."""
    s1 = (a2 + b2 - c2) // 2
    s2 = (a2 - b2 + c2) // 2
    s3 = (-a2 + b2 + c2) // 2
    if s1 < 0 or s2 < 0 or s3 < 0 or (a2 + b2 - c2) % 2 != 0:
        return None
    s4 = (a2 + b2 + c2) // 2 + 1
    return Fraction(
        math.factorial(s1) * math.factorial(s2) * math.factorial(s3),
        math.factorial(s4),
    )


def wigner_3j(j1: float, j2: float, j3: float, m1: float, m2: float, m3: float) -> float:
    """Wigner 3j symbol, exact Racah evaluation (double precision result).

    Out-of-domain arguments (triangle or projection violations) return 0.
    """
    j1x2, j2x2, j3x2 = (_as_twice(j1, "j1"), _as_twice(j2, "j2"), _as_twice(j3, "j3"))
    m1x2, m2x2, m3x2 = (_as_twice(m1, "m1"), _as_twice(m2, "m2"), _as_twice(m3, "m3"))
    if m1x2 + m2x2 + m3x2 != 0:
        return 0.0
    if abs(m1x2) > j1x2 or abs(m2x2) > j2x2 or abs(m3x2) > j3x2:
        return 0.0
    if (j1x2 + m1x2) % 2 or (j2x2 + m2x2) % 2 or (j3x2 + m3x2) % 2:
        return 0.0
    tri = _tri_fraction(j1x2, j2x2, j3x2)
    if tri is None:
        return 0.0
    # factorial arguments (all integers when the checks above pass)
    jpm1 = (j1x2 + m1x2) // 2
    jmm1 = (j1x2 - m1x2) // 2
    jpm2 = (j2x2 + m2x2) // 2
    jmm2 = (j2x2 - m2x2) // 2
    jpm3 = (j3x2 + m3x2) // 2
    jmm3 = (j3x2 - m3x2) // 2
    prod = Fraction(
        math.factorial(jpm1) * math.factorial(jmm1)
        * math.factorial(jpm2) * math.factorial(jmm2)
        * math.factorial(jpm3) * math.factorial(jmm3)
    )
    t1 = (j1x2 + j2x2 - j3x2) // 2
    t2 = jmm1
    t3 = jpm2
    t4 = (j3x2 - j2x2 + m1x2) // 2
    t5 = (j3x2 - j1x2 - m2x2) // 2
    kmin = max(0, -t4, -t5)
    kmax = min(t1, t2, t3)
    if kmin > kmax:
        return 0.0
    ksum = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (
            math.factorial(k)
            * math.factorial(t1 - k)
            * math.factorial(t2 - k)
            * math.factorial(t3 - k)
            * math.factorial(t4 + k)
            * math.factorial(t5 + k)
        )
        ksum += Fraction(-1 if k % 2 else 1, den)
    if ksum == 0:
        return 0.0
    phase = -1.0 if ((j1x2 - j2x2 - m3x2) // 2) % 2 else 1.0
    return phase * float(ksum) * math.sqrt(float(tri * prod))


def cg(j1: float, m1: float, j2: float, m2: float, J: float, M: float) -> float:
    """Clebsch-Gordan coefficient <j1 m1 j2 m2 | J M>.

    Exact Racah evaluation; out-of-domain inputs (triangle rule violation
    or M != m1 + m2) return 0.
    """
    Jx2 = _as_twice(J, "J")
    m1x2, m2x2, Mx2 = _as_twice(m1, "m1"), _as_twice(m2, "m2"), _as_twice(M, "M")
    if m1x2 + m2x2 != Mx2:
        return 0.0
    three = wigner_3j(j1, j2, J, m1, m2, -M)
    if three == 0.0:
        return 0.0
    phase = -1.0 if ((_as_twice(j1, "j1") - _as_twice(j2, "j2") + Mx2) // 2) % 2 else 1.0
    return phase * math.sqrt(Jx2 + 1.0) * three


def wigner_6j(j1: float, j2: float, j3: float, j4: float, j5: float, j6: float) -> float:
    """Wigner 6j symbol, exact Racah evaluation (double precision result).

    Returns 0 when any of the four triads violates the triangle rule.
    """
    a = [_as_twice(j, f"j{i+1}") for i, j in enumerate((j1, j2, j3, j4, j5, j6))]
    triads = [
        (a[0], a[1], a[2]),
        (a[0], a[4], a[5]),
        (a[3], a[1], a[5]),
        (a[3], a[4], a[2]),
    ]
    tris = []
    for t in triads:
        tri = _tri_fraction(*t)
        if tri is None:
            return 0.0
        tris.append(tri)
    f = [(x + y + z) // 2 for (x, y, z) in triads]
    g = [
        (a[0] + a[1] + a[3] + a[4]) // 2,
        (a[1] + a[2] + a[4] + a[5]) // 2,
        (a[0] + a[2] + a[3] + a[5]) // 2,
    ]
    kmin = max(f)
    kmax = min(g)
    if kmin > kmax:
        return 0.0
    ksum = Fraction(0)
    for k in range(kmin, kmax + 1):
        num = math.factorial(k + 1)
        den = 1
        for fi in f:
            den *= math.factorial(k - fi)
        for gi in g:
            den *= math.factorial(gi - k)
        ksum += Fraction(-num if k % 2 else num, den)
    if ksum == 0:
        return 0.0
    root = math.sqrt(float(tris[0] * tris[1] * tris[2] * tris[3]))
    return float(ksum) * root


# --------------------------------------------------------------------------
# Quasiclassical radial integral (primary method)
# --------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


def _anger(nu: float, z: float) -> float:
    """Anger function J_nu(z) = (1/pi) * int_0^pi cos(nu*t - z*sin t) dt.

    Gauss-Legendre quadrature on [0, pi]; the integrand is entire, so 64
    nodes give full double precision for the small |nu|, |z| used here.
    """
    x, w = _gauss_legendre(64)
    t = 0.5 * math.pi * (x + 1.0)
    vals = np.cos(nu * t - z * np.sin(t))
    return float(0.5 * np.dot(w, vals))


def _radial_qc_nstar(nu1: float, l1: int, nu2: float, l2: int) -> float:
    """Quasiclassical radial integral <nu1 l1 | r | nu2 l2> in a0, from
    effective quantum numbers (semiclassical formula for |Delta nu| small
    compared to nu, exact in the hydrogenic same-nu limit)."""
    if abs(l1 - l2) != 1:
        raise SelectionRuleError(f"radial integral needs |l1-l2| = 1, got l1={l1}, l2={l2}")
    # order from lower to upper energy so the formula's sign convention is fixed
    if nu1 > nu2:
        nu1, nu2, l1, l2 = nu2, nu1, l2, l1
    lc = (l1 + l2 + 1) / 2.0
    nc = math.sqrt(nu1 * nu2)
    dnu = nu1 - nu2
    dl = l2 - l1
    gamma = dl * lc / nc
    if abs(dnu) < 1e-10:
        g0, g1, g2, g3 = 1.0, 0.0, 0.0, 0.0
    else:
        a_m = _anger(dnu - 1.0, -dnu)
        a_p = _anger(dnu + 1.0, -dnu)
        g0 = (a_m - a_p) / (3.0 * dnu)
        g1 = -(a_m + a_p) / (3.0 * dnu)
        g2 = g0 - math.sin(math.pi * dnu) / (math.pi * dnu)
        g3 = (dnu / 2.0) * g0 + g1
    return (
        1.5 * nc * nc * math.sqrt(1.0 - (lc / nc) ** 2)
        * (g0 + gamma * g1 + gamma**2 * g2 + gamma**3 * g3)
    )


@lru_cache(maxsize=None)
def _radial_qc_cached(table: QuantumDefectTable, key: tuple[int, int, int, int, int, int]) -> float:
    n1, l1, j2_1, n2, l2, j2_2 = key
    nu1 = table.n_star(n1, l1, j2_1)
    nu2 = table.n_star(n2, l2, j2_2)
    return _radial_qc_nstar(nu1, l1, nu2, l2)


def radial_qc(s1: RydbergState, s2: RydbergState,
              defects: QuantumDefectTable | None = None) -> float:
    """Quasiclassical radial dipole integral <s1| r |s2> in a0.

    Symmetric under argument swap; memoized per defect table (the
    Hamiltonian assembly queries the same few integrals thousands of
    times). Raises :class:`SelectionRuleError` unless |l1 - l2| = 1.
    """
    if abs(s1.l - s2.l) != 1:
        raise SelectionRuleError(f"radial integral needs |Delta l| = 1, got {s1.label()} - {s2.label()}")
    table = defects if defects is not None else default_defects()
    a = (s1.n, s1.l, s1.j2)
    b = (s2.n, s2.l, s2.j2)
    key = a + b if a <= b else b + a
    return _radial_qc_cached(table, key)


# --------------------------------------------------------------------------
# Numerov radial integral (independent test oracle)
# --------------------------------------------------------------------------

def _numerov_wave(n_star: float, l: int, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Inward Numerov integration of the radial equation in the Coulomb
    approximation, on a logarithmic grid.

    With x = ln r and u(r) = sqrt(r) w(x), the equation u'' = f u becomes
    w'' = G w with G = (l + 1/2)^2 - 2 r - 2 E r^2 and E = -1/(2 n*^2)
    (atomic units). Returns (x ascending, unnormalized w*sqrt(r) = u).
    """
    energy = -0.5 / (n_star * n_star)
    r_outer = 2.5 * n_star * (n_star + 15.0)
    x_max = math.log(r_outer)
    x_min = math.log(0.8)
    npts = int((x_max - x_min) / step) + 1
    x = x_max - step * np.arange(npts)  # descending
    r = np.exp(x)
    g = (l + 0.5) ** 2 - 2.0 * r - 2.0 * energy * r * r
    w = np.empty(npts)
    w[0] = 1e-12
    w[1] = 1e-12 * math.exp(step * math.sqrt(max(g[0], 1e-12)))
    c = step * step / 12.0
    for i in range(1, npts - 1):
        w[i + 1] = ((2.0 + 10.0 * c * g[i]) * w[i] - (1.0 - c * g[i - 1]) * w[i - 1]) / (
            1.0 - c * g[i + 1]
        )
        if abs(w[i + 1]) > 1e20:  # renormalize to avoid overflow
            w[: i + 2] /= 1e20
    u = w * np.sqrt(r)
    return x[::-1], u[::-1]


def radial_numerov(s1: RydbergState, s2: RydbergState,
                   defects: QuantumDefectTable | None = None,
                   step: float = 1e-3) -> float:
    """Radial dipole integral by direct Numerov integration (a0).

    Independent oracle for :func:`radial_qc`: integrates both radial
    wavefunctions in the Coulomb approximation at their quantum-defect
    energies, interpolates onto a common logarithmic grid, and evaluates
    <u1| r |u2> with trapezoidal quadrature. Not on any hot path.
    """
    if abs(s1.l - s2.l) != 1:
        raise SelectionRuleError(f"radial integral needs |Delta l| = 1, got {s1.label()} - {s2.label()}")
    table = defects if defects is not None else default_defects()
    nu1 = table.n_star(s1.n, s1.l, s1.j2)
    nu2 = table.n_star(s2.n, s2.l, s2.j2)
    x1, u1 = _numerov_wave(nu1, s1.l, step)
    x2, u2 = _numerov_wave(nu2, s2.l, step)
    lo = max(x1[0], x2[0])
    hi = min(x1[-1], x2[-1])
    xg = np.arange(lo, hi, step)
    f1 = np.interp(xg, x1, u1)
    f2 = np.interp(xg, x2, u2)
    rg = np.exp(xg)
    norm1 = np.trapezoid(f1 * f1 * rg, xg)   # int u^2 dr = int u^2 r dx
    norm2 = np.trapezoid(f2 * f2 * rg, xg)
    element = np.trapezoid(f1 * f2 * rg * rg, xg)  # int u1 u2 r dr
    return float(element / math.sqrt(norm1 * norm2))


# --------------------------------------------------------------------------
# Angular factor and full matrix element
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _angular_cached(l1: int, j2_1: int, m2_1: int, l2: int, j2_2: int, m2_2: int, q2: int) -> float:
    j1 = j2_1 / 2.0
    jj2 = j2_2 / 2.0
    m1 = m2_1 / 2.0
    mm2 = m2_2 / 2.0
    q = q2 / 2.0
    w3 = wigner_3j(j1, 1.0, jj2, -m1, -q, mm2)
    if w3 == 0.0:
        return 0.0
    w6 = wigner_6j(j1, 1.0, jj2, l2, 0.5, l1)
    w3l = wigner_3j(l1, 1.0, l2, 0.0, 0.0, 0.0)
    red_j = (-1.0) ** int(l1 + 0.5 + jj2 + 1) * math.sqrt((2 * j1 + 1) * (2 * jj2 + 1)) * w6
    red_l = (-1.0) ** l1 * math.sqrt((2 * l1 + 1) * (2 * l2 + 1)) * w3l
    return (-1.0) ** int(round(j1 - m1)) * w3 * red_j * red_l


def angular_factor(s1: RydbergState, s2: RydbergState, q: int) -> float:
    """Angular part of <s1| T_q |s2> in the fine-structure basis
    (Condon-Shortley phases; dimensionless, multiplies the radial integral).

    Zero unless |l1 - l2| = 1 and m2 - m1 = q.
    """
    if abs(s1.l - s2.l) != 1:
        return 0.0
    if s2.m2 - s1.m2 != 2 * q:
        return 0.0
    return _angular_cached(s1.l, s1.j2, s1.m2, s2.l, s2.j2, s2.m2, 2 * q)


@dataclass(frozen=True)
class DipoleMatrixElement:
    """One spherical component of the dipole operator between two states.

    ``value`` is in atomic units (e*a0); zero outside the electric-dipole
    selection rules (|Delta l| = 1, m_ket - m_bra = q). The Hermitian
    symmetry ``element(bra, ket, q) = (-1)**q * element(ket, bra, -q)``
    holds in the Condon-Shortley convention used throughout.
    """

    bra: RydbergState
    ket: RydbergState
    q: int
    value: float


def dipole_component(s1: RydbergState, s2: RydbergState, q: int,
                     defects: QuantumDefectTable | None = None) -> DipoleMatrixElement:
    """Full matrix element <s1| T_q |s2> = radial * angular, in e*a0.

    Selection rules are enforced by returning a zero value (never an
    exception), so callers can sum over components blindly.
    """
    if q not in (-1, 0, 1):
        return DipoleMatrixElement(s1, s2, q, 0.0)
    ang = angular_factor(s1, s2, q)
    if ang == 0.0:
        return DipoleMatrixElement(s1, s2, q, 0.0)
    value = ang * radial_qc(s1, s2, defects)
    return DipoleMatrixElement(s1, s2, q, value)


def dipole_reachable(state: RydbergState, n_window: int,
                     defects: QuantumDefectTable | None = None) -> Iterator[tuple[RydbergState, int]]:
    """All states reachable from ``state`` by one dipole transition with
    |Delta n| <= n_window, yielding (state2, q = m2 - m1).

    Only series present in the defect table are generated (the collective
    basis builder uses this as its single-atom step set).
    """
    table = defects if defects is not None else default_defects()
    for l2 in (state.l - 1, state.l + 1):
        if l2 < 0:
            continue
        for j2_2 in (2 * l2 - 1, 2 * l2 + 1):
            if j2_2 < 1 or not table.has_series(l2, j2_2):
                continue
            for n2 in range(state.n - n_window, state.n + n_window + 1):
                if n2 < l2 + 1 or n2 < 5:
                    continue
                for q in (-1, 0, 1):
                    m2_2 = state.m2 + 2 * q
                    if abs(m2_2) > j2_2:
                        continue
                    s2 = RydbergState(n2, l2, j2_2 / 2.0, m2_2 / 2.0)
                    if angular_factor(state, s2, q) != 0.0:
                        yield s2, q
