"""Cumulant coefficient algebra for the two-replica eta covariance.

For a site u with spins s, s' in two independent replicas,

    E[eta(s) eta(s')] = sum_{m>=4} sum_{l=2}^{m-2} lam^m a_{m,l} s^(m-l) s'^l,

where a_{m,l} = kappa_m/m! * C(m,l) + d_{m,l} and d_{m,l} collects the
j-fold products c_{j,m,l} of the log-MGF double series.  Coefficients are
exact rationals when the cumulants are (Gaussian, Rademacher).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .disorder import DisorderSpec
from .errors import CumulantDepth, GuardViolated

DEFAULT_M = 40


def compositions_count(m: int, j: int) -> int:
    """Number of compositions of m into j parts, each at least 2."""
    if m < 1 or j < 1:
        raise ValueError("m and j must be positive")
    if m < 2 * j:
        return 0
    return math.comb(m - j - 1, j - 1)


class _Algebra:
    """Memoised c/d/a coefficients for one cumulant sequence."""

    def __init__(self, kappa: tuple):
        self.kappa = kappa
        self.exact = all(isinstance(k, (int, Fraction)) for k in kappa)
        self._c: dict = {}

    def _one(self, m: int):
        return Fraction(1) if self.exact else 1.0

    def _zero(self):
        return Fraction(0) if self.exact else 0.0

    def kappa_over_fact(self, m: int):
        if m > len(self.kappa):
            raise CumulantDepth(f"kappa_{m} needed but only {len(self.kappa)} cumulants cached")
        k = self.kappa[m - 1]
        return Fraction(k) / math.factorial(m) if self.exact else float(k) / math.factorial(m)

    def term(self, m: int, l: int):
        return self.kappa_over_fact(m) * math.comb(m, l)

    def c(self, j: int, m: int, l: int):
        if j < 1 or m < 2 * j or l < j or l > m - j:
            return self._zero()
        key = (j, m, l)
        hit = self._c.get(key)
        if hit is not None:
            return hit
        if j == 1:
            val = self.term(m, l)
        else:
            val = self._zero()
            # first part (m1, l1); the remaining j-1 parts need at least 2(j-1) and j-1
            for m1 in range(2, m - 2 * (j - 1) + 1):
                kf = self.kappa_over_fact(m1)
                if kf == 0:
                    continue
                lo = max(1, l - (m - m1 - (j - 1)))
                hi = min(m1 - 1, l - (j - 1))
                for l1 in range(lo, hi + 1):
                    rest = self.c(j - 1, m - m1, l - l1)
                    if rest:
                        val += kf * math.comb(m1, l1) * rest
        self._c[key] = val
        return val

    def d(self, m: int, l: int):
        if m < 4 or not 2 <= l <= m - 2:
            raise ValueError(f"d_{{{m},{l}}} needs m >= 4 and 2 <= l <= m-2")
        if l > m // 2:
            l = m - l
        acc = self._zero()
        for j in range(2, l + 1):
            cj = self.c(j, m, l)
            if cj:
                acc += cj / math.factorial(j)
        return acc

    def a(self, m: int, l: int):
        if m < 4 or not 2 <= l <= m - 2:
            raise ValueError(f"a_{{{m},{l}}} needs m >= 4 and 2 <= l <= m-2")
        return self.term(m, l) + self.d(m, l)


def _algebra(kappa: tuple) -> _Algebra:
    # float and Fraction tuples hash equal, so exactness is part of the key
    exact = all(isinstance(k, (int, Fraction)) for k in kappa)
    return _cached_algebra(kappa, exact)


@lru_cache(maxsize=32)
def _cached_algebra(kappa: tuple, exact: bool) -> _Algebra:
    return _Algebra(kappa)


def _kappa_tuple(kappa) -> tuple:
    if isinstance(kappa, DisorderSpec):
        return tuple(kappa.kappa)
    return tuple(kappa)


def c_coeff(j: int, m: int, l: int, kappa) -> Fraction | float:
    """c_{j,m,l}: sum over compositions of m (parts >= 2) and of l (1 <= l_i <= m_i - 1)
    of prod kappa_{m_i}/m_i! C(m_i, l_i).  Zero outside m >= 2j, j <= l <= m - j."""
    if j < 2:
        raise ValueError("c_coeff needs j >= 2")
    return _algebra(_kappa_tuple(kappa)).c(j, m, l)


def d_coeff(m: int, l: int, kappa) -> Fraction | float:
    return _algebra(_kappa_tuple(kappa)).d(m, l)


def a_coeff(m: int, l: int, kappa) -> Fraction | float:
    return _algebra(_kappa_tuple(kappa)).a(m, l)


@dataclass(frozen=True)
class CoeffTable:
    """Triangular table a_{m,l}, 4 <= m <= m_max, 2 <= l <= m-2."""

    m_max: int
    kappa: tuple = field(repr=False)
    entries: dict = field(repr=False)
    growth_constant: float = 0.0

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.entries.values())

    def __getitem__(self, ml: tuple):
        return self.entries[ml]

    def as_array(self) -> np.ndarray:
        """Float array A with A[m, l] = a_{m,l} (zeros elsewhere)."""
        arr = np.zeros((self.m_max + 1, self.m_max + 1))
        for (m, l), v in self.entries.items():
            arr[m, l] = float(v)
        return arr

    def c(self, j: int, m: int, l: int):
        return _algebra(self.kappa).c(j, m, l)

    def d(self, m: int, l: int):
        return _algebra(self.kappa).d(m, l)

    def row_abs_sum(self, m: int) -> float:
        return float(sum(abs(self.entries[(m, l)]) for l in range(2, m - 1)))

    def is_symmetric(self) -> bool:
        return all(self.entries[(m, l)] == self.entries[(m, m - l)] for (m, l) in self.entries)

    def rows(self):
        """(m, l, exact string, float) tuples in table order."""
        for m in range(4, self.m_max + 1):
            for l in range(2, m - 1):
                v = self.entries[(m, l)]
                yield m, l, str(v), float(v)


def build_table(kappa, m_max: int = DEFAULT_M) -> CoeffTable:
    """Build a CoeffTable from a DisorderSpec or an explicit cumulant sequence."""
    growth = kappa.growth_constant if isinstance(kappa, DisorderSpec) else 0.0
    kt = _kappa_tuple(kappa)
    if m_max > len(kt):
        raise CumulantDepth(f"table to m={m_max} needs {m_max} cumulants, have {len(kt)}")
    alg = _algebra(kt)
    entries = {}
    for m in range(4, m_max + 1):
        for l in range(2, m // 2 + 1):
            entries[(m, l)] = entries[(m, m - l)] = alg.a(m, l)
    return CoeffTable(m_max, kt, entries, growth)


@lru_cache(maxsize=16)
def _float_table(kappa: tuple, m_max: int) -> np.ndarray:
    return build_table(kappa, m_max).as_array()


class SeriesValue(NamedTuple):
    value: np.ndarray | float
    tail_bound: float


def coeff_tail_bound(M: int, lam_k: float, growth: float) -> float:
    """sum_{m > M} (8 C lam K)^m, the certified tail of the truncated eta series."""
    x = 8.0 * growth * lam_k
    if x >= 1.0:
        raise GuardViolated(f"8*C*lambda*K = {x:.4g} >= 1")
    if x == 0.0:
        return 0.0
    return x ** (M + 1) / (1.0 - x)


def eta_cov_series(s, s2, lam: float, spec: DisorderSpec, M: int = DEFAULT_M) -> SeriesValue:
    """Truncated coefficient series for E[eta(s) eta(s')], vectorised over s, s'.

    Requires 8*C*lam*max|s| < 1 so the reported tail bound is finite.
    """
    if M < 4:
        raise ValueError("M must be at least 4")
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    big = float(max(np.max(np.abs(s), initial=0.0), np.max(np.abs(s2), initial=0.0)))
    if lam * big >= spec.radius / 2:
        raise GuardViolated("lambda * K must stay below half the log-MGF radius")
    tail = coeff_tail_bound(M, abs(lam) * big, spec.growth_constant)
    A = _float_table(tuple(spec.kappa), M)
    s, s2 = np.broadcast_arrays(s, s2)
    total = np.zeros(s.shape)
    for m in range(M, 3, -1):
        ls = np.arange(2, m - 1)
        row = (A[m, ls] * s[..., None] ** (m - ls) * s2[..., None] ** ls).sum(axis=-1)
        total = total * 1.0 + lam ** m * row
    out = total[()] if total.ndim == 0 else total
    return SeriesValue(out, tail)


def eta_cov_closed(s, s2, lam: float, spec: DisorderSpec):
    """Closed form of E[eta(s) eta(s')] from phi and phi':

        exp(phi(lam(s+s')) - phi(lam s) - phi(lam s')) - 1 + lam^2 s s'
            - lam s phi'(lam s') - lam s' phi'(lam s)

    The quadratic parts are cancelled analytically before summing.
    """
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    a, b = lam * s, lam * s2
    phi, dphi = spec.log_mgf, spec.dlog_mgf
    g = phi(a + b) - phi(a) - phi(b)
    # phi(x) - x^2/2 and phi'(x) - x vanish to third / second order
    h = lambda x: phi(x) - 0.5 * x * x
    r = lambda x: dphi(x) - x
    out = (np.expm1(g) - g) + (h(a + b) - h(a) - h(b)) - a * r(b) - b * r(a)
    return out[()] if np.ndim(out) == 0 else out
