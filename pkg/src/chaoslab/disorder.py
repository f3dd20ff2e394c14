"""Disorder distributions, their log-MGF and cumulants, and white-noise coupling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, ndtri

from . import rng
from .core import LatticeDomain
from .errors import ChaosLabError, NotAnalytic, OutOfRadius

DEFAULT_M_MAX = 40
CERT_SAFETY = 2.0


def moments_to_cumulants(moments: Sequence) -> list:
    """Cumulants kappa_1..kappa_m from raw moments mu_1..mu_m.

    Uses kappa_n = mu_n - sum_{k<n} C(n-1, k-1) kappa_k mu_{n-k}; exact when the
    moments are Fractions.
    """
    mu = [1] + list(moments)
    kappa = [0] * len(mu)
    for n in range(1, len(mu)):
        acc = mu[n]
        for k in range(1, n):
            acc -= math.comb(n - 1, k - 1) * kappa[k] * mu[n - k]
        kappa[n] = acc
    return kappa[1:]


@dataclass(frozen=True, eq=False)
class DisorderSpec:
    """Law of a single disorder variable omega (mean 0, variance 1).

    ``kind`` is ``"gaussian"``, ``"rademacher"`` or ``"tabulated"`` (finite support
    ``values`` with probabilities ``probs``).
    """

    kind: str
    values: Optional[tuple] = None
    probs: Optional[tuple] = None
    m_max: int = DEFAULT_M_MAX
    radius: float = math.inf
    _cumulants: tuple = field(default=(), repr=False)

    @property
    def exact(self) -> bool:
        """Cumulants are exact rationals."""
        return self.kind in ("gaussian", "rademacher")

    @property
    def symmetric(self) -> bool:
        if self.kind in ("gaussian", "rademacher"):
            return True
        pairs = sorted(zip(self.values, self.probs))
        mirrored = sorted((-v, p) for v, p in pairs)
        return all(math.isclose(a[0], b[0], abs_tol=1e-12) and math.isclose(a[1], b[1], abs_tol=1e-12)
                   for a, b in zip(pairs, mirrored))

    @property
    def kappa(self) -> tuple:
        """Cached cumulants kappa_1..kappa_{m_max}."""
        return self._cumulants

    def cumulant(self, m: int):
        return self._cumulants[m - 1]

    @cached_property
    def growth_constant(self) -> float:
        """C with |kappa_m|/m! <= C^m for all m >= 2.

        For the closed-form kinds the supremum of (|kappa_m|/m!)^(1/m) is attained
        at m = 2 (Gaussian: kappa_m = 0 beyond 2; Rademacher: the root tends to
        2/pi < 2^-1/2), so the cached maximum is already certified.  Tabulated laws
        are only checked over the cached range and get a safety factor.
        """
        best = 0.0
        for m in range(2, self.m_max + 1):
            r = abs(float(Fraction(self.cumulant(m)) / math.factorial(m))) if self.exact else \
                abs(float(self.cumulant(m))) / math.factorial(m)
            if r > 0:
                best = max(best, r ** (1.0 / m))
        return best if self.exact else CERT_SAFETY * best

    def log_mgf(self, a):
        """phi(a) = log E[exp(a omega)], vectorised over ``a``."""
        a = np.asarray(a, dtype=float)
        if np.any(np.abs(a) >= self.radius):
            raise OutOfRadius(f"|a| must be below {self.radius}")
        if self.kind == "gaussian":
            out = 0.5 * a * a
        elif self.kind == "rademacher":
            b = np.abs(a)
            out = b + np.log1p(np.exp(-2.0 * b)) - math.log(2.0)
        else:
            v = np.asarray(self.values, dtype=float)
            lp = np.log(np.asarray(self.probs, dtype=float))
            out = logsumexp(lp + a[..., None] * v, axis=-1)
        return out[()] if out.ndim == 0 else out

    def dlog_mgf(self, a):
        """phi'(a) = E[omega exp(a omega - phi(a))]."""
        a = np.asarray(a, dtype=float)
        if np.any(np.abs(a) >= self.radius):
            raise OutOfRadius(f"|a| must be below {self.radius}")
        if self.kind == "gaussian":
            out = a * 1.0
        elif self.kind == "rademacher":
            out = np.tanh(a)
        else:
            v = np.asarray(self.values, dtype=float)
            lw = np.log(np.asarray(self.probs, dtype=float)) + a[..., None] * v
            w = np.exp(lw - logsumexp(lw, axis=-1, keepdims=True))
            out = (w * v).sum(axis=-1)
        return out[()] if out.ndim == 0 else out

    def sample(self, size: int, seed: int, start: int = 0) -> np.ndarray:
        """Word ``start + i`` of stream ``seed`` yields variate ``i``."""
        u = rng.uniforms(seed, size, start)
        return self._from_uniforms(u)

    def _from_uniforms(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "gaussian":
            return ndtri(u)
        if self.kind == "rademacher":
            return np.where(u < 0.5, -1.0, 1.0)
        cdf = np.cumsum(np.asarray(self.probs, dtype=float))
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="right")
        return np.asarray(self.values, dtype=float)[np.minimum(idx, len(cdf) - 1)]

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Support points and probabilities (finite-support kinds only)."""
        if self.kind == "gaussian":
            raise ChaosLabError("gaussian disorder has no finite support")
        if self.kind == "rademacher":
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        return np.asarray(self.values, dtype=float), np.asarray(self.probs, dtype=float)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "m_max": self.m_max}
        if self.kind == "tabulated":
            out.update(values=list(self.values), probs=list(self.probs))
        return out


def _exact_moments(values, probs, m_max) -> list:
    return [sum(p * v ** m for v, p in zip(values, probs)) for m in range(1, m_max + 1)]


def make_disorder(kind: str = "gaussian", values=None, probs=None, m_max: int = DEFAULT_M_MAX,
                  tol: float = 1e-9) -> DisorderSpec:
    """Construct a disorder law, computing and checking its cumulants.

    Raises ValueError if the law is not centred with unit variance.
    """
    if m_max < 2:
        raise ValueError("m_max must be at least 2")
    if kind == "gaussian":
        kappa = [Fraction(0), Fraction(1)] + [Fraction(0)] * (m_max - 2)
    elif kind == "rademacher":
        kappa = moments_to_cumulants(_exact_moments([Fraction(-1), Fraction(1)],
                                                    [Fraction(1, 2)] * 2, m_max))
    elif kind == "tabulated":
        if values is None or probs is None or len(values) != len(probs) or not values:
            raise ValueError("tabulated disorder needs matching values and probs")
        if any(p <= 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=tol):
            raise ValueError("probabilities must be positive and sum to 1")
        fv = [Fraction(float(v)) for v in values]
        fp = [Fraction(float(p)) for p in probs]
        total = sum(fp)
        fp = [p / total for p in fp]
        kappa = [float(k) for k in moments_to_cumulants(_exact_moments(fv, fp, m_max))]
        values, probs = tuple(float(v) for v in values), tuple(float(p) for p in probs)
    else:
        raise ValueError(f"unknown disorder kind {kind!r}")
    if abs(float(kappa[0])) > tol or abs(float(kappa[1]) - 1.0) > tol:
        raise ValueError(f"disorder must have mean 0 and variance 1 (got {float(kappa[0])}, {float(kappa[1])})")
    spec = DisorderSpec(kind, values, probs, m_max, math.inf, tuple(kappa))
    if not spec.growth_constant > 0 or not math.isfinite(spec.growth_constant):
        raise NotAnalytic("cumulant growth constant could not be certified")
    return spec


def log_mgf(spec: DisorderSpec, a):
    return spec.log_mgf(a)


def cumulants(spec: DisorderSpec, m_max: int) -> list:
    """kappa_1..kappa_{m_max}; extends the cache by recomputation when needed."""
    if m_max < 2:
        raise ValueError("m_max must be at least 2")
    if m_max > spec.m_max:
        spec = make_disorder(spec.kind, spec.values, spec.probs, m_max)
    return list(spec.kappa[:m_max])


@dataclass(frozen=True, eq=False)
class DisorderField:
    domain: LatticeDomain
    values: np.ndarray
    seed: int
    spec: DisorderSpec

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class WhiteNoiseField:
    domain: LatticeDomain
    increments: np.ndarray


def sample_disorder(spec: DisorderSpec, domain: LatticeDomain, seed: int) -> DisorderField:
    """i.i.d. field; site i's value depends only on (seed, i)."""
    vals = spec.sample(domain.n, seed)
    vals.setflags(write=False)
    return DisorderField(domain, vals, int(seed), spec)


def field_from_values(spec: DisorderSpec, domain: LatticeDomain, values, seed: int = -1) -> DisorderField:
    vals = np.array(values, dtype=float)
    if vals.shape != (domain.n,):
        raise ValueError("field length must equal the site count")
    vals.setflags(write=False)
    return DisorderField(domain, vals, seed, spec)


def couple_white_noise(fld: DisorderField) -> WhiteNoiseField:
    """Cell increments W(cell_x) = delta^(d/2) * omega_x."""
    scale = fld.domain.delta ** (fld.domain.d / 2)
    return WhiteNoiseField(fld.domain, scale * np.asarray(fld.values))


def fresh_white_noise(domain: LatticeDomain, seed: int) -> WhiteNoiseField:
    """Independent Gaussian increments with variance equal to the cell volume delta^d."""
    scale = domain.delta ** (domain.d / 2)
    return WhiteNoiseField(domain, scale * rng.normals(seed, domain.n))
