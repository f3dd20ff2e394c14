"""Finite-alphabet spin chain solved exactly by transfer matrices."""

from __future__ import annotations

import itertools
from typing import Optional, Sequence

import numpy as np

from .. import rng
from ..core import LatticeDomain
from ..errors import MethodUnavailable
from .base import SpinModel

ENUM_CAP = 2**20


def poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Truncated product of coefficient arrays along the last axis (broadcasting)."""
    P = a.shape[-1]
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.zeros(shape, dtype=np.result_type(a, b))
    for i in range(P):
        out[..., i:] += a[..., i:i + 1] * b[..., :P - i]
    return out


def chain_expect(T: np.ndarray, w: np.ndarray, G: np.ndarray) -> np.ndarray:
    """E[prod_i G_i(sigma_i)] for the chain with pair weights T and site weights w.

    ``G`` has shape (n, q, P): per-site, per-state polynomials in an auxiliary
    variable with P coefficients (P = 1 for plain numbers).  Returns the P
    coefficients of the expectation.
    """
    n, q, P = G.shape
    ones = np.zeros((n, q, P))
    ones[..., 0] = 1.0
    num = _chain(T, w, G)
    den = _chain(T, w, ones)
    return num[0] / den[0][0] * np.exp(num[1] - den[1])


def _chain(T, w, G):
    vec = w[:, None] * G[0]
    logscale = 0.0
    for i in range(1, G.shape[0]):
        vec = T.T @ vec
        vec = poly_mul(vec * w[:, None], G[i])
        m = np.max(np.abs(vec))
        if m > 0:
            vec = vec / m
            logscale += np.log(m)
    return vec.sum(axis=0), logscale


class ExactEnumModel(SpinModel):
    """Nearest-neighbour chain over the sites in id order.

    P(sigma) is proportional to prod_i w(sigma_i) * exp(J * sum_i sigma_i sigma_{i+1}),
    with sigma_i in a finite alphabet.
    """

    kind = "exact-enum"

    def __init__(self, domain: LatticeDomain, values: Sequence[float] = (-1.0, 1.0),
                 weights: Optional[Sequence[float]] = None, coupling: float = 0.0,
                 gamma: float = 0.2, max_sites: int = 16):
        if domain.n > max_sites:
            raise MethodUnavailable(f"{domain.n} sites exceed the enumeration cap {max_sites}")
        self.domain = domain
        self._values = np.asarray(values, dtype=float)
        if len(set(self._values.tolist())) != len(self._values):
            raise ValueError("spin alphabet must have distinct values")
        w = np.ones(len(self._values)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != self._values.shape or np.any(w <= 0):
            raise ValueError("weights must be positive, one per spin value")
        self.weights = w / w.sum()
        self.coupling = float(coupling)
        self.gamma = float(gamma)
        self.max_sites = max_sites
        self.T = np.exp(self.coupling * np.outer(self._values, self._values))
        self.bound = float(np.max(np.abs(self._values)))
        self.binary = set(self._values.tolist()) in ({-1.0, 1.0}, {0.0, 1.0})
        self.centered = bool(np.allclose(self.site_means(), 0.0, atol=1e-14))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def q(self) -> int:
        return len(self._values)

    def expect_product(self, G: np.ndarray) -> np.ndarray:
        """E[prod_i G[i, sigma_i]]; G of shape (n, q) or (n, q, P)."""
        G = np.asarray(G, dtype=float)
        scalar = G.ndim == 2
        if scalar:
            G = G[..., None]
        out = chain_expect(self.T, self.weights, G)
        return float(out[0]) if scalar else out

    def expect_pair_product(self, H: np.ndarray) -> np.ndarray:
        """E over two independent copies of prod_i H[i, sigma_i, sigma'_i]; H of shape (n, q, q[, P])."""
        H = np.asarray(H, dtype=float)
        scalar = H.ndim == 3
        if scalar:
            H = H[..., None]
        n, q, _, P = H.shape
        out = chain_expect(np.kron(self.T, self.T), np.kron(self.weights, self.weights),
                           H.reshape(n, q * q, P))
        return float(out[0]) if scalar else out

    def site_means(self) -> np.ndarray:
        return np.array([self._moment([x], [1]) for x in range(self.n)])

    def _moment(self, sites, powers) -> float:
        G = np.ones((self.n, self.q))
        for x, r in zip(sites, powers):
            G[x] = self._values ** r
        return self.expect_product(G)

    def subset_moments(self, subsets: np.ndarray) -> np.ndarray:
        subsets = np.asarray(subsets, dtype=np.int64)
        N = subsets.shape[0]
        if N == 0:
            return np.zeros(0)
        mask = np.zeros((N, self.n), dtype=bool)
        if subsets.shape[1]:
            np.put_along_axis(mask, subsets, True, axis=1)
        v = self._values
        # vectorised transfer-matrix sweep over all rows at once
        vec = self.weights * np.where(mask[:, :1], v, 1.0)
        logs = np.zeros(N)
        for i in range(1, self.n):
            vec = (vec @ self.T) * self.weights * np.where(mask[:, i:i + 1], v, 1.0)
            m = np.max(np.abs(vec), axis=1)
            m[m == 0] = 1.0
            vec /= m[:, None]
            logs += np.log(m)
        ones = np.ones((self.n, self.q, 1))
        norm, nlog = _chain(self.T, self.weights, ones)
        return vec.sum(axis=1) / norm[0] * np.exp(logs - nlog)

    def enumerate_configs(self) -> tuple[np.ndarray, np.ndarray]:
        """All q^n configurations and their probabilities (brute force)."""
        if self.q ** self.n > ENUM_CAP:
            raise MethodUnavailable("configuration space too large for enumeration")
        idx = np.array(list(itertools.product(range(self.q), repeat=self.n)), dtype=np.int64)
        idx = idx.reshape(-1, self.n)
        conf = self._values[idx]
        logw = np.log(self.weights)[idx].sum(axis=1)
        if self.n > 1:
            logw += self.coupling * (conf[:, 1:] * conf[:, :-1]).sum(axis=1)
        p = np.exp(logw - logw.max())
        return conf, p / p.sum()

    def sample(self, seed: int, count: int, start: int = 0) -> np.ndarray:
        u = rng.uniform_matrix(seed, count, self.n, row_start=start)
        # backward messages beta_i(a) = sum_b T[a,b] w_b beta_{i+1}(b)
        beta = np.ones((self.n, self.q))
        for i in range(self.n - 2, -1, -1):
            b = self.T @ (self.weights * beta[i + 1])
            beta[i] = b / b.sum()
        out = np.empty((count, self.n), dtype=np.int64)
        p0 = self.weights * beta[0]
        out[:, 0] = _draw(np.broadcast_to(p0 / p0.sum(), (count, self.q)), u[:, 0])
        for i in range(1, self.n):
            p = self.T[out[:, i - 1]] * (self.weights * beta[i])
            p /= p.sum(axis=1, keepdims=True)
            out[:, i] = _draw(p, u[:, i])
        return self._values[out]


def _draw(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=1)
    c[:, -1] = 1.0
    return (u[:, None] >= c).sum(axis=1)
