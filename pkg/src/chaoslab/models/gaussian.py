"""Centred Gaussian lattice field with power-law covariance."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from .. import rng
from ..core import LatticeDomain
from ..errors import PowerOverflow, SingularInput
from .base import SpinModel

WICK_CAP = 16


def hafnian_rows(M: np.ndarray, cols: list) -> np.ndarray:
    """Wick pairing sum over the index columns ``cols`` (each an (N,) int array).

    Returns, for each row r, sum over perfect matchings of prod M[cols[a][r], cols[b][r]].
    """
    k = len(cols)
    if k == 0:
        return np.ones(1)
    if k % 2:
        return np.zeros(len(cols[0]))
    if k == 2:
        return M[cols[0], cols[1]]
    first, rest = cols[0], cols[1:]
    total = np.zeros(len(first))
    for j in range(len(rest)):
        others = rest[:j] + rest[j + 1:]
        total += M[first, rest[j]] * hafnian_rows(M, others)
    return total


def hafnian_kernel(pairs: np.ndarray) -> np.ndarray:
    """Pairing sum for a precomputed pair-weight tensor of shape (N, k, k)."""
    N, k, _ = pairs.shape
    if k == 0:
        return np.ones(N)
    if k % 2:
        return np.zeros(N)

    def rec(idx):
        if not idx:
            return np.ones(N)
        i, rest = idx[0], idx[1:]
        acc = np.zeros(N)
        for t, j in enumerate(rest):
            acc += pairs[:, i, j] * rec(rest[:t] + rest[t + 1:])
        return acc

    return rec(tuple(range(k)))


def wick_multiset(C: np.ndarray, sites: list, powers: list) -> float:
    """E[prod sigma_{x_i}^{r_i}] for a centred Gaussian vector with covariance C."""
    total = sum(powers)
    if total > WICK_CAP:
        raise PowerOverflow(f"total power {total} exceeds the Wick cap {WICK_CAP}")
    if total % 2:
        return 0.0
    sub = C[np.ix_(sites, sites)]

    @lru_cache(maxsize=None)
    def rec(state: tuple) -> float:
        try:
            i = next(t for t, r in enumerate(state) if r > 0)
        except StopIteration:
            return 1.0
        st = list(state)
        st[i] -= 1
        acc = 0.0
        for j, r in enumerate(st):
            if r == 0:
                continue
            nxt = st.copy()
            nxt[j] -= 1
            acc += r * sub[i, j] * rec(tuple(nxt))
        return acc

    return float(rec(tuple(powers)))


def power_law_covariance(domain: LatticeDomain, gamma: float) -> np.ndarray:
    """delta^(2 gamma) * max(|x - y|, delta)^(-2 gamma) between all sites."""
    X = domain.coords
    dist = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1))
    dl = domain.delta
    return (np.maximum(dist, dl) / dl) ** (-2.0 * gamma)


def repair_psd(C: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Clip negative eigenvalues at zero.

    Returns (repaired matrix, factor L with L L^T = repaired, spectral norm of the
    perturbation, i.e. the largest clipped eigenvalue magnitude).  The diagonal
    is left as it comes out of the clipping (slightly above 1 for this kernel).
    """
    vals, vecs = np.linalg.eigh(C)
    clipped = np.clip(vals, 0.0, None)
    L = vecs * np.sqrt(clipped)
    R = L @ L.T
    R = 0.5 * (R + R.T)
    return R, L, float(max(0.0, -vals.min()))


class GaussianFieldModel(SpinModel):
    """Centred Gaussian spins, Cov = delta^(2g) max(|x-y|, delta)^(-2g), PSD-repaired.

    After repair the site variance is ``cov[x, x]`` (about 1.05 on the 1-d lattice).

    Spins are unbounded; ``bound`` is the effective cut-off ``k_sigmas`` standard
    deviations used for the eta-series guard, with ``truncation_probability``
    bounding the chance that any spin exceeds it.
    """

    kind = "gaussian-field"
    bounded = False
    centered = True

    def __init__(self, domain: LatticeDomain, gamma: float, repair_eps: float = 0.5,
                 k_sigmas: float = 6.0):
        self.domain = domain
        self.gamma = float(gamma)
        self.raw_cov = power_law_covariance(domain, gamma)
        self.cov, self.factor, self.repair_norm = repair_psd(self.raw_cov)
        if self.repair_norm > repair_eps:
            raise ValueError(f"PSD repair perturbation {self.repair_norm:.3g} exceeds eps={repair_eps}")
        self.k_sigmas = float(k_sigmas)
        self.bound = self.k_sigmas

    @property
    def truncation_probability(self) -> float:
        """Union bound on P(|sigma_x| > K_delta for some x)."""
        return min(1.0, self.n * float(erfc(self.k_sigmas / math.sqrt(2.0))))

    def _moment(self, sites, powers) -> float:
        return wick_multiset(self.cov, sites, powers)

    def subset_moments(self, subsets: np.ndarray) -> np.ndarray:
        subsets = np.asarray(subsets, dtype=np.int64)
        if subsets.shape[1] > WICK_CAP:
            raise PowerOverflow(f"{subsets.shape[1]} spins exceed the Wick cap {WICK_CAP}")
        return hafnian_rows(self.cov, [subsets[:, a] for a in range(subsets.shape[1])]) * \
            np.ones(subsets.shape[0])

    def sample(self, seed: int, count: int, start: int = 0) -> np.ndarray:
        z = rng.normal_matrix(seed, count, self.n, row_start=start)
        return z @ self.factor.T

    @property
    def has_limit(self) -> bool:
        return True

    def psi_limit(self, points) -> np.ndarray:
        """Wick sum of Riesz kernels |x_i - x_j|^(-2 gamma) over pairings (0 for odd k)."""
        pts = self._points(points)
        lead, k = pts.shape[:-2], pts.shape[-2]
        flat = pts.reshape(-1, k, self.domain.d)
        if k % 2:
            return np.zeros(lead)
        if k == 0:
            return np.ones(lead)
        dist = np.sqrt(((flat[:, :, None, :] - flat[:, None, :, :]) ** 2).sum(axis=-1))
        iu = np.triu_indices(k, 1)
        if np.any(dist[:, iu[0], iu[1]] == 0.0):
            raise SingularInput("coincident points in the Riesz kernel")
        with np.errstate(divide="ignore"):
            ker = dist ** (-2.0 * self.gamma)
        return hafnian_kernel(ker).reshape(lead)

    def describe(self) -> dict:
        out = super().describe()
        out.update(repair_norm=self.repair_norm, k_sigmas=self.k_sigmas,
                   truncation_probability=self.truncation_probability)
        return out
