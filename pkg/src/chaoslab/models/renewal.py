"""Renewal pinning model: sigma_x = 1 when x is a renewal epoch."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import zeta

from .. import rng
from ..core import LatticeDomain
from .base import SpinModel
from .exact import poly_mul


def renewal_mass(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inter-arrival law K(j) = j^-(1+alpha)/zeta(1+alpha), its tail and u.

    Returns (K, Kbar, u) indexed 0..n with K[0] = 0, Kbar[m] = P(tau_1 > m) and
    u[m] = P(m is a renewal epoch), u[0] = 1.
    """
    j = np.arange(n + 1, dtype=float)
    K = np.zeros(n + 1)
    K[1:] = j[1:] ** (-(1.0 + alpha)) / zeta(1.0 + alpha)
    Kbar = np.clip(1.0 - np.cumsum(K), 0.0, None)
    u = np.zeros(n + 1)
    u[0] = 1.0
    for m in range(1, n + 1):
        u[m] = np.dot(K[1:m + 1], u[m - 1::-1])
    return K, Kbar, u


def default_c_alpha(alpha: float) -> float:
    """Constant in u(n) ~ C n^(alpha-1) for the law above."""
    return alpha * math.sin(math.pi * alpha) * zeta(1.0 + alpha) / math.pi


class RenewalPinningModel(SpinModel):
    """Free-boundary renewal on the 1-d lattice, started one step left of the first site.

    gamma = 1 - alpha; spins take values in {0, 1}.
    """

    kind = "renewal"
    binary = True
    bound = 1.0

    def __init__(self, domain: LatticeDomain, alpha: float = 0.8, c_alpha: float | None = None):
        if domain.d != 1:
            raise ValueError("the renewal model lives in d = 1")
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.domain = domain
        self.alpha = float(alpha)
        self.gamma = 1.0 - self.alpha
        self.c_alpha = default_c_alpha(alpha) if c_alpha is None else float(c_alpha)
        self.K, self.Kbar, self.u = renewal_mass(domain.n, self.alpha)
        self.origin = float(domain.lower[0])

    @property
    def values(self) -> np.ndarray:
        return np.array([0.0, 1.0])

    @property
    def centered(self) -> bool:
        return False

    def _moment(self, sites, powers) -> float:
        pos = np.asarray(sites) + 1
        gaps = np.diff(np.concatenate([[0], pos]))
        return float(np.prod(self.u[gaps]))

    def subset_moments(self, subsets: np.ndarray) -> np.ndarray:
        subsets = np.sort(np.asarray(subsets, dtype=np.int64), axis=1)
        if subsets.shape[1] == 0:
            return np.ones(subsets.shape[0])
        pos = subsets + 1
        gaps = np.diff(np.concatenate([np.zeros((len(pos), 1), np.int64), pos], axis=1), axis=1)
        return np.prod(self.u[gaps], axis=1)

    def expect_product(self, G: np.ndarray) -> np.ndarray:
        """E[prod_x G[x, sigma_x]]; G of shape (n, 2) or (n, 2, P), state 1 = renewal."""
        G = np.asarray(G, dtype=float)
        scalar = G.ndim == 2
        if scalar:
            G = G[..., None]
        n, _, P = G.shape
        # A[s] = z(s) * prod_{s < x < t} G_x(0); slot 0 is the origin
        A = np.zeros((n + 1, P))
        A[0, 0] = 1.0
        for t in range(1, n + 1):
            z = poly_mul((self.K[t - np.arange(t)][:, None] * A[:t]).sum(axis=0), G[t - 1, 1])
            A[:t] = poly_mul(A[:t], G[t - 1, 0][None])
            A[t] = z
        out = (self.Kbar[n - np.arange(n + 1)][:, None] * A).sum(axis=0)
        return float(out[0]) if scalar else out

    def sample(self, seed: int, count: int, start: int = 0) -> np.ndarray:
        n = self.n
        u = rng.uniform_matrix(seed, count, n, row_start=start)
        cdf = np.cumsum(self.K[1:])
        pos = np.zeros(count, dtype=np.int64)
        out = np.zeros((count, n))
        for step in range(n):
            jump = np.searchsorted(cdf, u[:, step], side="right") + 1
            pos = pos + jump
            alive = pos <= n
            if not alive.any():
                break
            out[np.nonzero(alive)[0], pos[alive] - 1] = 1.0
            pos[~alive] = n + 1
        return out

    @property
    def has_limit(self) -> bool:
        return True

    def psi_limit(self, points) -> np.ndarray:
        """prod over ordered gaps (from the left wall) of C_alpha * gap^-(1-alpha)."""
        pts = self._points(points)[..., 0]
        x = np.sort(pts, axis=-1)
        gaps = np.diff(np.concatenate([np.full(x.shape[:-1] + (1,), self.origin), x], axis=-1), axis=-1)
        with np.errstate(divide="ignore"):
            return np.prod(self.c_alpha * gaps ** (-self.gamma), axis=-1)

    def describe(self) -> dict:
        out = super().describe()
        out.update(alpha=self.alpha, c_alpha=self.c_alpha)
        return out
