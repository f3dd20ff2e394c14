"""Common interface of reference spin measures."""

from __future__ import annotations

import abc
from typing import Optional, Sequence

import numpy as np

from ..core import LatticeDomain, nearest_sites
from ..errors import DegenerateDenominator, DuplicateSite, NotAvailable


def merge_powers(sites: Sequence[int], powers: Sequence[int]) -> tuple[list, list]:
    """Combine repeated sites (sigma_x^r sigma_x^r' = sigma_x^(r+r')) and drop zero powers."""
    if len(sites) != len(powers):
        raise ValueError("sites and powers must have equal length")
    acc: dict = {}
    for x, r in zip(sites, powers):
        if r < 0:
            raise ValueError("powers must be non-negative")
        acc[int(x)] = acc.get(int(x), 0) + int(r)
    keys = sorted(k for k, r in acc.items() if r > 0)
    return keys, [acc[k] for k in keys]


class SpinModel(abc.ABC):
    """Reference law of the spin field on a lattice domain.

    Subclasses provide ``_moment`` (mixed moments at distinct sites),
    ``subset_moments`` (vectorised first-power moments) and ``sample``.
    """

    domain: LatticeDomain
    gamma: float
    bound: float
    bounded: bool = True
    binary: bool = False
    centered: bool = False
    kind: str = "abstract"

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def values(self) -> Optional[np.ndarray]:
        """Finite spin alphabet, or None for continuous spins."""
        return None

    # ---------------------------------------------------------------- moments

    def correlation(self, sites: Sequence[int], powers: Optional[Sequence[int]] = None) -> float:
        """E[prod sigma_{x_i}^{r_i}] for distinct sites; all powers 1 by default."""
        sites = [int(x) for x in sites]
        powers = [1] * len(sites) if powers is None else [int(r) for r in powers]
        if len(sites) != len(powers):
            raise ValueError("sites and powers must have equal length")
        if len(set(sites)) != len(sites):
            raise DuplicateSite(f"sites {sites} are not distinct")
        for x in sites:
            if not 0 <= x < self.n:
                raise IndexError(f"site {x} out of range")
        keep = [(x, r) for x, r in zip(sites, powers) if r != 0]
        if any(r < 0 for _, r in keep):
            raise ValueError("powers must be non-negative")
        if not keep:
            return 1.0
        keep.sort()
        return float(self._moment([x for x, _ in keep], [r for _, r in keep]))

    def mixed_moment(self, sites: Sequence[int], powers: Sequence[int]) -> float:
        """Like ``correlation`` but repeated sites are merged first."""
        s, r = merge_powers(sites, powers)
        return self.correlation(s, r)

    @abc.abstractmethod
    def _moment(self, sites: list, powers: list) -> float:
        """Mixed moment at sorted distinct sites with positive powers."""

    @abc.abstractmethod
    def subset_moments(self, subsets: np.ndarray) -> np.ndarray:
        """E[prod_{x in row} sigma_x] for each row of an (N, k) array of distinct sites."""

    # ---------------------------------------------------------------- sampling

    @abc.abstractmethod
    def sample(self, seed: int, count: int, start: int = 0) -> np.ndarray:
        """(count, n) spin configurations; draw i depends only on (seed, start + i)."""

    # ---------------------------------------------------------------- scaling

    def psi_delta(self, points) -> np.ndarray:
        """Rescaled k-point correlation for points of shape (..., k, d) (or (..., k) when d = 1).

        Zero whenever two points share a nearest site.
        """
        pts = self._points(points)
        k = pts.shape[-2]
        sites = nearest_sites(self.domain, pts)
        flat = sites.reshape(-1, k)
        if k == 0:
            return np.ones(flat.shape[0]).reshape(pts.shape[:-2])
        srt = np.sort(flat, axis=1)
        distinct = np.all(srt[:, 1:] != srt[:, :-1], axis=1) if k > 1 else np.ones(len(srt), bool)
        out = np.zeros(len(srt))
        if distinct.any():
            out[distinct] = self.subset_moments(srt[distinct])
        out *= self.domain.delta ** (-k * self.gamma)
        return out.reshape(pts.shape[:-2])

    def psi_limit(self, points) -> np.ndarray:
        raise NotAvailable(f"{self.kind} model has no known continuum limit")

    @property
    def has_limit(self) -> bool:
        return False

    def _points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.domain.d == 1 and (pts.ndim == 1 or pts.shape[-1] != 1):
            pts = pts[..., None]
        if pts.ndim == 2:
            pts = pts[None]
        return pts

    # ---------------------------------------------------------------- mixed-moment ratio

    def a3_ratio(self, sites: Sequence[int], powers: Sequence[int]) -> float:
        """|E[prod sigma^r]| / |E[prod sigma^(r mod 2)]| (the constant C set to 1)."""
        if any(int(r) < 1 for r in powers):
            raise ValueError("a3_ratio needs powers >= 1")
        num = self.correlation(sites, powers)
        den = self.correlation(sites, [int(r) % 2 for r in powers])
        if den == 0.0:
            raise DegenerateDenominator(f"reduced moment vanishes at sites {list(sites)}")
        return abs(num) / abs(den)

    def describe(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "n_sites": self.n, "bound": self.bound,
                "bounded": self.bounded, "binary": self.binary}
