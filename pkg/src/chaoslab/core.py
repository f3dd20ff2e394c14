"""Lattice domains, site indexing and experiment configuration."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, EmptyDomain, OutsideDomain, Overflow

DEFAULT_SITE_CAP = 10**6
CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    """Sites of ``(lower, upper) ∩ (δZ)^d`` in lexicographic order.

    ``index`` holds the integer multi-indices ``j`` (coordinates ``j * delta``),
    ``counts`` the number of sites per axis and ``first`` the smallest index
    per axis.  Site ids are the row numbers of ``index``.
    """

    d: int
    lower: tuple
    upper: tuple
    delta: float
    first: tuple
    counts: tuple
    index: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.index.shape[0])

    @property
    def coords(self) -> np.ndarray:
        return self.index * self.delta

    def site_coords(self, site: int) -> np.ndarray:
        return self.index[site] * self.delta

    def cell_bounds(self, site: int) -> tuple:
        """Axis-aligned cube of side delta centred at ``site``."""
        c = self.site_coords(site)
        return c - self.delta / 2, c + self.delta / 2

    def cell_volumes(self) -> np.ndarray:
        """Volume of each site's nearest-site region inside the box.

        Interior sites own their full cube; boundary sites also own the strip
        between their cube and the box wall.
        """
        vol = np.ones(self.n)
        for a in range(self.d):
            lo = np.maximum(self.coords[:, a] - self.delta / 2, self.lower[a])
            hi = np.minimum(self.coords[:, a] + self.delta / 2, self.upper[a])
            j = self.index[:, a]
            lo = np.where(j == self.first[a], self.lower[a], lo)
            hi = np.where(j == self.first[a] + self.counts[a] - 1, self.upper[a], hi)
            vol *= hi - lo
        return vol

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((x > np.asarray(self.lower)) & (x < np.asarray(self.upper)), axis=-1)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "delta": self.delta,
            "n_sites": self.n,
            "counts": list(self.counts),
        }


def _axis_range(lo: float, hi: float, delta: float) -> tuple[int, int]:
    tol = 1e-9 * delta
    j0 = math.floor(lo / delta) - 1
    j1 = math.ceil(hi / delta) + 1
    inside = [j for j in range(j0, j1 + 1) if lo + tol < j * delta < hi - tol]
    if not inside:
        return 0, 0
    return inside[0], len(inside)


def build_domain(d: int, box: Sequence, delta: float, site_cap: int = DEFAULT_SITE_CAP) -> LatticeDomain:
    """Lattice approximation of the open box ``box = (lower, upper)`` with spacing ``delta``.

    Scalars are accepted for ``lower``/``upper`` and broadcast to ``d`` axes.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    if not delta > 0:
        raise ValueError("spacing must be positive")
    lower, upper = box
    lower = tuple(float(v) for v in np.broadcast_to(np.asarray(lower, dtype=float), (d,)))
    upper = tuple(float(v) for v in np.broadcast_to(np.asarray(upper, dtype=float), (d,)))
    if any(hi <= lo for lo, hi in zip(lower, upper)):
        raise EmptyDomain(f"box {lower}..{upper} is empty")
    first, counts = zip(*(_axis_range(lo, hi, delta) for lo, hi in zip(lower, upper)))
    total = math.prod(counts)
    if total == 0:
        raise EmptyDomain(f"no point of the {delta}-grid lies inside {lower}..{upper}")
    if total > site_cap:
        raise Overflow(f"{total} sites exceed the cap {site_cap}")
    axes = [range(f, f + c) for f, c in zip(first, counts)]
    index = np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(total, d)
    index.setflags(write=False)
    return LatticeDomain(d, lower, upper, float(delta), tuple(first), tuple(counts), index)


def nearest_sites(domain: LatticeDomain, x) -> np.ndarray:
    """Vectorised nearest-site map for points ``x`` of shape (..., d).

    Ties go to the lower coordinate on every axis, which yields the
    lexicographically smallest of the equidistant sites.
    """
    x = np.asarray(x, dtype=float)
    if domain.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != domain.d:
        raise ValueError(f"points must have {domain.d} coordinates")
    if not np.all(domain.contains(x.reshape(-1, domain.d))):
        raise OutsideDomain("point outside the domain")
    j = np.ceil(x / domain.delta - 0.5).astype(np.int64)
    first = np.asarray(domain.first)
    last = first + np.asarray(domain.counts) - 1
    j = np.clip(j, first, last) - first
    strides = np.ones(domain.d, dtype=np.int64)
    for a in range(domain.d - 2, -1, -1):
        strides[a] = strides[a + 1] * domain.counts[a + 1]
    return (j * strides).sum(axis=-1)


def nearest_site(domain: LatticeDomain, x) -> int:
    """Site id closest to the single point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return int(nearest_sites(domain, x.reshape(1, domain.d))[0])


def lambda_delta(lambda_hat: float, delta: float, d: int, gamma: float) -> float:
    """Intermediate disorder strength ``lambda_hat * delta**(d/2 - gamma)``."""
    return lambda_hat * delta ** (d / 2 - gamma)


def relevance_gate(d: int, gamma: float) -> Optional[str]:
    """Diagnostic string when gamma >= d/4 (disorder not relevant enough), else None."""
    if gamma < d / 4:
        return None
    return (f"relevance gate failed: gamma={gamma} must satisfy gamma < d/4 = {d / 4} "
            "(needed for the Wick-normalized limit); pass --allow-irrelevant to override")


# ---------------------------------------------------------------- configuration

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainConfig(_Strict):
    d: int = Field(1, ge=1)
    lower: Union[float, list[float]] = 0.0
    upper: Union[float, list[float]] = 1.0


class GaussianFieldConfig(_Strict):
    kind: Literal["gaussian-field"]
    repair_eps: float = Field(0.5, gt=0)
    k_sigmas: float = Field(6.0, gt=0)


class ExactEnumConfig(_Strict):
    kind: Literal["exact-enum"]
    values: list[float] = [-1.0, 1.0]
    weights: Optional[list[float]] = None
    coupling: float = 0.0
    max_sites: int = Field(16, ge=1)


class RenewalConfig(_Strict):
    kind: Literal["renewal"]
    alpha: Optional[float] = None
    c_alpha: Optional[float] = None


class DisorderConfig(_Strict):
    kind: Literal["gaussian", "rademacher", "tabulated"] = "gaussian"
    values: Optional[list[float]] = None
    probs: Optional[list[float]] = None
    m_max: int = Field(40, ge=2)


class OptionsConfig(_Strict):
    method: Literal["exact", "mc"] = "exact"
    spin_samples: int = Field(20000, ge=1)
    quadrature_nodes: int = Field(100000, ge=1)
    max_k: int = Field(8, ge=1)
    a2_threshold: float = Field(0.05, gt=0)
    a3_tuples: int = Field(10000, ge=1)
    a3_max_power: int = Field(6, ge=1)
    subset_budget: int = Field(20_000_000, ge=1)
    pair_samples: int = Field(200000, ge=1)
    m_list: Optional[list[int]] = None


class ExperimentConfig(_Strict):
    """Declarative description of one experiment (JSON schema version 1)."""

    schema_version: Literal[1] = 1
    model: Union[GaussianFieldConfig, ExactEnumConfig, RenewalConfig] = Field(discriminator="kind")
    disorder: DisorderConfig = DisorderConfig()
    domain: DomainConfig = DomainConfig()
    deltas: list[float] = Field(min_length=1)
    lambda_hat: float = Field(gt=0)
    gamma: float = Field(gt=0)
    truncation_order: int = Field(4, ge=1)
    replicas: int = Field(100, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "out"
    allow_irrelevant: bool = False
    options: OptionsConfig = OptionsConfig()

    @model_validator(mode="after")
    def _check(self):
        if any(not dl > 0 for dl in self.deltas):
            raise ValueError("deltas must be positive")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("deltas must be strictly decreasing")
        if not self.allow_irrelevant:
            msg = relevance_gate(self.domain.d, self.gamma)
            if msg:
                raise ValueError(msg)
        return self

    def lambda_delta(self, delta: float) -> float:
        return lambda_delta(self.lambda_hat, delta, self.domain.d, self.gamma)

    def box(self) -> tuple:
        return (self.domain.lower, self.domain.upper)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict, **overrides) -> ExperimentConfig:
    """Validate a config mapping; raise ConfigError with location-specific messages."""
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_validation(err)) from None


def load_config(path: str, **overrides) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data, **overrides)


@dataclass
class ResultRecord:
    """Serialized output of a run.

    ``rows`` hold per-(delta, replica) scalars, each carrying its derived seed.
    ``timing`` is kept out of the deterministic report body.
    """

    command: str
    config: dict
    master_seed: int
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "command": self.command,
            "master_seed": self.master_seed,
            "config": self.config,
            "aggregates": self.aggregates,
            "rows": self.rows,
        }
        if include_timing:
            out["timing"] = self.timing
        return out
