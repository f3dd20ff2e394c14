"""Partition functions, the truncated polynomial chaos expansion and its chaos approximations."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammainc

from .disorder import DisorderField, DisorderSpec, WhiteNoiseField
from .errors import (AsymmetricDisorder, BudgetExceeded, MethodUnavailable, NotAvailable,
                     NotBinary, QuadratureBudget)
from .models import GaussianFieldModel, SpinModel

DEFAULT_BUDGET = 20_000_000
MC_CHUNK = 4096


@dataclass
class PartitionResult:
    value: float
    method: str
    stderr: Optional[float] = None
    samples: int = 0

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "stderr": self.stderr,
                "samples": self.samples}


@dataclass
class ExpansionBreakdown:
    """Per-order main terms T_k, error terms E_k and the remainder R_M."""

    M: int
    main: np.ndarray
    error: Optional[np.ndarray]
    remainder: Optional[float]
    z_wick: Optional[float]
    method: str

    @property
    def truncated(self) -> float:
        """1 + sum_{k<=M} (T_k + E_k); the error terms are omitted when unknown."""
        err = 0.0 if self.error is None else float(np.sum(self.error[1:]))
        return 1.0 + float(np.sum(self.main[1:])) + err

    @property
    def total(self) -> Optional[float]:
        if self.remainder is None:
            return None
        return self.truncated + self.remainder

    def rows(self):
        cum = 1.0
        for k in range(1, self.M + 1):
            e = float("nan") if self.error is None else float(self.error[k])
            cum += float(self.main[k]) + (0.0 if self.error is None else e)
            yield k, float(self.main[k]), e, cum


@dataclass
class ChaosApprox:
    M: int
    terms: np.ndarray  # terms[0] == 1

    @property
    def total(self):
        return self.terms.sum(axis=0)


# ------------------------------------------------------------------ helpers


def _finite_state(model: SpinModel) -> bool:
    return hasattr(model, "expect_product") and model.values is not None


def site_weights(values: np.ndarray, omega: np.ndarray, lam: float) -> np.ndarray:
    """lam * omega_x * v_a as an (n, q) array."""
    return lam * np.outer(omega, values)


def eta(sigma, omega, lam: float, spec: DisorderSpec):
    """eta = exp(lam w s - phi(lam s)) - 1 - lam w s, with the linear part cancelled exactly."""
    sigma = np.asarray(sigma, dtype=float)
    omega = np.asarray(omega, dtype=float)
    ph = spec.log_mgf(lam * sigma)
    g = lam * omega * sigma - ph
    return (np.expm1(g) - g) - ph


def elementary_symmetric(g: np.ndarray, kmax: int) -> np.ndarray:
    """e_0..e_kmax of the last axis of ``g`` (shape (..., n) -> (..., kmax+1))."""
    g = np.asarray(g, dtype=float)
    e = np.zeros(g.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for i in range(g.shape[-1]):
        gi = g[..., i:i + 1]
        e[..., 1:] = e[..., 1:] + gi * e[..., :-1]
    return e


def combinations_chunks(n: int, k: int, chunk: int = 200_000):
    """Yield (m, k) int arrays of the k-subsets of range(n) in lexicographic order."""
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.int64).reshape(len(block), k)


def check_budget(n: int, M: int, budget: int) -> None:
    total = 0
    for k in range(1, M + 1):
        total += math.comb(n, k)
        if total > budget:
            raise BudgetExceeded(f"{total} subsets up to order {k} exceed the budget {budget}",
                                 max_order=k - 1)


def subset_sums(n: int, M: int, weight: Callable, W: np.ndarray, budget: int = DEFAULT_BUDGET,
                skip_odd: bool = False) -> np.ndarray:
    """sum over k-subsets S of weight(S) * prod_{x in S} W[..., x], for k = 0..M.

    ``W`` has shape (R, n) (R replicas); returns (M+1, R).
    """
    check_budget(n, M, budget)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    out = np.zeros((M + 1, W.shape[0]))
    out[0] = 1.0
    for k in range(1, M + 1):
        if skip_odd and k % 2:
            continue
        acc = np.zeros(W.shape[0])
        for S in combinations_chunks(n, k):
            w = weight(S)
            keep = w != 0
            if not keep.any():
                continue
            S, w = S[keep], w[keep]
            prod = W[:, S[:, 0]].copy()
            for a in range(1, k):
                prod *= W[:, S[:, a]]
            acc += prod @ w
        out[k] = acc
    return out


# ------------------------------------------------------------------ partition functions


def sample_spins(model: SpinModel, seed: int, count: int, start: int = 0) -> np.ndarray:
    return model.sample(seed, count, start)


def _mc_average(model: SpinModel, seed: int, samples: int, fn) -> PartitionResult:
    total = 0.0
    total2 = 0.0
    for start in range(0, samples, MC_CHUNK):
        cnt = min(MC_CHUNK, samples - start)
        vals = fn(model.sample(seed, cnt, start))
        total += float(vals.sum())
        total2 += float((vals * vals).sum())
    mean = total / samples
    var = max(total2 / samples - mean * mean, 0.0)
    return PartitionResult(mean, "monte-carlo", math.sqrt(var / max(samples - 1, 1)), samples)


def partition_raw(model: SpinModel, fld: DisorderField, lam: float, method: str = "exact",
                  seed: int = 0, samples: int = 20000) -> PartitionResult:
    """Z = E^ref[exp(sum_x lam omega_x sigma_x)]."""
    omega = np.asarray(fld.values, dtype=float)
    if method == "exact":
        if _finite_state(model):
            G = np.exp(site_weights(model.values, omega, lam))
            return PartitionResult(float(model.expect_product(G)), "exact-enumeration")
        if isinstance(model, GaussianFieldModel):
            b = lam * omega
            return PartitionResult(float(np.exp(0.5 * b @ model.cov @ b)), "closed-form")
        raise MethodUnavailable(f"no exact partition function for {model.kind}")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    return _mc_average(model, seed, samples, lambda S: np.exp(lam * S @ omega))


def gaussian_wick_closed(cov: np.ndarray, omega: np.ndarray, lam: float) -> float:
    """Z-hat for Gaussian spins (covariance cov) and Gaussian disorder:
    det(I + lam^2 C)^(-1/2) exp(lam^2/2 w^T C (I + lam^2 C)^(-1) w)."""
    n = len(omega)
    A = np.eye(n) + lam * lam * cov
    sign, logdet = np.linalg.slogdet(A)
    quad = omega @ cov @ np.linalg.solve(A, omega)
    return float(np.exp(-0.5 * logdet + 0.5 * lam * lam * quad))


def partition_wick(model: SpinModel, fld: DisorderField, lam: float, spec: DisorderSpec,
                   method: str = "exact", seed: int = 0, samples: int = 20000) -> PartitionResult:
    """Z-hat = E^ref[exp(sum_x lam omega_x sigma_x - phi(lam sigma_x))]; E[Z-hat] = 1."""
    omega = np.asarray(fld.values, dtype=float)
    if method == "exact":
        if _finite_state(model):
            v = model.values
            G = np.exp(site_weights(v, omega, lam) - spec.log_mgf(lam * v)[None, :])
            return PartitionResult(float(model.expect_product(G)), "exact-enumeration")
        if isinstance(model, GaussianFieldModel) and spec.kind == "gaussian":
            return PartitionResult(gaussian_wick_closed(model.cov, omega, lam), "closed-form")
        raise MethodUnavailable(f"no exact Wick partition function for {model.kind} with {spec.kind} disorder")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")

    def fn(S):
        return np.exp(lam * S @ omega - spec.log_mgf(lam * S).sum(axis=1))

    return _mc_average(model, seed, samples, fn)


def binary_chain_check(model: SpinModel, fld: DisorderField, lam: float,
                       spec: DisorderSpec) -> tuple[float, float]:
    """(Z-hat, exp(sum log cosh(lam w) - n phi(lam)) * E[prod (1 + sigma tanh(lam w))])."""
    vals = model.values
    if vals is None or sorted(np.asarray(vals).tolist()) != [-1.0, 1.0]:
        raise NotBinary("binary chain needs spins in {-1, +1}")
    if not spec.symmetric:
        raise AsymmetricDisorder("binary chain needs an even log-MGF")
    zhat = partition_wick(model, fld, lam, spec).value
    omega = np.asarray(fld.values, dtype=float)
    xi = np.tanh(lam * omega)
    G = 1.0 + np.outer(xi, vals)
    ztilde = model.expect_product(G)
    a = np.abs(lam * omega)
    logcosh = a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)
    pref = np.exp(logcosh.sum() - len(omega) * float(spec.log_mgf(lam)))
    return zhat, float(pref * ztilde)


# ------------------------------------------------------------------ truncated expansion


def _poly_sites(values: np.ndarray, per_site: np.ndarray, P: int) -> np.ndarray:
    """(n, q, P) array for prod (1 + t * per_site[x, a])."""
    n, q = per_site.shape
    G = np.zeros((n, q, P))
    G[..., 0] = 1.0
    if P > 1:
        G[..., 1] = per_site
    return G


def truncated_expansion(model: SpinModel, fld: DisorderField, lam: float, spec: DisorderSpec,
                        M: int, method: str = "exact", seed: int = 0, samples: int = 20000,
                        budget: int = DEFAULT_BUDGET) -> ExpansionBreakdown:
    """Split Z-hat - 1 into main terms T_k, error terms E_k (k <= M) and remainder R_M.

    T_k = lam^k sum_{|S|=k} E[sigma_S] omega_S.  T_k + E_k is the order-k part of
    E[prod_x (1 + lam omega_x sigma_x + eta_x)].  Under Monte Carlo the remainder is
    not formed (it would be a difference of noisy numbers).
    """
    n = model.n
    if M > n:
        raise ValueError(f"M = {M} exceeds the site count {n}")
    omega = np.asarray(fld.values, dtype=float)
    P = M + 1
    if _finite_state(model) and method == "exact":
        v = model.values
        lin = site_weights(v, omega, lam)
        et = eta(v[None, :], omega[:, None], lam, spec)
        main = model.expect_product(_poly_sites(v, lin, P))
        full = model.expect_product(_poly_sites(v, lin + et, P))
        zhat = partition_wick(model, fld, lam, spec).value
        main[0] = full[0] = 1.0
        err = full - main
        err[0] = 0.0
        rem = zhat - float(np.sum(full))
        return ExpansionBreakdown(M, main, err, rem, zhat, "exact-enumeration")
    # subset sums for the main terms, MC over spins for the error terms
    main = subset_sums(n, M, model.subset_moments, lam * omega[None, :], budget)[:, 0]
    if method == "exact":
        zhat = partition_wick(model, fld, lam, spec).value if isinstance(model, GaussianFieldModel) \
            and spec.kind == "gaussian" else None
        return ExpansionBreakdown(M, main, None, None, zhat, "exact-enumeration")
    acc = np.zeros(P)
    for start in range(0, samples, MC_CHUNK):
        cnt = min(MC_CHUNK, samples - start)
        S = model.sample(seed, cnt, start)
        f = lam * S * omega + eta(S, omega[None, :], lam, spec)
        acc += elementary_symmetric(f, M).sum(axis=0)
    full = acc / samples
    err = full - main
    err[0] = 0.0
    return ExpansionBreakdown(M, main, err, None, None, "monte-carlo")


# ------------------------------------------------------------------ chaos approximations


def chaos_discrete(model: SpinModel, fld: DisorderField, lambda_hat: float, M: int,
                   budget: int = DEFAULT_BUDGET) -> ChaosApprox:
    """1 + sum_{k<=M} lambda_hat^k sum_{|S|=k} psi_delta(S) prod (delta^(d/2) omega_x)."""
    dom = model.domain
    W = dom.delta ** (dom.d / 2) * np.asarray(fld.values, dtype=float)
    coords = dom.coords

    def weight(S):
        return model.psi_delta(coords[S])

    terms = subset_sums(model.n, M, weight, W[None, :], budget)[:, 0]
    terms *= lambda_hat ** np.arange(M + 1)
    return ChaosApprox(M, terms)


def psi_limit_table(model: SpinModel, k: int, budget: int = DEFAULT_BUDGET) -> tuple[np.ndarray, np.ndarray]:
    """All k-subsets of sites and psi_0 at their centres."""
    if not model.has_limit:
        raise NotAvailable(f"{model.kind} model declares no psi_0")
    n = model.n
    if math.comb(n, k) > budget:
        raise BudgetExceeded(f"C({n},{k}) exceeds the budget {budget}", max_order=k - 1)
    subs = np.concatenate(list(combinations_chunks(n, k))) if k else np.zeros((1, 0), np.int64)
    return subs, model.psi_limit(model.domain.coords[subs])


def chaos_limit_coupled(model: SpinModel, noise: WhiteNoiseField | np.ndarray, lambda_hat: float,
                        M: int, budget: int = DEFAULT_BUDGET) -> ChaosApprox:
    """1 + sum_{k<=M} lambda_hat^k/k! sum over ordered distinct k-tuples of cells of
    psi_0(centres) prod W(cell).  psi_0 is symmetric, so each k-subset is counted once.

    ``noise`` may be a WhiteNoiseField or an (R, n) array of increments (R replicas);
    the terms then have shape (M+1, R).
    """
    if not model.has_limit:
        raise NotAvailable(f"{model.kind} model declares no psi_0")
    W = noise.increments if isinstance(noise, WhiteNoiseField) else np.asarray(noise, dtype=float)
    single = W.ndim == 1
    W = np.atleast_2d(W)
    coords = model.domain.coords
    terms = subset_sums(model.n, M, lambda S: model.psi_limit(coords[S]), W, budget,
                        skip_odd=isinstance(model, GaussianFieldModel))
    terms *= (lambda_hat ** np.arange(M + 1))[:, None]
    return ChaosApprox(M, terms[:, 0] if single else terms)


def exp_tail(x: float, M: int) -> float:
    """sum_{k>M} x^k/k! = e^x P(M+1, x) for x >= 0."""
    if x == 0.0:
        return 0.0
    return float(math.exp(x) * gammainc(M + 1, x))


def chaos_tail(norms: dict, lambda_hat: float, M: int) -> float:
    """sum_{k>M} lambda_hat^(2k)/k! ||psi||^2_k over the orders present in ``norms``.

    ``norms`` maps k to the squared L2 norm of psi on Omega^k (estimated by
    ``verify.psi_norms``); orders beyond the largest key are not included.
    """
    if lambda_hat == 0.0:
        return 0.0
    tot = 0.0
    for k in sorted(norms):
        if k > M:
            tot += lambda_hat ** (2 * k) / math.factorial(k) * max(float(norms[k]), 0.0)
    return tot


def check_quadrature(nodes: int, k: int, cap: int = 50_000_000) -> None:
    if nodes < 2:
        raise QuadratureBudget("need at least 2 quadrature nodes")
    if nodes * max(k, 1) > cap:
        raise QuadratureBudget(f"{nodes} nodes x {k} points exceed the quadrature cap {cap}")
