"""Numerical checks of the correlation assumptions, remainder diagnostics and the
coupled convergence study."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from . import rng
from .coeffalg import eta_cov_closed
from .core import ExperimentConfig, build_domain
from .disorder import DisorderSpec, make_disorder
from .errors import BudgetExceeded, DegenerateDenominator, MethodUnavailable
from .expansion import (DEFAULT_BUDGET, chaos_limit_coupled, chaos_tail, check_quadrature,
                        combinations_chunks, elementary_symmetric, eta, gaussian_wick_closed,
                        partition_wick)
from .models import GaussianFieldModel, SpinModel, make_model

QUAD_CHUNK = 20000
PAIR_CHUNK = 4096


# ------------------------------------------------------------------ correlation scaling and chaos tails


@dataclass
class L2Report:
    k: int
    nodes: int
    delta: float
    norm2: float
    norm2_se: float
    err2: Optional[float] = None
    err2_se: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_se(total: float, total2: float, n: int) -> tuple[float, float]:
    mean = total / n
    var = max(total2 / n - mean * mean, 0.0)
    return mean, math.sqrt(var / max(n - 1, 1))


def psi_norms(model: SpinModel, k: int, nodes: int, seed: int, psi0=None) -> L2Report:
    """Uniform MC quadrature of ||psi_delta||^2 and ||psi_delta - psi_0||^2 over Omega^k.

    ``psi0`` is a callable on (N, k, d) points; by default the model's own limit
    when it declares one.  Node i depends only on (seed, i), so equal seeds give
    common random numbers across lattice spacings.
    """
    check_quadrature(nodes, k)
    dom = model.domain
    if psi0 is None and model.has_limit:
        psi0 = model.psi_limit
    lo = np.asarray(dom.lower, dtype=float)
    hi = np.asarray(dom.upper, dtype=float)
    vol = float(np.prod(hi - lo)) ** k
    s = s2 = e = e2 = 0.0
    for start in range(0, nodes, QUAD_CHUNK):
        cnt = min(QUAD_CHUNK, nodes - start)
        u = rng.uniform_matrix(seed, cnt, max(k, 1) * dom.d, row_start=start)
        pts = lo + (hi - lo) * u.reshape(cnt, max(k, 1), dom.d)[:, :k]
        pd = model.psi_delta(pts)
        s += float((pd * pd).sum())
        s2 += float((pd ** 4).sum())
        if psi0 is not None:
            diff = pd - psi0(pts)
            e += float((diff * diff).sum())
            e2 += float((diff ** 4).sum())
    norm, norm_se = _mean_se(s, s2, nodes)
    rep = L2Report(k, nodes, dom.delta, vol * norm, vol * norm_se)
    if psi0 is not None:
        err, err_se = _mean_se(e, e2, nodes)
        rep.err2, rep.err2_se = vol * err, vol * err_se
    return rep


def check_a1(model: SpinModel, k: int, nodes: int = 100_000, seed: int = 0, psi0=None) -> L2Report:
    return psi_norms(model, k, nodes, seed, psi0)


@dataclass
class A2Report:
    lambda_hat: float
    deltas: list
    m_list: list
    max_k: int
    norms: list            # per delta: {k: ||psi_delta||^2}
    tails: list            # per delta: tail per M
    sup_tail: list         # per M: max over deltas
    threshold: float
    chosen_M: Optional[int]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["norms"] = [{str(k): v for k, v in nm.items()} for nm in self.norms]
        return out


def check_a2(models: Sequence[SpinModel], lambda_hat: float, m_list: Sequence[int],
             nodes: int = 100_000, seed: int = 0, max_k: int = 8,
             threshold: float = 0.05) -> A2Report:
    """Tail sums sum_{max_k >= k > M} lambda_hat^(2k)/k! ||psi_delta||^2 for each model and M."""
    m_list = sorted(int(m) for m in m_list)
    norms, tails = [], []
    for model in models:
        nm = {}
        for k in range(1, max_k + 1):
            nm[k] = 0.0 if lambda_hat == 0.0 else psi_norms(model, k, nodes, seed).norm2
        norms.append(nm)
        tails.append([chaos_tail(nm, lambda_hat, M) for M in m_list])
    sup = [max(t[i] for t in tails) for i in range(len(m_list))]
    chosen = next((M for M, t in zip(m_list, sup) if t <= threshold), None)
    return A2Report(lambda_hat, [m.domain.delta for m in models], m_list, max_k, norms, tails,
                    sup, threshold, chosen)


# ------------------------------------------------------------------ mixed-moment ratio


@dataclass
class A3Report:
    estimate: float
    max_ratio: float
    samples: int
    evaluated: int
    skipped: int
    trivial: int
    ratios: list = field(repr=False)

    def histogram(self, bins: int = 10) -> tuple[list, list]:
        if not self.ratios:
            return [], []
        counts, edges = np.histogram(self.ratios, bins=bins)
        return counts.tolist(), edges.tolist()

    def to_dict(self) -> dict:
        counts, edges = self.histogram()
        return {"estimate": self.estimate, "max_ratio": self.max_ratio, "samples": self.samples,
                "evaluated": self.evaluated, "skipped": self.skipped, "trivial": self.trivial,
                "hist_counts": counts, "hist_edges": edges}


def check_a3(model: SpinModel, tuples: int = 10_000, max_k: int = 4, max_power: int = 6,
             seed: int = 0, power_cap: int = 16) -> A3Report:
    """Sample (sites, powers) and estimate C = max ratio^(1/e), e = sum (r_i - r_i mod 2).

    Tuples with e = 0 have ratio 1 by definition and are counted as trivial;
    vanishing reduced moments are skipped and counted.
    """
    n = model.n
    max_k = min(max_k, n)
    u = rng.uniform_matrix(seed, tuples, 1 + 2 * max_k)
    # C >= 1 by definition, so the estimate starts there; max_ratio is the raw maximum
    best_c = 1.0
    ratios = []
    skipped = trivial = 0
    for row in u:
        k = 1 + int(row[0] * max_k)
        sites = []
        pool = list(range(n))
        for a in range(k):
            sites.append(pool.pop(int(row[1 + a] * len(pool))))
        powers = [1 + int(x * max_power) for x in row[1 + max_k:1 + max_k + k]]
        while sum(powers) > power_cap:
            i = int(np.argmax(powers))
            powers[i] -= 2 if powers[i] > 2 else 1
        e = sum(r - r % 2 for r in powers)
        try:
            ratio = model.a3_ratio(sites, powers)
        except DegenerateDenominator:
            skipped += 1
            continue
        ratios.append(ratio)
        if e == 0:
            trivial += 1
            continue
        best_c = max(best_c, ratio ** (1.0 / e))
    best_ratio = max(ratios) if ratios else float("nan")
    return A3Report(best_c, best_ratio, tuples, len(ratios), skipped, trivial, ratios)


def a3_trend(reports: Sequence[A3Report]) -> bool:
    """True when the estimated C strictly grows along a decreasing-delta sequence."""
    est = [r.estimate for r in reports]
    return len(est) >= 2 and all(b > a for a, b in zip(est, est[1:]))


# ------------------------------------------------------------------ remainder


def strata_exponents(d: int, gamma: float, max_iota: int = 3) -> dict:
    """d (i1 + i2) - 2 gamma (i1 + 2 i2) for i1 + i2 >= 1."""
    out = {}
    for i1 in range(max_iota + 1):
        for i2 in range(max_iota + 1):
            if i1 + i2 >= 1:
                out[(i1, i2)] = d * (i1 + i2) - 2.0 * gamma * (i1 + 2 * i2)
    return out


@dataclass
class RemainderReport:
    M: int
    delta: float
    lam: float
    s0: float
    s1: float
    r2: Optional[float]
    method: str
    r2_method: Optional[str] = None
    s0_se: float = 0.0
    s1_se: float = 0.0
    r2_se: float = 0.0
    pairs: int = 0
    predicted_min_exponent: float = 0.0
    strata: dict = field(default_factory=dict)
    r2_by_M: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["strata"] = {f"{a},{b}": v for (a, b), v in self.strata.items()}
        out["r2_by_M"] = {str(k): v for k, v in self.r2_by_M.items()}
        return out


def pair_kernels(s, s2, lam: float, spec: DisorderSpec):
    """Two-replica site kernels (G, L, F).

    G = E_w[f(s) f(s')] = exp(phi(lam(s+s')) - phi(lam s) - phi(lam s')) - 1 with
    f = lam w s + eta, L = lam^2 s s' and F = E_w[eta(s) eta(s')].  G = F + L only
    when E[w eta] = 0 (Gaussian disorder); otherwise the cross terms sit in G.
    """
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    a, b = lam * s, lam * s2
    G = np.expm1(spec.log_mgf(a + b) - spec.log_mgf(a) - spec.log_mgf(b))
    L = a * b
    F = eta_cov_closed(s, s2, lam, spec)
    return G, L, F


def _tail_weighted(pairs_poly: np.ndarray, M: int, scale: float) -> float:
    k = np.arange(len(pairs_poly))
    return float(np.sum((scale ** k * pairs_poly)[M + 1:]))


def _gaussian_r2_exact(cov: np.ndarray, lam: float, m_list: Sequence[int],
                       budget: int) -> dict:
    """E[R_M^2] for Gaussian spins and Gaussian disorder, for each M in m_list.

    Uses E'[prod_{x in T} exp(lam^2 s_x s'_x)] = det(I - lam^4 C_T^2)^(-1/2) and
    inclusion-exclusion over subsets of size <= max(m_list).
    """
    n = len(cov)
    Mmax = min(max(m_list), n)
    total = 0
    for j in range(1, Mmax + 1):
        total += math.comb(n, j)
    if total > budget:
        raise BudgetExceeded(f"{total} determinants exceed the budget {budget}")
    l4 = lam ** 4
    evals = np.linalg.eigvalsh(cov)
    if l4 * float(np.max(evals ** 2)) >= 1.0:
        # E'[exp(lam^2 <s, s'>)] diverges: the remainder has no second moment
        return {M: math.inf if M < n else 0.0 for M in m_list}
    full = math.expm1(-0.5 * float(np.sum(np.log1p(-l4 * evals ** 2))))
    gsum = np.zeros(Mmax + 1)
    for j in range(1, Mmax + 1):
        for T in combinations_chunks(n, j, 50_000):
            sub = cov[T[:, :, None], T[:, None, :]]
            A = np.eye(j) - l4 * sub @ sub
            _, logdet = np.linalg.slogdet(A)
            gsum[j] += float(np.sum(np.expm1(-0.5 * logdet)))
    ek = np.zeros(Mmax + 1)
    for k in range(1, Mmax + 1):
        ek[k] = sum((-1) ** (k - j) * math.comb(n - j, k - j) * gsum[j] for j in range(1, k + 1))
    return {M: full - float(np.sum(ek[1:M + 1])) if M < n else 0.0 for M in m_list}


def remainder_diag(model: SpinModel, spec: DisorderSpec, lambda_hat: float, M: int,
                   mode: str = "exact", pairs: int = 200_000, seed: int = 0,
                   budget: int = DEFAULT_BUDGET, m_list: Optional[Sequence[int]] = None) -> RemainderReport:
    """S0, S1 and E[R_M^2] from the two-replica kernels of ``pair_kernels``.

    S0 = sum_{k>M} 2^k E'[e_k(L)], S1 = sum_{k>M} 2^k E'[e_k(F+L) - e_k(L)],
    E[R_M^2] = sum_{k>M} E'[e_k(G)], where E' is over two independent spin
    replicas.  ``mode="exact"`` uses the pair transfer matrix (finite alphabets);
    Gaussian spins with Gaussian disorder get an exact E[R^2] and MC for S0, S1.
    """
    dom = model.domain
    lam = lambda_hat * dom.delta ** (dom.d / 2 - model.gamma)
    m_list = sorted(set([M] + list(m_list or [])))
    strata = strata_exponents(dom.d, model.gamma)
    pred = dom.d - 4 * model.gamma
    n = model.n
    if mode == "exact" and hasattr(model, "expect_pair_product") and model.values is not None:
        v = model.values
        G, L, F = pair_kernels(v[:, None], v[None, :], lam, spec)
        P = n + 1

        def poly(kern):
            H = np.zeros((n, len(v), len(v), P))
            H[..., 0] = 1.0
            H[..., 1] = kern
            return model.expect_pair_product(H)

        pG, pL, pFL = poly(G), poly(L), poly(F + L)
        s0 = _tail_weighted(pL, M, 2.0)
        s1 = _tail_weighted(pFL, M, 2.0) - s0
        r2m = {m: _tail_weighted(pG, m, 1.0) for m in m_list}
        return RemainderReport(M, dom.delta, lam, s0, s1, r2m[M], "exact", "exact",
                               predicted_min_exponent=pred, strata=strata, r2_by_M=r2m)
    if mode == "exact" and not isinstance(model, GaussianFieldModel):
        raise MethodUnavailable(f"exact remainder diagnostics unavailable for {model.kind}")
    # Monte Carlo over replica pairs
    seed_a, seed_b = rng.derive_seed(seed, "replica-a"), rng.derive_seed(seed, "replica-b")
    Mmax = max(m_list)
    acc = {"s0": [0.0, 0.0], "s1": [0.0, 0.0]}
    racc = {m: [0.0, 0.0] for m in m_list}
    for start in range(0, pairs, PAIR_CHUNK):
        cnt = min(PAIR_CHUNK, pairs - start)
        a = model.sample(seed_a, cnt, start)
        b = model.sample(seed_b, cnt, start)
        G, L, F = pair_kernels(a, b, lam, spec)
        FL = F + L
        eG = elementary_symmetric(G, Mmax)
        eG2 = elementary_symmetric(2.0 * FL, M)
        eL2 = elementary_symmetric(2.0 * L, M)
        t0 = np.prod(1.0 + 2.0 * L, axis=1) - eL2[:, :M + 1].sum(axis=1)
        t1 = np.prod(1.0 + 2.0 * FL, axis=1) - eG2[:, :M + 1].sum(axis=1) - t0
        for key, val in (("s0", t0), ("s1", t1)):
            acc[key][0] += float(val.sum())
            acc[key][1] += float((val * val).sum())
        pg = np.prod(1.0 + G, axis=1)
        for m in m_list:
            val = pg - eG[:, :m + 1].sum(axis=1)
            racc[m][0] += float(val.sum())
            racc[m][1] += float((val * val).sum())
    s0, s0_se = _mean_se(*acc["s0"], pairs)
    s1, s1_se = _mean_se(*acc["s1"], pairs)
    if M >= n:
        s0 = s1 = s0_se = s1_se = 0.0
    r2_method = "monte-carlo"
    if isinstance(model, GaussianFieldModel) and spec.kind == "gaussian":
        r2m = _gaussian_r2_exact(model.cov, lam, m_list, budget)
        r2_se = 0.0
        r2_method = "exact"
    else:
        r2m = {m: _mean_se(*racc[m], pairs)[0] for m in m_list}
        r2_se = _mean_se(*racc[M], pairs)[1]
    return RemainderReport(M, dom.delta, lam, s0, s1, r2m[M], "monte-carlo", r2_method,
                           s0_se, s1_se, r2_se, pairs, pred, strata, r2m)


def fit_slope(deltas: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(value) against log(delta)."""
    x = np.log(np.asarray(deltas, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ------------------------------------------------------------------ exact identities


def enumerate_disorder(spec: DisorderSpec, n: int, cap: int = 2**16) -> tuple[np.ndarray, np.ndarray]:
    """All disorder configurations of a finite-support law on n sites, with probabilities."""
    vals, probs = spec.atoms()
    if len(vals) ** n > cap:
        raise MethodUnavailable("disorder configuration space too large")
    idx = np.array(list(itertools.product(range(len(vals)), repeat=n)), dtype=np.int64).reshape(-1, n)
    return vals[idx], np.prod(probs[idx], axis=1)


def normalization_exact(model: SpinModel, spec: DisorderSpec, lam: float) -> float:
    """E[Z-hat] by enumerating every disorder configuration."""
    from .disorder import field_from_values
    omegas, p = enumerate_disorder(spec, model.n)
    z = np.array([partition_wick(model, field_from_values(spec, model.domain, w), lam, spec).value
                  for w in omegas])
    return float(p @ z)


def normalization_mc(model: SpinModel, spec: DisorderSpec, lam: float, replicas: int,
                     seed: int) -> tuple[float, float]:
    """Mean and standard error of Z-hat over independent disorder replicas."""
    from .disorder import field_from_values
    u = rng.uniform_matrix(seed, replicas, model.n)
    z = np.array([partition_wick(model, field_from_values(spec, model.domain, spec._from_uniforms(row)),
                                 lam, spec).value for row in u])
    return float(z.mean()), float(z.std(ddof=1) / math.sqrt(replicas))


def summand_table(model: SpinModel, spec: DisorderSpec, lam: float, omegas: np.ndarray):
    """A_{I,J}(w) = E^ref[prod_{i in I} lam w_i s_i prod_{j in J} eta_j] for every disjoint (I, J).

    Returns (labels, values) with labels[t] = (I, J) and values of shape (T, len(omegas)).
    """
    if not hasattr(model, "expect_product") or model.values is None:
        raise MethodUnavailable("summand table needs a finite spin alphabet")
    n = model.n
    v = model.values
    labels, rows = [], []
    for assign in itertools.product(range(3), repeat=n):
        I = tuple(x for x in range(n) if assign[x] == 1)
        J = tuple(x for x in range(n) if assign[x] == 2)
        labels.append((I, J))
        vals = np.empty(len(omegas))
        for r, w in enumerate(omegas):
            G = np.ones((n, len(v)))
            for x in I:
                G[x] = lam * w[x] * v
            for x in J:
                G[x] = eta(v, w[x], lam, spec)
            vals[r] = model.expect_product(G)
        rows.append(vals)
    return labels, np.array(rows)


def orthogonality_check(model: SpinModel, spec: DisorderSpec, lam: float) -> tuple[float, int]:
    """Largest |E[A A']| over summand pairs with different supports I u J (exact disorder enumeration)."""
    omegas, p = enumerate_disorder(spec, model.n)
    labels, A = summand_table(model, spec, lam, omegas)
    gram = (A * p) @ A.T
    supp = np.array([hash(frozenset(I) | frozenset(J)) for I, J in labels])
    off = supp[:, None] != supp[None, :]
    return float(np.max(np.abs(gram[off]))) if off.any() else 0.0, int(off.sum())


# ------------------------------------------------------------------ convergence study


@dataclass
class ConvergenceReport:
    deltas: list
    M: int
    replicas: int
    distance: list
    distance_se: list
    zhat_mean: list
    zhat_var: list
    chaos_mean: list
    chaos_var: list
    ks: list
    ks_pvalue: list
    zhat_method: str = "exact"

    def to_dict(self) -> dict:
        return asdict(self)


def _zhat_replicas(model, spec, lam, omega, cfg, seed):
    from .disorder import field_from_values
    if isinstance(model, GaussianFieldModel) and spec.kind == "gaussian":
        return np.array([gaussian_wick_closed(model.cov, w, lam) for w in omega]), "exact"
    method = cfg.options.method
    if method == "exact" and not (hasattr(model, "expect_product") and model.values is not None):
        method = "mc"
    out = np.array([partition_wick(model, field_from_values(spec, model.domain, w), lam, spec, method,
                                   rng.derive_seed(seed, "spins", r), cfg.options.spin_samples).value
                    for r, w in enumerate(omega)])
    return out, "exact" if method == "exact" else "monte-carlo"


def convergence_study(cfg: ExperimentConfig, M: Optional[int] = None, psi_override=None) -> ConvergenceReport:
    """For each delta: Z-hat replicas and the coupled limit chaos from the same disorder.

    The coupled increments are delta^(d/2) omega_x; the distributional track
    compares Z-hat with chaos replicas driven by fresh Gaussian increments.
    ``psi_override`` (callable model -> psi callable) replaces psi_0, e.g. by psi_delta.
    """
    spec = make_disorder(cfg.disorder.kind, cfg.disorder.values, cfg.disorder.probs, cfg.disorder.m_max)
    M = cfg.truncation_order if M is None else M
    R = cfg.replicas
    rep = ConvergenceReport(list(cfg.deltas), M, R, [], [], [], [], [], [], [], [])
    for i, delta in enumerate(cfg.deltas):
        dom = build_domain(cfg.domain.d, cfg.box(), delta)
        model = make_model(cfg.model, dom, cfg.gamma)
        if psi_override is not None:
            model = _PsiSwap(model, psi_override(model))
        lam = cfg.lambda_delta(delta)
        useed = rng.derive_seed(cfg.seed, "omega", i)
        omega = spec._from_uniforms(rng.uniform_matrix(useed, R, dom.n))
        zhat, zmethod = _zhat_replicas(model, spec, lam, omega, cfg, rng.derive_seed(cfg.seed, "spin", i))
        scale = delta ** (dom.d / 2)
        chaos = chaos_limit_coupled(model, scale * omega, cfg.lambda_hat, M,
                                    cfg.options.subset_budget).total
        fresh = scale * rng.normal_matrix(rng.derive_seed(cfg.seed, "fresh", i), R, dom.n)
        chaos_fresh = chaos_limit_coupled(model, fresh, cfg.lambda_hat, M, cfg.options.subset_budget).total
        d2 = (zhat - chaos) ** 2
        m, se = _mean_se(float(d2.sum()), float((d2 * d2).sum()), R)
        rep.distance.append(math.sqrt(m))
        rep.distance_se.append(se / (2.0 * math.sqrt(m)) if m > 0 else 0.0)
        rep.zhat_mean.append(float(zhat.mean()))
        rep.zhat_var.append(float(zhat.var(ddof=1)) if R > 1 else 0.0)
        rep.chaos_mean.append(float(chaos.mean()))
        rep.chaos_var.append(float(chaos.var(ddof=1)) if R > 1 else 0.0)
        ks = ks_2samp(zhat, chaos_fresh)
        rep.ks.append(float(ks.statistic))
        rep.ks_pvalue.append(float(ks.pvalue))
        rep.zhat_method = zmethod
    return rep


class _PsiSwap:
    """Wrap a model so that psi_limit is replaced (used for the psi_0 := psi_delta check)."""

    def __init__(self, model, psi):
        self._model = model
        self._psi = psi

    def __getattr__(self, name):
        return getattr(self._model, name)

    @property
    def has_limit(self) -> bool:
        return True

    def psi_limit(self, points):
        return self._psi(points)
