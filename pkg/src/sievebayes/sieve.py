"""Sieve priors sum_k rho(k) Dir_k over histogram, polygon and Bernstein
families: prior draws, marginal likelihoods, posterior summaries, the Bayes
estimator and its L1-risk study."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .basis import (WeightedDensity, basis_matrix, breakpoints, check_kind, family_eval,
                    BinPartition)
from .core import (QuadratureRule, StudyResult, check_reps, kl_and_v2, l1_distance,
                   map_replicates, mc_mean_se, sample_dirichlet)
from .densities import TargetDensity, sample_iid
from .errors import DegenerateMarginalError, DomainError, PreconditionError

log = logging.getLogger(__name__)

ESS_WARN = 50
MIN_DRAWS = 100


@dataclass(frozen=True)
class ModelSizePrior:
    """rho(k) proportional to exp(-rate k) ("geometric") or exp(-rate k log k)
    ("superexp"), truncated to 1..k_max and renormalized."""

    kind: str = "geometric"
    rate: float = 1.0
    k_max: int = 64

    def __post_init__(self):
        if self.kind not in ("geometric", "superexp"):
            raise DomainError(f"unknown model-size prior {self.kind!r}")
        if not self.rate > 0:
            raise DomainError("model-size prior rate must be positive")
        if int(self.k_max) < 1:
            raise DomainError("k_max must be >= 1")

    def _log_weights(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "geometric":
            return -self.rate * k
        return -self.rate * k * np.log(k)

    def log_probs(self) -> np.ndarray:
        lw = self._log_weights(np.arange(1, self.k_max + 1))
        return lw - logsumexp(lw)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def truncation_bound(self) -> float:
        """Mass the untruncated law puts beyond k_max."""
        ks = np.arange(1, self.k_max + 2001)
        lw = self._log_weights(ks)
        return float(np.exp(logsumexp(lw[self.k_max:]) - logsumexp(lw)))

    def sample(self, rng, size=None):
        return rng.choice(np.arange(1, self.k_max + 1), size=size, p=self.probs())


@dataclass(frozen=True)
class DirichletSpec:
    """Dirichlet parameters alpha_{j,k} = m0 * base(A_{j,k}).

    ``base_cdf`` is the distribution function of a continuous positive base
    density on [0, 1]; ``None`` means uniform.
    """

    m0: float = 1.0
    base_cdf: Callable | None = None

    def __post_init__(self):
        if not self.m0 > 0:
            raise DomainError("Dirichlet total mass m0 must be positive")

    def alphas(self, k: int) -> np.ndarray:
        edges = np.arange(k + 1) / k
        if self.base_cdf is None:
            mass = np.diff(edges)
        else:
            mass = np.diff(np.asarray(self.base_cdf(edges), dtype=float))
        if np.any(mass <= 0):
            raise DomainError("base measure must give every bin positive mass")
        return self.m0 * mass / mass.sum()


@dataclass(frozen=True)
class SievePrior:
    size: ModelSizePrior = field(default_factory=ModelSizePrior)
    dirichlet: DirichletSpec = field(default_factory=DirichletSpec)

    @property
    def k_max(self):
        return self.size.k_max


def sample_prior_density(prior: SievePrior, kind: str, rng):
    check_kind(kind)
    k = int(prior.size.sample(rng))
    w = sample_dirichlet(prior.dirichlet.alphas(k), rng)
    return k, w, WeightedDensity(kind, w)


def _check_data(data, allow_empty=False):
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0 and not allow_empty:
        raise PreconditionError("data must be nonempty")
    if x.size and (np.any(~np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise DomainError("observations must lie in [0, 1]")
    return x


def histogram_log_marginal(k: int, data, spec: DirichletSpec = DirichletSpec()) -> float:
    """Closed-form log marginal likelihood of the k-bin histogram model."""
    x = _check_data(data, allow_empty=True)
    n = x.size
    if n == 0:
        return 0.0
    counts = BinPartition(k).counts(x)
    a = spec.alphas(k)
    return float(n * math.log(k) + gammaln(spec.m0) - gammaln(a).sum()
                 + gammaln(a + counts).sum() - gammaln(spec.m0 + n))


def _draw_loglik(kind, k, x, W):
    """Log-likelihood of data x under each row of W."""
    if kind == "histogram":
        counts = BinPartition(k).counts(x)
        used = counts > 0
        with np.errstate(divide="ignore"):
            return np.log(k * W[:, used]) @ counts[used]
    B = basis_matrix(kind, k, x)
    out = np.empty(W.shape[0])
    for s in range(0, W.shape[0], 512):
        with np.errstate(divide="ignore"):
            out[s:s + 512] = np.log(B @ W[s:s + 512].T).sum(axis=0)
    return out


class MCMarginal(NamedTuple):
    log_marginal: float
    ess: float
    stderr: float


def _importance(kind, k, x, spec, draws, rng):
    W = sample_dirichlet(spec.alphas(k), rng, size=draws)
    ll = _draw_loglik(kind, k, x, W)
    if not np.any(np.isfinite(ll)):
        raise DegenerateMarginalError(f"all {draws} prior draws give zero likelihood (k={k})")
    top = ll.max()
    om = np.exp(ll - top)
    mean = om.mean()
    lme = float(top + math.log(mean))
    ess = float(om.sum() ** 2 / (om @ om))
    se = float(om.std(ddof=1) / (math.sqrt(draws) * mean)) if draws > 1 else math.nan
    return MCMarginal(lme, ess, se), W, om


def mc_log_marginal(kind: str, k: int, data, spec: DirichletSpec = DirichletSpec(),
                    draws: int = 10_000, rng=None) -> MCMarginal:
    """Simple Monte-Carlo log marginal: log of the average likelihood over prior draws.

    ``stderr`` is the delta-method standard error on the log scale.
    """
    check_kind(kind)
    if draws < MIN_DRAWS:
        raise PreconditionError(f"draws must be >= {MIN_DRAWS}")
    x = _check_data(data, allow_empty=True)
    if x.size == 0:
        return MCMarginal(0.0, float(draws), 0.0)
    rng = np.random.default_rng() if rng is None else rng
    return _importance(kind, k, x, spec, draws, rng)[0]


class BayesDensity:
    """Posterior-mean density sum_k rho(k | X) f_{E[w | k, X]}."""

    def __init__(self, kind, probs, weights, cutoff=1e-16):
        self.kind = kind
        keep = [i for i, p in enumerate(probs) if p > cutoff]
        total = sum(probs[i] for i in keep)
        self.terms = [(probs[i] / total, np.asarray(weights[i])) for i in keep]

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape)
        for p, w in self.terms:
            out += p * family_eval(self.kind, w, x)
        return out

    def breakpoints(self):
        return np.unique(np.concatenate([breakpoints(self.kind, w.size) for _, w in self.terms]))


@dataclass
class PosteriorSummary:
    kind: str
    k_values: np.ndarray
    k_posterior: np.ndarray
    mean_weights: list
    log_marginals: np.ndarray
    bayes_density: BayesDensity
    diagnostics: dict = field(default_factory=dict)

    @property
    def map_k(self) -> int:
        """Smallest k among the posterior maxima."""
        return int(self.k_values[int(np.argmax(self.k_posterior))])


def posterior(data, prior: SievePrior = SievePrior(), kind: str = "histogram", rng=None,
              draws: int = 2000) -> PosteriorSummary:
    """Posterior over k and posterior-mean weights per k.

    Histograms use the conjugate Dirichlet update; polygon and Bernstein
    families use self-normalized importance sampling from the prior.
    """
    check_kind(kind)
    x = _check_data(data)
    n = x.size
    ks = np.arange(1, prior.k_max + 1)
    log_marg = np.empty(ks.size)
    means = []
    ess = np.full(ks.size, np.nan)
    if kind != "histogram":
        if draws < MIN_DRAWS:
            raise PreconditionError(f"draws must be >= {MIN_DRAWS}")
        rng = np.random.default_rng() if rng is None else rng
    for i, k in enumerate(ks):
        if kind == "histogram":
            a = prior.dirichlet.alphas(k)
            counts = BinPartition(k).counts(x)
            log_marg[i] = (n * math.log(k) + gammaln(prior.dirichlet.m0) - gammaln(a).sum()
                           + gammaln(a + counts).sum() - gammaln(prior.dirichlet.m0 + n))
            means.append((a + counts) / (prior.dirichlet.m0 + n))
        else:
            est, W, om = _importance(kind, k, x, prior.dirichlet, draws, rng)
            log_marg[i] = est.log_marginal
            ess[i] = est.ess
            means.append(om @ W / om.sum())
    lp = prior.size.log_probs() + log_marg
    post = np.exp(lp - logsumexp(lp))
    diag = {"n": n}
    if kind != "histogram":
        low = [int(k) for k, e in zip(ks, ess) if e < ESS_WARN and post[k - 1] > 1e-3]
        diag.update(ess=ess, low_ess_k=low)
        if low:
            log.warning("importance-sampling ESS below %d for k in %s", ESS_WARN, low)
    return PosteriorSummary(kind, ks, post, means, log_marg, BayesDensity(kind, post, means), diag)


def l1_to_target(f0: TargetDensity, dens, extra_breaks=()) -> float:
    bp = np.unique(np.concatenate([dens.breakpoints(), [0.0, 0.5, 1.0], np.asarray(extra_breaks)]))
    sub = max(1, 2048 // (bp.size - 1))
    return l1_distance(f0, dens, QuadratureRule.piecewise(bp, order=6, sub_panels=sub))


def _check_n_list(n_list):
    ns = [int(n) for n in n_list]
    if len(ns) < 2 or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise PreconditionError("n_list must be increasing positive integers with >= 2 entries")
    return ns


def l1_risk_study(f0: TargetDensity, prior: SievePrior = SievePrior(), kind: str = "histogram",
                  n_list=(100, 200, 400, 800, 1600, 3200, 6400), reps: int = 50, seed: int = 0,
                  threads: int | None = None, draws: int = 2000) -> StudyResult:
    """Monte-Carlo estimate of E||f_hat_n - f0||_1 along n_list.

    Within a replicate the samples are nested prefixes of one draw (common
    random numbers across n).
    """
    reps = check_reps(reps, 10)
    ns = _check_n_list(n_list)

    def one(rng, _i):
        xs = sample_iid(f0, ns[-1], rng)
        return [l1_to_target(f0, posterior(xs[:n], prior, kind, rng, draws).bayes_density)
                for n in ns]

    table = np.asarray(map_replicates(one, reps, seed, threads))
    stats = [mc_mean_se(table[:, j]) for j in range(len(ns))]
    est = [m for m, _ in stats]
    se = [s for _, s in stats]
    res = StudyResult.from_table("n", ns, est, se, study="rate-study", density=f0.name,
                                 family=kind, reps=reps)
    if np.isfinite(f0.beta) and f0.beta > 0:
        b = min(f0.beta, 1.0 if kind == "histogram" else 2.0)
        res.info["target_slope"] = -b / (2 * b + 1)
        logs = np.log(np.asarray(ns, dtype=float)) ** (b / (2 * b + 1))
        adj = StudyResult.from_table("n", ns, np.asarray(est) / logs, se)
        res.info["slope_log_adjusted"] = adj.fit.slope
    return res


def kl_ball_prior_mass(f0: TargetDensity, eps, prior: SievePrior = SievePrior(),
                       kind: str = "histogram", draws: int = 1000, rng=None,
                       rule: QuadratureRule | None = None):
    """Monte-Carlo estimate of Pi(max{KL, V2} <= eps^2).

    ``eps`` may be an array; all radii are evaluated on the same prior draws,
    so the estimates are nested.
    """
    eps_arr = np.atleast_1d(np.asarray(eps, dtype=float))
    if np.any(eps_arr <= 0):
        raise DomainError("eps must be positive")
    rng = np.random.default_rng() if rng is None else rng
    rule = rule or QuadratureRule(panel_count=2048, scheme="midpoint")
    div = np.empty(draws)
    for i in range(draws):
        _, _, dens = sample_prior_density(prior, kind, rng)
        kl, v2 = kl_and_v2(f0, dens, rule)
        div[i] = max(kl, v2)
    mass = (div[None, :] <= eps_arr[:, None] ** 2).mean(axis=1)
    return float(mass[0]) if np.ndim(eps) == 0 else mass
