"""Finite Gaussian location mixtures with a common scale: a sieve prior over the
number of components, an importance-sampling posterior, convex KL projection
of a target onto a fixed location grid, and an L1 contraction study."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from . import kernels
from .core import (QuadratureRule, StudyResult, check_reps, kl_and_v2, l1_distance,
                   map_replicates, mc_mean_se)
from .densities import TargetDensity, sample_iid
from .errors import DomainError, PreconditionError, SolverError, StudyError

log = logging.getLogger(__name__)

ESS_WARN = 20
MIN_DRAWS = 500
STUDY_N_CAP = 500
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """sum_j w_j sigma^-1 phi((x - theta_j) / sigma)."""

    locations: np.ndarray
    weights: np.ndarray
    sigma: float

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.locations, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if th.shape != w.shape or th.size == 0:
            raise DomainError("locations and weights must be nonempty and of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise DomainError("weights must lie on the simplex")
        object.__setattr__(self, "locations", th)
        object.__setattr__(self, "weights", w / w.sum())
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def k(self) -> int:
        return self.locations.size

    def __call__(self, x):
        return mixture_eval(self, x)


def mixture_eval(gm: GaussianMixture, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = (x[:, None] - gm.locations[None, :]) / gm.sigma
    return np.exp(-0.5 * z * z) @ gm.weights / (gm.sigma * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class GaussianSievePrior:
    """rho(k) geometric on 1..k_max; locations iid with density proportional to
    exp(-b |theta|^delta); weights Dirichlet(1, ..., 1); sigma ~ IG(nu, lam)."""

    k_max: int = 4
    rate: float = 1.0
    b: float = 0.125
    delta: float = 2.0
    nu: float = 2.0
    lam: float = 1.0

    def __post_init__(self):
        if int(self.k_max) < 1:
            raise DomainError("k_max must be >= 1")
        for name in ("rate", "b", "delta", "nu", "lam"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.delta > 2:
            raise DomainError("delta must be <= 2")

    def log_rho(self) -> np.ndarray:
        lw = -self.rate * np.arange(1, self.k_max + 1)
        return lw - logsumexp(lw)

    def location_logpdf(self, theta):
        # normalizer of exp(-b |t|^delta) is 2 Gamma(1 + 1/delta) b^(-1/delta)
        lz = math.log(2.0) + gammaln(1.0 + 1.0 / self.delta) - math.log(self.b) / self.delta
        return -self.b * np.abs(theta) ** self.delta - lz

    def sample_locations(self, rng, size):
        # |theta|^delta ~ Gamma(1/delta, scale 1/b) with a random sign
        g = rng.gamma(1.0 / self.delta, 1.0 / self.b, size=size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * g ** (1.0 / self.delta)

    def sample_sigma(self, rng, size=None):
        return 1.0 / rng.gamma(self.nu, 1.0 / self.lam, size=size)

    def sigma_logpdf(self, s):
        return stats.invgamma.logpdf(s, self.nu, scale=self.lam)


def sample_prior(prior: GaussianSievePrior, rng) -> GaussianMixture:
    k = int(rng.choice(np.arange(1, prior.k_max + 1), p=np.exp(prior.log_rho())))
    th = prior.sample_locations(rng, k)
    w = rng.dirichlet(np.ones(k))
    return GaussianMixture(th, w, float(prior.sample_sigma(rng)))


# ---------------------------------------------------------------------------
# unconstrained parametrization of one model: u = (theta_1, log gaps, log sigma, logits)
# with ordered locations and additive-logratio weights (last weight as reference)
# ---------------------------------------------------------------------------

def _to_params(u, k):
    th = np.cumsum(np.concatenate([u[:, :1], np.exp(u[:, 1:k])], axis=1), axis=1)
    sigma = np.exp(u[:, k])
    logits = np.concatenate([u[:, k + 1:], np.zeros((u.shape[0], 1))], axis=1)
    logw = logits - logsumexp(logits, axis=1, keepdims=True)
    return th, sigma, logw


def _from_params(th, sigma, w):
    k = th.shape[1]
    th = np.sort(th, axis=1)
    gaps = np.log(np.maximum(np.diff(th, axis=1), 1e-300))
    logw = np.log(np.maximum(w, 1e-300))
    return np.concatenate([th[:, :1], gaps, np.log(sigma)[:, None],
                           logw[:, :k - 1] - logw[:, k - 1:]], axis=1)


def _log_prior_u(prior, u, k):
    th, sigma, logw = _to_params(u, k)
    lp = math.log(math.factorial(k)) + prior.location_logpdf(th).sum(axis=1)
    lp += u[:, 1:k].sum(axis=1)                       # d theta / d log-gap
    lp += prior.sigma_logpdf(sigma) + np.log(sigma)   # d sigma / d log sigma
    lp += gammaln(k) + logw.sum(axis=1)               # Dirichlet(1) density times ALR Jacobian
    return lp


def _prior_draws_u(prior, k, n_draws, rng):
    th = prior.sample_locations(rng, (n_draws, k))
    sigma = prior.sample_sigma(rng, n_draws)
    w = rng.dirichlet(np.ones(k), size=n_draws)
    return _from_params(th, sigma, w)


def _loglik(u, k, x):
    th, sigma, logw = _to_params(u, k)
    return kernels.gauss_mix_loglik(np.ascontiguousarray(th), np.ascontiguousarray(logw),
                                    sigma, x)


def _ess(logw):
    w = np.exp(logw - logw.max())
    return float(w.sum() ** 2 / (w @ w))


def _cess(logw, inc):
    """Conditional ESS of incremental log-weights ``inc`` under current weights."""
    W = np.exp(logw - logw.max())
    W /= W.sum()
    fin = np.isfinite(inc)
    a = np.where(fin, inc, -np.inf)
    top = a[fin & (W > 0)].max() if np.any(fin & (W > 0)) else 0.0
    v = np.exp(a - top)
    num = (W @ v) ** 2
    den = W @ (v * v)
    return float(W.size * num / den) if den > 0 else 0.0


class _Proposal:
    """Defensive mixture (1 - eps) t_df(mean, scale) + eps prior, in u-space."""

    def __init__(self, prior, k, u, logw, eps=0.1, df=5.0, inflate=1.5):
        w = np.exp(logw - logw.max())
        w /= w.sum()
        mean = w @ u
        diff = u - mean
        cov = (diff * w[:, None]).T @ diff
        cov = inflate * cov + 1e-6 * np.eye(u.shape[1])
        self.t = stats.multivariate_t(mean, cov, df=df, allow_singular=True)
        self.prior, self.k, self.eps = prior, k, eps

    def draw(self, n_draws, rng):
        n_prior = rng.binomial(n_draws, self.eps)
        parts = [np.atleast_2d(self.t.rvs(size=n_draws - n_prior, random_state=rng))
                 if n_draws > n_prior else np.empty((0, 2 * self.k)),
                 _prior_draws_u(self.prior, self.k, n_prior, rng)]
        u = np.concatenate(parts, axis=0).reshape(n_draws, 2 * self.k)
        return u

    def logpdf(self, u, log_prior):
        lt = np.atleast_1d(self.t.logpdf(u))
        return np.logaddexp(math.log1p(-self.eps) + lt, math.log(self.eps) + log_prior)


@dataclass
class ModelFit:
    k: int
    log_marginal: float
    ess: float
    stages: int
    particles: np.ndarray
    log_weights: np.ndarray


def fit_model(prior: GaussianSievePrior, k: int, x, draws: int, rng, target_ess=0.5,
              max_stages: int = 60, refine: int = 1) -> ModelFit:
    """Tempered adaptive importance sampling for the k-component model.

    Moves the temperature from 0 to 1 so that each reweighting step keeps a
    conditional effective sample size of ``target_ess * draws``; after every step a fresh
    batch is drawn from a Student-t proposal fitted to the weighted particles.
    The last batch targets the posterior itself, and its mean importance
    weight estimates the marginal likelihood.
    """
    u = _prior_draws_u(prior, k, draws, rng)
    lp = _log_prior_u(prior, u, k)
    ll = _loglik(u, k, x)
    logw = np.zeros(draws)   # prior draws targeting the prior
    tau = 0.0
    stages = 0
    extra = refine
    while True:
        stages += 1
        if stages > max_stages:
            raise SolverError("tempering did not reach temperature 1",
                              certificate={"k": k, "temperature": tau})
        if tau < 1.0:
            lo_t, hi_t = tau, 1.0
            if _cess(logw, (1.0 - tau) * ll) < target_ess * draws:
                for _ in range(60):
                    mid = 0.5 * (lo_t + hi_t)
                    if _cess(logw, (mid - tau) * ll) >= target_ess * draws:
                        lo_t = mid
                    else:
                        hi_t = mid
                new_tau = max(lo_t, tau + 1e-12)
            else:
                new_tau = 1.0
        else:
            if extra == 0:
                break
            extra -= 1
            new_tau = 1.0
        fitw = logw + (new_tau - tau) * ll
        prop = _Proposal(prior, k, u, fitw)
        tau = new_tau
        u = prop.draw(draws, rng)
        lp = _log_prior_u(prior, u, k)
        ll = _loglik(u, k, x)
        logw = lp + tau * ll - prop.logpdf(u, lp)
        logw[~np.isfinite(logw)] = -np.inf
    lme = float(logsumexp(logw) - math.log(draws))
    return ModelFit(k, lme, _ess(logw), stages, u, logw)


class PredictiveDensity:
    """Posterior-mean density sum_k p(k | X) sum_i omega_i f_i."""

    def __init__(self, parts, cutoff=1e-12):
        self.parts = []
        for pk, th, w, sigma, om in parts:
            keep = om > cutoff * om.max()
            self.parts.append((pk, np.ascontiguousarray(th[keep]), np.ascontiguousarray(w[keep]),
                               sigma[keep], om[keep] / om[keep].sum()))

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape)
        for pk, th, w, sigma, om in self.parts:
            out += pk * kernels.gauss_mix_average(th, w, sigma, om, x)
        return out


@dataclass
class GaussianPosterior:
    k_values: np.ndarray
    k_posterior: np.ndarray
    log_marginals: np.ndarray
    ess: np.ndarray
    predictive: PredictiveDensity
    status: str = "ok"
    diagnostics: dict = field(default_factory=dict)

    @property
    def map_k(self) -> int:
        return int(self.k_values[int(np.argmax(self.k_posterior))])


def posterior(data, prior: GaussianSievePrior = GaussianSievePrior(), draws: int = 2000,
              rng=None) -> GaussianPosterior:
    """Posterior over k and the posterior-mean predictive density.

    With no data the result is the prior: p(k) = rho(k) and the predictive is
    the prior predictive.  ``status`` is ``"unreliable"`` when the importance
    weights of a model with non-negligible posterior mass have an ESS below 20.
    """
    if draws < MIN_DRAWS:
        raise PreconditionError(f"draws must be >= {MIN_DRAWS}")
    x = np.asarray(data, dtype=float).ravel()
    if np.any(~np.isfinite(x)):
        raise DomainError("data must be finite reals")
    rng = np.random.default_rng() if rng is None else rng
    ks = np.arange(1, prior.k_max + 1)
    fits = []
    for k in ks:
        if x.size == 0:
            u = _prior_draws_u(prior, k, draws, rng)
            fits.append(ModelFit(k, 0.0, float(draws), 0, u, np.zeros(draws)))
        else:
            fits.append(fit_model(prior, k, x, draws, rng))
    lm = np.array([f.log_marginal for f in fits])
    lpk = prior.log_rho() + lm
    pk = np.exp(lpk - logsumexp(lpk))
    ess = np.array([f.ess for f in fits])
    parts = []
    for p, f in zip(pk, fits):
        th, sigma, logw = _to_params(f.particles, f.k)
        om = np.exp(f.log_weights - f.log_weights.max())
        parts.append((p, th, np.exp(logw), sigma, om))
    low = [int(k) for k, e, p in zip(ks, ess, pk) if e < ESS_WARN and p > 1e-3]
    status = "unreliable" if low else "ok"
    if low:
        log.warning("importance-sampling ESS below %d for k in %s", ESS_WARN, low)
    diag = {"n": int(x.size), "stages": [f.stages for f in fits], "low_ess_k": low}
    return GaussianPosterior(ks, pk, lm, ess, PredictiveDensity(parts), status, diag)


# ---------------------------------------------------------------------------
# KL projection onto mixtures with fixed locations and scale
# ---------------------------------------------------------------------------

def default_location_grid(sigma: float) -> np.ndarray:
    """Spacing sigma/2 on [-a, a]; the half-width a = min(4 + 2 log2(1/sigma), 8)
    (a = 4 for sigma >= 1) widens as sigma shrinks."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    a = min(4.0 + 2.0 * max(math.log2(1.0 / sigma), 0.0), 8.0)
    half = int(math.floor(a / (0.5 * sigma) + 1e-9))
    return 0.5 * sigma * np.arange(-half, half + 1)


class KLObjective:
    """KL(f0 || sum_j w_j phi_sigma(. - theta_j)) as a function of w, on a fixed rule.

    The integrand is the pointwise form f0 log(f0/f_w) - f0 + f_w, so the
    function is convex on the whole positive orthant and equals the usual KL
    on the simplex.
    """

    def __init__(self, f0: TargetDensity, sigma: float, grid, rule: QuadratureRule | None = None):
        self.grid = np.atleast_1d(np.asarray(grid, dtype=float))
        if self.grid.size == 0:
            raise PreconditionError("location grid must be nonempty")
        if not sigma > 0:
            raise DomainError("sigma must be positive")
        self.sigma = float(sigma)
        if rule is None:
            a, b = f0.quad_domain()
            panels = max(256, int(math.ceil((b - a) / (0.25 * self.sigma))))
            rule = QuadratureRule(panel_count=panels, scheme="gauss", a=a, b=b, order=4)
        self.rule = rule
        x, q = rule.nodes_weights()
        self.x, self.q = x, q
        z = (x[:, None] - self.grid[None, :]) / self.sigma
        self.phi = np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))
        self.f0 = np.asarray(f0(x), dtype=float)
        pos = self.f0 > 0
        self._f0logf0 = np.zeros_like(self.f0)
        self._f0logf0[pos] = self.f0[pos] * np.log(self.f0[pos])

    def value(self, w) -> float:
        fw = np.maximum(self.phi @ w, 1e-300)
        return float(self.q @ (self._f0logf0 - self.f0 * np.log(fw) - self.f0 + fw))

    def gradient(self, w) -> np.ndarray:
        fw = np.maximum(self.phi @ w, 1e-300)
        return self.phi.T @ (self.q * (1.0 - self.f0 / fw))

    def mixture(self, w) -> GaussianMixture:
        return GaussianMixture(self.grid, w, self.sigma)


@dataclass
class KLProjection:
    weights: np.ndarray
    kl: float
    iterations: int
    history: np.ndarray
    bound: float


def kl_project_weights(f0: TargetDensity, sigma: float, location_grid=None,
                       iterations: int = 2000, tol: float = 1e-10, rtol: float = 1e-8,
                       rule=None, mu0: float = 1e-2, shrink: float = 0.25) -> KLProjection:
    """Minimize KL(f0 || f_w) over the simplex.

    Log-barrier path following: for a decreasing sequence of barrier weights
    mu the function KL(w) - mu sum_j log w_j is minimized over the simplex by
    Newton steps with Armijo backtracking.  The KL value at the end of each mu
    stage is recorded in ``history``; along the central path it is
    nonincreasing.  ``bound`` is a certified bound on KL(w) - min KL, the
    smallest of KL(w) itself (KL is nonnegative), the Frank-Wolfe gap
    g'w - min_j g_j and the barrier bound k mu.  The solve stops when
    ``bound <= tol + rtol * KL``; running out of Newton steps first raises
    SolverError carrying the final gradient norm.
    """
    grid = default_location_grid(sigma) if location_grid is None else location_grid
    obj = KLObjective(f0, sigma, grid, rule)
    k = obj.grid.size
    w = np.full(k, 1.0 / k)
    val = obj.value(w)
    hist = [val]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    mu = mu0
    steps = 0

    def certified(wv, v, m):
        g = obj.gradient(wv)
        return min(v, float(g @ wv - g.min()), k * m), g

    while True:
        for _ in range(100):
            fw = np.maximum(obj.phi @ w, 1e-300)
            g = obj.gradient(w) - mu / w
            kkt[:k, :k] = obj.phi.T @ (obj.phi * (obj.q * obj.f0 / (fw * fw))[:, None])
            kkt[np.arange(k), np.arange(k)] += mu / (w * w)
            rhs = np.concatenate([-g, [0.0]])
            try:
                dw = np.linalg.solve(kkt, rhs)[:k]
            except np.linalg.LinAlgError:
                dw = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
            dec = -float(g @ dw)
            if not dec > 1e-15:
                break
            t = 1.0
            neg = dw < 0
            if neg.any():
                t = min(1.0, 0.99 * float(np.min(-w[neg] / dw[neg])))
            base = val - mu * np.log(w).sum()
            while t > 1e-14:
                w_new = w + t * dw
                w_new /= w_new.sum()
                v_new = obj.value(w_new)
                if v_new - mu * np.log(w_new).sum() <= base - 1e-4 * t * dec:
                    break
                t *= 0.5
            else:
                break
            w, val = w_new, v_new
            steps += 1
            if steps >= iterations:
                bound, g = certified(w, val, mu)
                raise SolverError("KL projection did not converge",
                                  certificate={"gradient_norm": float(np.linalg.norm(g)),
                                               "bound": bound, "kl": val})
        hist.append(val)
        bound, _ = certified(w, val, mu)
        if bound <= tol + rtol * val:
            return KLProjection(w, val, steps, np.asarray(hist), bound)
        mu *= shrink


# ---------------------------------------------------------------------------
# contraction study
# ---------------------------------------------------------------------------

def predictive_l1(f0: TargetDensity, dens) -> float:
    a, b = f0.quad_domain()
    return l1_distance(f0, dens, QuadratureRule(panel_count=1024, scheme="gauss", a=a, b=b,
                                                order=4))


def contraction_study(f0: TargetDensity, n_list=(25, 50, 100, 200, 400), reps: int = 20,
                      seed: int = 0, threads: int | None = None,
                      prior: GaussianSievePrior = GaussianSievePrior(),
                      draws: int = 2000) -> StudyResult:
    """Monte-Carlo L1 risk of the posterior-mean density along n_list.

    Samples for different n are nested prefixes of one draw per replicate.
    """
    reps = check_reps(reps, 10)
    ns = [int(n) for n in n_list]
    if len(ns) < 2:
        raise StudyError("slope fit needs at least two sample sizes")
    if any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise PreconditionError("n_list must be increasing positive integers")
    if ns[-1] > STUDY_N_CAP:
        raise PreconditionError(f"sample sizes are capped at {STUDY_N_CAP}")

    def one(rng, _i):
        xs = sample_iid(f0, ns[-1], rng)
        return [predictive_l1(f0, posterior(xs[:n], prior, draws, rng).predictive) for n in ns]

    table = np.asarray(map_replicates(one, reps, seed, threads))
    st = [mc_mean_se(table[:, j]) for j in range(len(ns))]
    return StudyResult.from_table("n", ns, [m for m, _ in st], [s for _, s in st],
                                  study="gauss-rate", density=f0.name, reps=reps, draws=draws,
                                  k_max=prior.k_max, target_slope=-0.5)


def kl_of_mixture(f0: TargetDensity, gm: GaussianMixture, rule=None):
    """(KL, V2) of f0 against a Gaussian mixture on f0's quadrature domain."""
    if rule is None:
        a, b = f0.quad_domain()
        rule = QuadratureRule(panel_count=2048, scheme="gauss", a=a, b=b, order=4)
    return kl_and_v2(f0, gm, rule)
