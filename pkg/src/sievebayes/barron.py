"""Barron estimator f_n^B, its polygon-smoothed version f_n^P, the
posterior-mean identity, the chi-square risk study and the pointwise CLT."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .basis import BinPartition, basis_matrix, breakpoints, family_eval, projection_weights
from .core import (QuadratureRule, StudyResult, check_reps, chi_square, map_replicates,
                   mc_mean_se)
from .densities import TargetDensity, sample_iid
from .errors import DomainError, PreconditionError

BARRON_KINDS = ("histogram", "polygon")


def robust_ceil(v: float, tol: float = 1e-9) -> int:
    """Ceiling that treats values within ``tol`` of an integer as that integer,
    so that e.g. (10**5) ** 0.2 = 10.000000000000002 maps to 10."""
    r = round(v)
    return int(r) if abs(v - r) <= tol else int(math.ceil(v))


@dataclass(frozen=True)
class BarronConfig:
    """Bin-count rule: ``power`` gives ceil(c n^(1/(2 beta + 1))), ``fifth_root``
    gives ceil(n^(1/5))."""

    k_rule: str = "power"
    beta: float = 2.0
    c: float = 1.0

    def __post_init__(self):
        if self.k_rule not in ("power", "fifth_root"):
            raise DomainError(f"unknown k rule {self.k_rule!r}")
        if not self.c > 0:
            raise DomainError("rule constant c must be positive")
        if self.k_rule == "power" and not 0 < self.beta <= 2:
            raise DomainError("beta must lie in (0, 2]")

    def k_n(self, n: int) -> int:
        if n < 1:
            return 1
        if self.k_rule == "fifth_root":
            return max(1, robust_ceil(n ** 0.2))
        return max(1, robust_ceil(self.c * n ** (1.0 / (2.0 * self.beta + 1.0))))


def _check_data(data):
    x = np.asarray(data, dtype=float).ravel()
    if x.size and (np.any(~np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise DomainError("observations must lie in [0, 1]")
    return x


def empirical_weights(data, k: int) -> np.ndarray:
    """Relative bin frequencies w_j = mu_n(A_{j,k})."""
    x = _check_data(data)
    if x.size == 0:
        raise PreconditionError("empirical weights need at least one observation")
    return BinPartition(k).counts(x) / x.size


@dataclass(frozen=True, eq=False)
class BarronEstimate:
    """(1 - a_n) f_w + a_n with f_w the histogram or polygon of the empirical weights."""

    kind: str
    a_n: float
    weights: np.ndarray
    n: int

    @property
    def k(self) -> int:
        return self.weights.size

    def __call__(self, x):
        base = family_eval(self.kind, self.weights, x)
        return (1.0 - self.a_n) * base + self.a_n

    def breakpoints(self):
        return breakpoints(self.kind, self.k)


def _estimate_from_counts(counts, kind):
    counts = np.asarray(counts, dtype=float)
    n = int(round(counts.sum()))
    k = counts.size
    if n == 0:
        return BarronEstimate(kind, 1.0, np.full(k, 1.0 / k), 0)
    return BarronEstimate(kind, 1.0 / (1.0 + n / k), counts / n, n)


def barron_estimator(data, k_n: int, kind: str = "polygon") -> BarronEstimate:
    """Barron estimator with a_n = (1 + n/k_n)^(-1); empty data gives the uniform density."""
    if kind not in BARRON_KINDS:
        raise DomainError(f"unknown Barron kind {kind!r}; expected one of {BARRON_KINDS}")
    if int(k_n) < 1:
        raise DomainError("k_n must be >= 1")
    x = _check_data(data)
    return _estimate_from_counts(BinPartition(int(k_n)).counts(x), kind)


def posterior_mean_weights(data, k: int) -> np.ndarray:
    """E[w | X] under a Dirichlet(1, ..., 1) prior: (1 + n w_j) / (k + n)."""
    x = _check_data(data)
    counts = BinPartition(k).counts(x)
    return (1.0 + counts) / (k + x.size)


def posterior_mean_identity_check(data, k_n: int, grid=None) -> float:
    """max |f_n^P(x) - E[p_w(x) | X]| over a dense grid."""
    x = _check_data(data)
    if x.size == 0:
        raise PreconditionError("identity check needs at least one observation")
    grid = np.linspace(0.0, 1.0, 2049) if grid is None else np.asarray(grid, dtype=float)
    lhs = barron_estimator(x, k_n, "polygon")(grid)
    rhs = basis_matrix("polygon", k_n, grid) @ posterior_mean_weights(x, k_n)
    return float(np.max(np.abs(lhs - rhs)))


def _chi2_rule(k):
    bp = np.unique(np.concatenate([breakpoints("polygon", k), [0.5]]))
    return QuadratureRule.piecewise(bp, order=8, sub_panels=max(1, 512 // (bp.size - 1)))


def chi2_risk_study(f0: TargetDensity, beta: float = 2.0,
                    n_list=tuple(10 * 2 ** i for i in range(3, 15)), reps: int = 200,
                    seed: int = 0, threads: int | None = None, c: float = 1.0) -> StudyResult:
    """Monte-Carlo estimate of E chi^2(f0 || f_n^P) with the power(beta) bin rule.

    Samples for different n are prefixes of one draw per replicate.
    """
    if not f0.reciprocal_integrable:
        raise PreconditionError(f"{f0.name}: 1/f0 must be integrable for the chi-square study")
    reps = check_reps(reps, 1)
    cfg = BarronConfig("power", beta, c)
    ns = [int(n) for n in n_list]
    if len(ns) < 2 or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise PreconditionError("n_list must be increasing positive integers with >= 2 entries")
    rules = {}
    for n in ns:
        k = cfg.k_n(n)
        rules.setdefault(k, _chi2_rule(k))

    def one(rng, _i):
        xs = sample_iid(f0, ns[-1], rng)
        out = []
        for n in ns:
            k = cfg.k_n(n)
            est = barron_estimator(xs[:n], k, "polygon")
            out.append(chi_square(f0, est, rules[k]))
        return out

    table = np.asarray(map_replicates(one, reps, seed, threads))
    if not np.all(np.isfinite(table)):
        raise ArithmeticError("non-finite chi-square value encountered")
    stats_ = [mc_mean_se(table[:, j]) for j in range(len(ns))]
    return StudyResult.from_table(
        "n", ns, [m for m, _ in stats_], [s for _, s in stats_], study="barron-chi2",
        density=f0.name, beta=beta, c=c, reps=reps, k_n=[cfg.k_n(n) for n in ns],
        target_slope=-2 * beta / (2 * beta + 1))


class Interval(NamedTuple):
    lower: float
    upper: float
    center: float
    half_width: float
    plug_in: bool = True


def _half_width(n, alpha, value):
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    return float(z * n ** -0.4 * math.sqrt(max(value, 0.0) / 2.0))


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise DomainError("alpha must lie in (0, 1]")


def _check_interior(x):
    if not 0.0 < x < 1.0:
        raise DomainError("x must lie strictly inside (0, 1)")


def confidence_interval(data, x: float, alpha: float = 0.05) -> Interval:
    """Pointwise interval f_n^P(x) +- z_{alpha/2} n^(-2/5) sqrt(f_n^P(x)/2).

    The unknown f0(x) in the asymptotic width is replaced by the plug-in value
    f_n^P(x) (``plug_in`` is always True).
    """
    _check_interior(x)
    _check_alpha(alpha)
    data = _check_data(data)
    if data.size == 0:
        raise PreconditionError("confidence interval needs at least one observation")
    k = BarronConfig("fifth_root").k_n(data.size)
    center = float(barron_estimator(data, k, "polygon")(x)[0])
    h = _half_width(data.size, alpha, center)
    return Interval(center - h, center + h, center, h)


@dataclass
class CLTResult:
    errors: np.ndarray
    mean: float
    variance: float
    coverage: float
    k_n: int
    target_mean: float
    target_variance: float


def clt_study(f0: TargetDensity, x: float = 0.5, n: int = 100_000, reps: int = 500,
              seed: int = 0, threads: int | None = None, alpha: float = 0.05) -> CLTResult:
    """reps independent values of sqrt(n/k_n) [f_n^P(x) - f0(x)] with k_n = ceil(n^(1/5)).

    f_n^P depends on the data only through the bin counts, so each replicate
    draws the counts from Multinomial(n, F0-bin masses), which has exactly the
    distribution of the counts of an iid sample. Also reports the coverage of
    ``confidence_interval`` at level alpha over the same replicates.
    """
    _check_interior(x)
    _check_alpha(alpha)
    reps = check_reps(reps, 1)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if f0.d2 is None:
        raise PreconditionError(f"{f0.name}: second derivative metadata required")
    k = BarronConfig("fifth_root").k_n(n)
    w0 = projection_weights(f0, k)
    truth = float(f0(np.array([x]))[0])
    scale = math.sqrt(n / k)
    xa = np.array([x])

    def one(rng, _i):
        est = _estimate_from_counts(rng.multinomial(n, w0), "polygon")
        v = float(est(xa)[0])
        h = _half_width(n, alpha, v)
        return scale * (v - truth), float(v - h <= truth <= v + h)

    res = np.asarray(map_replicates(one, reps, seed, threads))
    errs = res[:, 0]
    var = float(errs.var(ddof=1)) if reps > 1 else math.nan
    return CLTResult(errs, float(errs.mean()), var, float(res[:, 1].mean()), k,
                     float(f0.d2(xa)[0]) / 6.0, truth / 2.0)
