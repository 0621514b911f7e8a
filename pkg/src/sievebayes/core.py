"""Deterministic numerical core: quadrature, distances, divergences, Dirichlet
draws, log-domain helpers, log-log slope fits and seeded random streams."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import DataFileError, DivergenceError, DomainError, PreconditionError, StudyError

DEFAULT_PANELS = 4096
POSITIVITY_FLOOR = 1e-12
SUP_GRID_POINTS = 8192
FIT_FLOOR = 1e-12

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


@dataclass(frozen=True)
class QuadratureRule:
    """Composite rule on ``[a, b]``.

    ``scheme`` is ``"simpson"`` (3 nodes per panel, exact for cubics),
    ``"midpoint"`` (exact for linear functions) or ``"gauss"`` (Gauss-Legendre
    with ``order`` nodes per panel).  When ``breakpoints`` is given the panels
    are the intervals between consecutive breakpoints, each split into
    ``panel_count`` equal sub-panels, so kinks and jumps of a piecewise-smooth
    integrand fall on panel boundaries.
    """

    panel_count: int = DEFAULT_PANELS
    scheme: str = "simpson"
    a: float = 0.0
    b: float = 1.0
    order: int = 8
    breakpoints: tuple | None = None

    def __post_init__(self):
        if self.panel_count < 1:
            raise DomainError("panel_count must be a positive integer")
        if self.scheme not in ("simpson", "midpoint", "gauss"):
            raise DomainError(f"unknown quadrature scheme {self.scheme!r}")
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.b > self.a):
            raise DomainError("quadrature domain must be a finite interval with a < b")

    @classmethod
    def piecewise(cls, breakpoints, order=8, sub_panels=1):
        bp = np.unique(np.asarray(breakpoints, dtype=float))
        return cls(panel_count=sub_panels, scheme="gauss", a=float(bp[0]), b=float(bp[-1]),
                   order=order, breakpoints=tuple(bp.tolist()))

    def _panel_edges(self):
        if self.breakpoints is None:
            return np.linspace(self.a, self.b, self.panel_count + 1)
        bp = np.asarray(self.breakpoints, dtype=float)
        if self.panel_count == 1:
            return bp
        frac = np.linspace(0.0, 1.0, self.panel_count + 1)[:-1]
        inner = (bp[:-1, None] + np.diff(bp)[:, None] * frac[None, :]).ravel()
        return np.append(inner, bp[-1])

    def nodes_weights(self):
        edges = self._panel_edges()
        h = np.diff(edges)
        if self.scheme == "midpoint":
            return 0.5 * (edges[:-1] + edges[1:]), h
        if self.scheme == "simpson":
            nodes = np.empty(2 * h.size + 1)
            nodes[0::2] = edges
            nodes[1::2] = 0.5 * (edges[:-1] + edges[1:])
            w = np.zeros_like(nodes)
            w[0:-1:2] += h / 6.0
            w[2::2] += h / 6.0
            w[1::2] = 4.0 * h / 6.0
            return nodes, w
        t, wt = _gauss_legendre(self.order)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + 0.5 * h[:, None] * t[None, :]).ravel()
        w = (0.5 * h[:, None] * wt[None, :]).ravel()
        return nodes, w


DEFAULT_RULE = QuadratureRule()


def _values(f, x):
    v = f(x) if callable(f) else f
    return np.broadcast_to(np.asarray(v, dtype=float), x.shape)


def integrate(f: Callable, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Composite-rule approximation of the integral of a vectorized ``f``."""
    x, w = rule.nodes_weights()
    v = _values(f, x)
    bad = ~np.isfinite(v)
    if bad.any():
        raise DomainError(f"integrand is not finite at x={x[np.argmax(bad)]!r}")
    return float(v @ w)


def l1_distance(f, g, rule: QuadratureRule = DEFAULT_RULE) -> float:
    x, w = rule.nodes_weights()
    return float(np.abs(_values(f, x) - _values(g, x)) @ w)


def sup_distance(f, g, eval_grid) -> float:
    grid = np.asarray(eval_grid, dtype=float)
    if grid.size == 0:
        raise DomainError("sup_distance needs a nonempty evaluation grid")
    return float(np.max(np.abs(_values(f, grid) - _values(g, grid))))


def hellinger(f, g, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Hellinger distance (integral of (sqrt f - sqrt g)^2) ** 1/2, no 1/2 factor."""
    x, w = rule.nodes_weights()
    fv = np.maximum(_values(f, x), 0.0)
    gv = np.maximum(_values(g, x), 0.0)
    return float(math.sqrt(max(((np.sqrt(fv) - np.sqrt(gv)) ** 2) @ w, 0.0)))


def _log_ratio(f0v, fv, x, floor, strict):
    pos = f0v > 0
    if strict:
        bad = pos & ~(fv > 0)
        if bad.any():
            node = float(x[np.argmax(bad)])
            raise DivergenceError(f"density vanishes at x={node!r} where f0 > 0", node=node)
    fv = np.maximum(fv, floor)
    lr = np.zeros_like(f0v)
    lr[pos] = np.log(f0v[pos]) - np.log(fv[pos])
    return lr, fv


def kl_and_v2(f0, f, rule: QuadratureRule = DEFAULT_RULE, floor=POSITIVITY_FLOOR, strict=False):
    """Return (KL(f0; f), V2(f0; f)) with V2 the second moment of log(f0/f) under f0.

    KL is integrated in the pointwise nonnegative form
    f0 log(f0/f) - f0 + f, equal to the usual divergence when both integrate
    to one.  ``f`` is floored at ``floor``; with ``strict`` a zero of ``f``
    where ``f0 > 0`` raises DivergenceError instead.
    """
    x, w = rule.nodes_weights()
    f0v = _values(f0, x)
    fv = _values(f, x).copy()
    lr, fv = _log_ratio(f0v, fv, x, floor, strict)
    kl_pt = f0v * lr - f0v + fv
    kl = float(np.maximum(kl_pt, 0.0) @ w)
    v2 = float((f0v * lr * lr) @ w)
    return kl, v2


def chi_square(f0, f, rule: QuadratureRule = DEFAULT_RULE) -> float:
    x, w = rule.nodes_weights()
    fv = _values(f, x)
    bad = ~(fv > 0)
    if bad.any():
        raise DomainError(f"chi-square denominator is not positive at x={x[np.argmax(bad)]!r}")
    f0v = _values(f0, x)
    return float(((f0v - fv) ** 2 / fv) @ w)


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomSource:
    """Counter-based stream identified by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) % 2**64, spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    return RandomSource(seed, stream_id).generator()


def default_threads() -> int:
    return os.cpu_count() or 1


def map_replicates(fn, reps: int, seed: int, threads: int | None = None, offset: int = 0):
    """Evaluate ``fn(rng, i)`` for replicates i = 0..reps-1, each on its own stream.

    Results come back in replicate order, so serial and threaded runs agree.
    """
    threads = default_threads() if threads is None else max(1, int(threads))
    gens = [stream(seed, offset + i) for i in range(reps)]
    if threads == 1 or reps <= 1:
        return [fn(g, i) for i, g in enumerate(gens)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, gens, range(reps)))


def sample_dirichlet(params, rng: np.random.Generator, size=None):
    alpha = np.asarray(params, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0 or not np.all(alpha > 0) or not np.all(np.isfinite(alpha)):
        raise DomainError("Dirichlet parameters must be finite and strictly positive")
    if alpha.size == 1:
        shape = (1,) if size is None else (size, 1)
        return np.ones(shape)
    w = rng.dirichlet(alpha, size=size)
    return w / w.sum(axis=-1, keepdims=True)


def logsumexp(values) -> float:
    return float(special.logsumexp(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)


def fit_log_log_slope(points) -> SlopeFit:
    """Ordinary least squares of log y on log x."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise StudyError("slope fit needs at least two (x, y) points")
    if np.any(pts <= 0):
        raise StudyError("log-log fit needs strictly positive coordinates")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    mx, my = lx.mean(), ly.mean()
    sxx = float(((lx - mx) ** 2).sum())
    if sxx == 0.0:
        raise StudyError("slope fit needs at least two distinct abscissae")
    slope = float(((lx - mx) * (ly - my)).sum() / sxx)
    intercept = float(my - slope * mx)
    resid = ly - (intercept + slope * lx)
    rss = float(resid @ resid)
    tss = float(((ly - my) ** 2).sum())
    dof = max(lx.size - 2, 1)
    stderr = math.sqrt(rss / dof / sxx)
    r2 = 1.0 if tss == 0.0 else min(max(1.0 - rss / tss, 0.0), 1.0)
    if rss <= 1e-28 * max(tss, 1.0):
        stderr, r2 = 0.0, 1.0
    return SlopeFit(slope, intercept, stderr, r2)


# ---------------------------------------------------------------------------
# study results
# ---------------------------------------------------------------------------

def fmt17(v) -> str:
    return format(float(v), ".17g")


@dataclass
class StudyResult:
    """Rate-study table with a fitted log-log slope."""

    abscissa_name: str
    abscissa: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    fit: SlopeFit | None
    info: dict = field(default_factory=dict)

    @classmethod
    def from_table(cls, name, xs, est, se, **info):
        """Build a result and fit the slope; no fit is made when some estimate is
        at or below FIT_FLOOR (exact representation up to rounding)."""
        xs = np.asarray(xs, dtype=float)
        est = np.asarray(est, dtype=float)
        fit = None
        if np.all(est > FIT_FLOOR):
            fit = fit_log_log_slope(np.column_stack([xs, est]))
        return cls(name, xs, est, np.asarray(se, dtype=float), fit, dict(info))

    def rows(self):
        for x, e, s in zip(self.abscissa, self.estimate, self.stderr):
            yield (int(x) if float(x).is_integer() else float(x)), float(e), float(s)

    def write_csv(self, path, value_name="estimate"):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([self.abscissa_name, value_name, "stderr"])
            for x, e, s in self.rows():
                wr.writerow([x if isinstance(x, int) else fmt17(x), fmt17(e), fmt17(s)])

    def summary(self) -> dict:
        fit = self.fit
        return {
            "slope": None if fit is None else fit.slope,
            "slope_stderr": None if fit is None else fit.stderr,
            "intercept": None if fit is None else fit.intercept,
            "r_squared": None if fit is None else fit.r_squared,
            **self.info,
        }


def check_reps(reps, minimum=1):
    if int(reps) < minimum:
        raise PreconditionError(f"reps must be >= {minimum}, got {reps}")
    return int(reps)


def mc_mean_se(values: Sequence[float]):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def read_observations(path, support=(0.0, 1.0)) -> np.ndarray:
    """Read one real per line; blank lines and ``#`` comments are skipped.

    With ``support=(lo, hi)`` every value must lie in [lo, hi]; ``None``
    accepts any finite real.  Violations raise DataFileError naming the line.
    """
    values = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise DataFileError(f"{path}:{lineno}: not a real number: {text!r}",
                                    line=lineno) from None
            if not math.isfinite(v):
                raise DataFileError(f"{path}:{lineno}: value {text} is not finite", line=lineno)
            if support is not None and not (support[0] <= v <= support[1]):
                raise DataFileError(
                    f"{path}:{lineno}: value {v!r} outside [{support[0]:g}, {support[1]:g}]",
                    line=lineno)
            values.append(v)
    return np.asarray(values, dtype=float)
