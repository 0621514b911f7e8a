"""Catalog of reference densities with CDFs, exact inverse-CDF samplers and
smoothness metadata."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError, SamplerError, UnknownDensityError

CATALOG_NAMES = ("uniform", "quartic_c3", "holder", "lipschitz_tent", "smooth_bump",
                 "normal", "normal_mixture")


@dataclass(frozen=True, eq=False)
class TargetDensity:
    """A reference density f0 with its CDF and metadata.

    ``beta`` is the Hölder regularity, ``seminorm`` the exact value of
    ``[f]_beta`` and ``holder_const`` an ``L`` with ``[f]_beta + sup f <= L``.
    ``bc_exponents`` are the powers (p, q) with f0'(x) ~ a x^p at 0 and
    f0'(x) ~ b (1 - x)^q at 1 (``inf`` when f0' vanishes identically near the
    endpoint); ``bc_flags`` tell whether both boundary conditions hold at the
    effective order ``min(beta, 2)``.  ``f3_interval`` is an interval where
    f0'' is bounded away from zero.
    """

    name: str
    pdf: Callable
    cdf: Callable
    support: tuple
    beta: float
    seminorm: float
    holder_const: float
    min_value: float
    bc_exponents: tuple = (math.inf, math.inf)
    d1: Callable | None = None
    d2: Callable | None = None
    f3_interval: tuple | None = None
    reciprocal_integrable: bool = True
    ppf: Callable | None = None
    _table: dict = field(default_factory=dict, repr=False)

    def __call__(self, x):
        return self.pdf(np.asarray(x, dtype=float))

    eval = __call__

    @property
    def on_unit_interval(self) -> bool:
        return self.support == (0.0, 1.0)

    @property
    def bc_flags(self) -> tuple:
        need = min(self.beta, 2.0) - 1.0
        if need <= 0:
            return True, True
        p, q = self.bc_exponents
        return p >= need, q >= need

    def quad_domain(self):
        """Finite interval carrying all but a negligible amount of mass."""
        lo, hi = self.support
        if np.isfinite(lo) and np.isfinite(hi):
            return lo, hi
        return self.inverse_cdf(np.array([1e-15, 1 - 1e-15])).tolist()

    def _cdf_table(self):
        if "grid" not in self._table:
            lo, hi = self.support
            if np.isfinite(lo) and np.isfinite(hi):
                grid = np.linspace(lo, hi, 1025)
            else:
                grid = np.linspace(-40.0, 40.0, 4097)
            vals = np.asarray(self.cdf(grid), dtype=float)
            if np.any(np.diff(vals) < -1e-14) or not np.all(np.isfinite(vals)):
                raise SamplerError(f"cdf of {self.name!r} is numerically non-monotone")
            self._table["grid"] = grid
            self._table["vals"] = np.maximum.accumulate(vals)
        return self._table["grid"], self._table["vals"]

    def inverse_cdf(self, u, tol=1e-12, max_iter=100):
        """Solve cdf(x) = u by bracketed Newton iteration (bisection fallback)."""
        u = np.asarray(u, dtype=float)
        if self.ppf is not None:
            return np.asarray(self.ppf(u), dtype=float)
        grid, vals = self._cdf_table()
        idx = np.clip(np.searchsorted(vals, u, side="left"), 1, grid.size - 1)
        a = grid[idx - 1].copy()
        b = grid[idx].copy()
        x = np.interp(u, vals, grid)
        for _ in range(max_iter):
            fx = self.cdf(x) - u
            below = fx < 0
            a = np.where(below, x, a)
            b = np.where(below, b, x)
            dens = self.pdf(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - fx / dens
            bad = ~((xn > a) & (xn < b))
            xn = np.where(bad, 0.5 * (a + b), xn)
            done = (np.abs(xn - x) <= tol) | (b - a <= tol)
            x = xn
            if done.all():
                break
        else:
            raise SamplerError(f"inverse cdf of {self.name!r} did not reach tolerance {tol}")
        return x


def sample_iid(f0: TargetDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws by inverse-CDF transform of uniforms."""
    if n < 0:
        raise DomainError("sample size must be nonnegative")
    if n == 0:
        return np.empty(0)
    return f0.inverse_cdf(rng.random(int(n)))


def floor_beta(beta: float) -> int:
    """Largest integer strictly below beta."""
    return int(math.ceil(beta) - 1)


def holder_seminorm_estimate(f0: TargetDensity, grid=None, beta=None) -> float:
    """Dense-grid estimate of [f]_beta using finite-difference derivatives."""
    beta = f0.beta if beta is None else float(beta)
    if grid is None:
        lo, hi = f0.quad_domain()
        grid = np.linspace(lo, hi, 2001)
    x = np.asarray(grid, dtype=float)
    g = np.asarray(f0(x), dtype=float)
    for _ in range(floor_beta(beta)):
        g = np.gradient(g, x, edge_order=2)
    expo = beta - floor_beta(beta)
    if np.ptp(g) == 0.0:
        return 0.0
    if expo == 1.0:
        return float(np.max(np.abs(np.diff(g)) / np.diff(x) ** expo))
    best = 0.0
    for start in range(0, x.size, 256):
        xi = x[start:start + 256, None]
        gi = g[start:start + 256, None]
        dx = np.abs(xi - x[None, :])
        dg = np.abs(gi - g[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(dx > 0, dg / dx ** expo, 0.0)
        best = max(best, float(r.max()))
    return best


# ---------------------------------------------------------------------------
# catalog entries
# ---------------------------------------------------------------------------

def _uniform():
    return TargetDensity(
        name="uniform",
        pdf=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        cdf=lambda x: np.clip(np.asarray(x, dtype=float), 0.0, 1.0),
        support=(0.0, 1.0), beta=math.inf, seminorm=0.0, holder_const=1.0, min_value=1.0,
        d1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        d2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        ppf=lambda u: np.asarray(u, dtype=float),
    )


def _quartic_c3():
    # f0(x) = x^4 - 4x^3/3 + 17/15, f0'(x) = 4x^2 (x - 1), f0'' = 12x^2 - 8x, f0''' = 24x - 8
    def pdf(x):
        x = np.asarray(x, dtype=float)
        return x**4 - 4.0 * x**3 / 3.0 + 17.0 / 15.0

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return x**5 / 5.0 - x**4 / 3.0 + 17.0 * x / 15.0

    return TargetDensity(
        name="quartic_c3", pdf=pdf, cdf=cdf, support=(0.0, 1.0), beta=3.0,
        seminorm=16.0, holder_const=16.0 + 17.0 / 15.0, min_value=0.8,
        bc_exponents=(2.0, 1.0),
        d1=lambda x: 4.0 * np.asarray(x, dtype=float) ** 2 * (np.asarray(x, dtype=float) - 1.0),
        d2=lambda x: 12.0 * np.asarray(x, dtype=float) ** 2 - 8.0 * np.asarray(x, dtype=float),
        f3_interval=(0.2, 0.4),
    )


def _holder(beta):
    if not (0.0 < beta <= 1.0):
        raise DomainError(f"holder family needs beta in (0, 1], got {beta}")
    c = 1.0 / (1.0 + 0.5**beta / (beta + 1.0))
    half = 0.5 ** (beta + 1.0) / (beta + 1.0)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return c * (1.0 + np.abs(x - 0.5) ** beta)

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        s = np.sign(x - 0.5) * np.abs(x - 0.5) ** (beta + 1.0) / (beta + 1.0)
        return c * (x + half + s)

    label = f"holder({beta:g})"
    return TargetDensity(
        name=label, pdf=pdf, cdf=cdf, support=(0.0, 1.0), beta=float(beta),
        seminorm=c, holder_const=c * (2.0 + 0.5**beta), min_value=c,
    )


def _lipschitz_tent():
    # f(x) = (2/3)(1 + 2 min(x, 1 - x)): peak 4/3 at 1/2, floor 2/3 at the endpoints
    def pdf(x):
        x = np.asarray(x, dtype=float)
        return (2.0 / 3.0) * (1.0 + 2.0 * np.minimum(x, 1.0 - x))

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        left = (2.0 / 3.0) * (x + x * x)
        y = 1.0 - x
        right = 1.0 - (2.0 / 3.0) * (y + y * y)
        return np.where(x <= 0.5, left, right)

    return TargetDensity(
        name="lipschitz_tent", pdf=pdf, cdf=cdf, support=(0.0, 1.0), beta=1.0,
        seminorm=4.0 / 3.0, holder_const=8.0 / 3.0, min_value=2.0 / 3.0,
    )


def _smooth_bump():
    # f(x) = 1 - cos(2 pi x) / 2; f0'(x) = pi sin(2 pi x) vanishes linearly at both ends
    tp = 2.0 * math.pi

    def pdf(x):
        return 1.0 - 0.5 * np.cos(tp * np.asarray(x, dtype=float))

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return x - np.sin(tp * x) / (2.0 * tp)

    return TargetDensity(
        name="smooth_bump", pdf=pdf, cdf=cdf, support=(0.0, 1.0), beta=2.0,
        seminorm=2.0 * math.pi**2, holder_const=2.0 * math.pi**2 + 1.5, min_value=0.5,
        bc_exponents=(1.0, 1.0),
        d1=lambda x: math.pi * np.sin(tp * np.asarray(x, dtype=float)),
        d2=lambda x: 2.0 * math.pi**2 * np.cos(tp * np.asarray(x, dtype=float)),
    )


def _normal():
    return TargetDensity(
        name="normal",
        pdf=lambda x: np.exp(-0.5 * np.asarray(x, dtype=float) ** 2) / math.sqrt(2.0 * math.pi),
        cdf=lambda x: special.ndtr(np.asarray(x, dtype=float)),
        support=(-math.inf, math.inf), beta=math.inf, seminorm=math.nan,
        holder_const=math.nan, min_value=0.0, reciprocal_integrable=False,
        ppf=special.ndtri,
    )


def _normal_mixture():
    # 0.6 N(-1, 0.8^2) + 0.4 N(1.2, 0.6^2)
    comps = ((0.6, -1.0, 0.8), (0.4, 1.2, 0.6))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return sum(w * np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
                   for w, m, s in comps)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return sum(w * special.ndtr((x - m) / s) for w, m, s in comps)

    return TargetDensity(
        name="normal_mixture", pdf=pdf, cdf=cdf, support=(-math.inf, math.inf),
        beta=math.inf, seminorm=math.nan, holder_const=math.nan, min_value=0.0,
        reciprocal_integrable=False,
    )


_FIXED = {
    "uniform": _uniform,
    "quartic_c3": _quartic_c3,
    "lipschitz_tent": _lipschitz_tent,
    "smooth_bump": _smooth_bump,
    "normal": _normal,
    "normal_mixture": _normal_mixture,
}

_HOLDER_RE = re.compile(r"^holder\s*(?:\(\s*([^)]*)\s*\)|[:=]\s*(\S+))$")


def catalog_lookup(name: str, beta: float | None = None) -> TargetDensity:
    """Return the catalog density called ``name``.

    The Hölder family is addressed as ``"holder(0.5)"``, ``"holder:0.5"`` or
    ``catalog_lookup("holder", beta=0.5)``.
    """
    key = str(name).strip()
    if key in _FIXED:
        return _FIXED[key]()
    if key == "holder":
        if beta is None:
            raise DomainError("holder family needs a beta value")
        return _holder(float(beta))
    m = _HOLDER_RE.match(key)
    if m:
        raw = m.group(1) if m.group(1) is not None else m.group(2)
        try:
            b = float(raw)
        except ValueError:
            raise DomainError(f"cannot parse holder exponent from {name!r}") from None
        return _holder(b)
    raise UnknownDensityError(f"unknown density {name!r}; known: {', '.join(CATALOG_NAMES)}")
