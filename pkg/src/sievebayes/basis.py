"""k-regular histograms, frequency polygons and Bernstein mixtures as convex
combinations of basis densities on [0, 1]."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats

from . import kernels
from .core import SUP_GRID_POINTS, QuadratureRule, l1_distance, sup_distance
from .densities import TargetDensity
from .errors import DomainError, PreconditionError

FAMILY_KINDS = ("histogram", "polygon", "bernstein")
SIMPLEX_TOL = 1e-12


def check_kind(kind: str) -> str:
    if kind not in FAMILY_KINDS:
        raise DomainError(f"unknown family kind {kind!r}; expected one of {FAMILY_KINDS}")
    return kind


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if x.size and (np.any(~np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise DomainError("evaluation points must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class BinPartition:
    """Bins A_1 = [0, 1/k], A_j = ((j-1)/k, j/k] with mid-bin points c_j = (j - 1/2)/k."""

    k: int

    def __post_init__(self):
        if int(self.k) < 1:
            raise DomainError("number of bins must be a positive integer")

    @property
    def edges(self):
        return np.arange(self.k + 1) / self.k

    @property
    def centers(self):
        return (np.arange(1, self.k + 1) - 0.5) / self.k

    def bin_index(self, x):
        """1-based index j with x in A_j."""
        x = _check_unit(np.atleast_1d(x))
        return kernels.bin_index(x, self.k)

    def counts(self, data):
        data = _check_unit(np.atleast_1d(data))
        return np.bincount(kernels.bin_index(data, self.k) - 1, minlength=self.k)

    def half_bins(self, j):
        """(A_j^-, A_j^+) as (left, right) endpoint pairs."""
        lo, hi = (j - 1) / self.k, j / self.k
        c = (j - 0.5) / self.k
        return (lo, c), (c, hi)


def basis_matrix(kind: str, k: int, x) -> np.ndarray:
    """Matrix B with B[i, j] = b_j(x_i), every column a density on [0, 1]."""
    check_kind(kind)
    x = _check_unit(np.atleast_1d(x))
    B = np.zeros((x.size, k))
    rows = np.arange(x.size)
    if kind == "histogram":
        B[rows, kernels.bin_index(x, k) - 1] = k
    elif kind == "polygon":
        i0, i1, c0, c1 = kernels.polygon_stencil(x, k)
        np.add.at(B, (rows, i0), c0)
        np.add.at(B, (rows, i1), c1)
    else:
        j = np.arange(k)
        B[:] = k * stats.binom.pmf(j[None, :], k - 1, x[:, None])
    return B


def family_eval(kind: str, weights, x) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    k = w.size
    x = _check_unit(np.atleast_1d(x))
    if kind == "histogram":
        return k * w[kernels.bin_index(x, k) - 1]
    if kind == "polygon":
        i0, i1, c0, c1 = kernels.polygon_stencil(x, k)
        return c0 * w[i0] + c1 * w[i1]
    check_kind(kind)
    return basis_matrix(kind, k, x) @ w


def breakpoints(kind: str, k: int) -> np.ndarray:
    """Points where a family density of resolution k may be non-smooth."""
    if kind == "histogram":
        return np.arange(k + 1) / k
    if kind == "polygon":
        return np.unique(np.concatenate([[0.0, 1.0], (np.arange(1, k + 1) - 0.5) / k]))
    return np.array([0.0, 1.0])


@dataclass(frozen=True, eq=False)
class WeightedDensity:
    """Family density f_w = sum_j w_j b_j for a simplex weight vector w."""

    kind: str
    weights: np.ndarray

    def __post_init__(self):
        check_kind(self.kind)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1 or np.any(~np.isfinite(w)) or w.min() < -SIMPLEX_TOL:
            raise DomainError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-10:
            raise DomainError(f"weights must sum to 1 (got {w.sum()!r})")
        w = np.maximum(w, 0.0)
        object.__setattr__(self, "weights", w / w.sum())

    @property
    def k(self) -> int:
        return self.weights.size

    @cached_property
    def partition(self) -> BinPartition:
        return BinPartition(self.k)

    def __call__(self, x):
        return family_eval(self.kind, self.weights, x)

    def breakpoints(self):
        return breakpoints(self.kind, self.k)


def mixture_eval(wd: WeightedDensity, x):
    return wd(x)


def uniform_weights(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def projection_weights(f0: TargetDensity, k: int) -> np.ndarray:
    """Bin masses w0_j = F0(j/k) - F0((j-1)/k)."""
    if not f0.on_unit_interval:
        raise PreconditionError("projection weights need a density supported on [0, 1]")
    F = np.asarray(f0.cdf(np.arange(k + 1) / k), dtype=float)
    w = np.maximum(np.diff(F), 0.0)
    return w / w.sum()


def sup_grid(k: int, points: int = SUP_GRID_POINTS) -> np.ndarray:
    """Equispaced grid plus all bin endpoints and mid-bin points of resolution k."""
    part = BinPartition(k)
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, points), part.edges, part.centers]))


def l1_rule(kind: str, k: int, extra=(), sub_panels: int | None = None) -> QuadratureRule:
    """Gauss-Legendre rule whose panels respect the family's breakpoints."""
    bp = np.unique(np.concatenate([breakpoints(kind, k), np.asarray(extra, dtype=float)]))
    if sub_panels is None:
        sub_panels = max(1, 4096 // max(bp.size - 1, 1))
    return QuadratureRule.piecewise(bp, order=8, sub_panels=sub_panels)


def approx_error(kind: str, f0: TargetDensity, k: int, metric: str = "sup",
                 rule: QuadratureRule | None = None) -> float:
    """Distance between f0 and the family density with projection weights."""
    if k < 1:
        raise DomainError("k must be >= 1")
    wd = WeightedDensity(kind, projection_weights(f0, k))
    if metric == "sup":
        return sup_distance(f0, wd, sup_grid(k))
    if metric == "L1":
        return l1_distance(f0, wd, rule or l1_rule(kind, k, extra=[0.5]))
    raise DomainError(f"unknown metric {metric!r}; expected 'sup' or 'L1'")
