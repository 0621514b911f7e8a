"""Best L1 approximation of a target density by simplex-weighted family densities.

The discretized problem

    min_w  sum_i D_i |(B w)_i - f_i|   subject to  w in the simplex

is solved exactly through its LP dual

    max_{z, mu}  sum_i D_i f_i z_i + mu
    subject to   sum_i B_ij D_i z_i + mu + s_j = 0,   -1 <= z_i <= 1,  s_j >= 0,

which has only k equality rows.  The dual is handed to the bounded-variable
primal simplex kernel; the optimal weights are the reduced
costs of the slack columns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .basis import basis_matrix, check_kind, projection_weights, approx_error
from .core import StudyResult
from .densities import TargetDensity
from .errors import DomainError, PreconditionError, SolverError, StudyError

GRID_FACTOR = 64
LP_TOL = 1e-10
REFACTOR_EVERY = 500


@dataclass(frozen=True, eq=False)
class L1Program:
    """Grid abscissae x with quadrature weights delta, basis matrix B (m, k) and target values f."""

    x: np.ndarray
    delta: np.ndarray
    basis: np.ndarray
    target: np.ndarray

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def m(self) -> int:
        return self.x.size

    def objective(self, w) -> float:
        return float(self.delta @ np.abs(self.basis @ w - self.target))

    def column_masses(self) -> np.ndarray:
        return self.delta @ self.basis


def build_program(kind: str, f0: TargetDensity, k: int, m: int | None = None) -> L1Program:
    """Midpoint grid of m equal panels (m = 64k by default).

    Bin edges and mid-bin points are panel edges whenever 2k divides m, so the
    piecewise-linear histogram and polygon integrands are smooth on every
    panel.  Bernstein columns are polynomials with steep boundary layers; for
    them each pair of panels carries a two-point Gauss-Legendre rule instead.
    """
    check_kind(kind)
    if not f0.on_unit_interval:
        raise PreconditionError("best L1 approximation needs a density supported on [0, 1]")
    k = int(k)
    if k < 1:
        raise DomainError("k must be >= 1")
    m = GRID_FACTOR * k if m is None else int(m)
    if m < 8 * k:
        raise PreconditionError(f"grid size m={m} must be at least 8k={8 * k}")
    if kind == "bernstein":
        if m % 2:
            m += 1
        h = 2.0 / m
        left = np.arange(m // 2) * h
        g = 0.5 / math.sqrt(3.0)
        x = np.sort(np.concatenate([left + (0.5 - g) * h, left + (0.5 + g) * h]))
        delta = np.full(m, h / 2.0)
    else:
        x = (np.arange(m) + 0.5) / m
        delta = np.full(m, 1.0 / m)
    return L1Program(x, delta, basis_matrix(kind, k, x), np.asarray(f0(x), dtype=float))


@dataclass
class L1Solution:
    weights: np.ndarray
    distance: float
    dual_value: float
    iterations: int
    kkt_residual: float


def kkt_residual(prog: L1Program, w, z) -> float:
    """Largest violation of primal/dual feasibility, complementary slackness and
    the duality gap.

    ``z`` is the dual vector (a subgradient sign vector, z_i = sign(r_i)
    wherever r = B w - f is nonzero).
    """
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    r = prog.basis @ w - prog.target
    u = prog.basis.T @ (prog.delta * z)
    mu = u.min()
    terms = [
        abs(1.0 - w.sum()),
        max(0.0, -w.min()),
        max(0.0, np.abs(z).max() - 1.0),
        abs(float(w @ (u - mu))),
        abs(float(prog.delta @ (np.abs(r) - z * r))),
        abs(prog.objective(w) - (mu - float(prog.delta @ (prog.target * z)))),
    ]
    return float(max(terms))


def _refactor(A, c, lo, hi, basis, at_upper, T, d, xb):
    """Recompute tableau, reduced costs and basic values from the original data."""
    binv = np.linalg.inv(A[:, basis])
    T[:] = binv @ A
    d[:] = c - c[basis] @ T
    x_n = np.where(at_upper, hi, lo)
    x_n[basis] = 0.0
    xb[:] = -binv @ (A @ x_n)


def solve_program(prog: L1Program, max_iter: int | None = None) -> tuple[L1Solution, np.ndarray]:
    """Exact LP solve; returns the solution and the dual vector z."""
    B, f = prog.basis, prog.target
    m, k = B.shape
    # scaling objective and rows by m puts all reduced costs at order one;
    # the row duals (the weights) are unchanged
    dl = prog.delta * m
    BD = (B * dl[:, None]).T
    big = 1.0 + float(BD.sum(axis=1).max())
    n_col = m + 1 + k
    T = np.zeros((k, n_col))
    T[:, :m] = BD
    T[:, m] = 1.0
    T[:, m + 1:] = np.eye(k)
    d = np.zeros(n_col)
    d[:m] = -dl * f
    d[m] = -1.0
    lo = np.concatenate([np.full(m, -1.0), [-big], np.zeros(k)])
    hi = np.concatenate([np.full(m, 1.0), [big], np.full(k, np.inf)])
    basis = np.arange(m + 1, n_col, dtype=np.int64)
    is_basic = np.zeros(n_col, dtype=np.bool_)
    is_basic[basis] = True
    at_upper = np.zeros(n_col, dtype=np.bool_)
    xb = BD.sum(axis=1) + big
    cap = 50 * (m + k) if max_iter is None else int(max_iter)
    A = T.copy()
    c = d.copy()
    iters = 0
    while True:
        chunk = min(REFACTOR_EVERY, cap - iters)
        status, done = kernels.bounded_simplex(T, d, lo, hi, basis, is_basic, at_upper, xb,
                                               chunk, LP_TOL)
        iters += done
        if status != kernels.LP_ITERATION_CAP or iters >= cap:
            break
        _refactor(A, c, lo, hi, basis, at_upper, T, d, xb)
    if status == kernels.LP_OPTIMAL:
        # confirm optimality on a freshly factorized tableau
        _refactor(A, c, lo, hi, basis, at_upper, T, d, xb)
        status, extra = kernels.bounded_simplex(T, d, lo, hi, basis, is_basic, at_upper, xb,
                                                max(cap - iters, 1), LP_TOL)
        iters += extra
    if status != kernels.LP_OPTIMAL:
        cert = {"status": int(status), "iterations": int(iters), "max_iter": cap,
                "min_reduced_cost": float(d[~is_basic].min())}
        raise SolverError("LP did not reach optimality", certificate=cert)
    x_all = np.where(at_upper, hi, lo)
    x_all[basis] = xb
    z = x_all[:m]
    w = np.maximum(d[m + 1:], 0.0)
    if w.sum() <= 0:
        raise SolverError("LP returned a degenerate weight vector",
                          certificate={"iterations": int(iters)})
    w = w / w.sum()
    dual = float(dl @ (f * z) + x_all[m]) / m
    sol = L1Solution(w, prog.objective(w), dual, int(iters), 0.0)
    # the kernel works with -z
    sol.kkt_residual = kkt_residual(prog, w, -z)
    return sol, -z


def best_l1_weights(kind: str, f0: TargetDensity, k: int, m: int | None = None):
    """(w*, distance*) minimizing the discretized L1 distance over the simplex."""
    sol, _ = solve_program(build_program(kind, f0, k, m))
    return sol.weights, sol.distance


def subgradient_l1(prog: L1Program, iters: int = 20_000, w0=None):
    """Projected subgradient with a target-level Polyak step (cross-check solver).

    The unknown optimum in the Polyak step is replaced by ``best - level``;
    ``level`` halves whenever 200 iterations pass without improvement.
    """
    k = prog.k
    w = np.full(k, 1.0 / k) if w0 is None else np.asarray(w0, dtype=float)
    val = prog.objective(w)
    best_w, best = w.copy(), val
    level = max(0.1 * val, 1e-12)
    stall = 0
    for _ in range(iters):
        r = prog.basis @ w - prog.target
        g = prog.basis.T @ (prog.delta * np.sign(r))
        gn = g @ g
        if gn == 0.0:
            break
        step = (val - (best - level)) / gn
        w = kernels.project_simplex(w - step * g)
        val = prog.objective(w)
        if val < best - 1e-15:
            best, best_w = val, w.copy()
            stall = 0
        else:
            stall += 1
            if stall >= 200:
                level *= 0.5
                stall = 0
                w = best_w.copy()
                val = best
    return best_w, best


def lower_bound_study(f0: TargetDensity, k_list=(8, 16, 32, 64, 128), kind: str = "polygon",
                      m_factor: int = GRID_FACTOR) -> StudyResult:
    """LP-minimal L1 distance per k with the fitted log-log slope.

    ``info`` also carries the fitted constant C of the k^(-3/2) law (geometric
    mean of d_k k^(3/2)) and the smallest ratio d_k / (C k^(-3/2)).
    """
    if kind == "polygon" and f0.f3_interval is None:
        raise PreconditionError(
            f"{f0.name}: needs an interval where f0'' is bounded away from zero")
    ks = [int(k) for k in k_list]
    if len(ks) < 2:
        raise StudyError("slope fit needs at least two k values")
    if any(k < 1 for k in ks) or len(set(ks)) != len(ks):
        raise PreconditionError("k_list must contain distinct positive integers")
    dists, kkt, proj = [], [], []
    for k in ks:
        sol, _ = solve_program(build_program(kind, f0, k, m_factor * k))
        dists.append(sol.distance)
        kkt.append(sol.kkt_residual)
        proj.append(approx_error(kind, f0, k, "L1"))
    dists = np.asarray(dists)
    karr = np.asarray(ks, dtype=float)
    c_hat = float(np.exp(np.mean(np.log(dists) + 1.5 * np.log(karr))))
    ratio = float(np.min(dists / (c_hat * karr ** -1.5)))
    return StudyResult.from_table(
        "k", ks, dists, np.zeros(len(ks)), study="lower-bound", density=f0.name, family=kind,
        m_factor=m_factor, target_slope=-1.5 if kind == "polygon" else -1.0,
        fitted_constant=c_hat, min_ratio_to_law=ratio, max_kkt_residual=float(max(kkt)),
        projection_l1=[float(p) for p in proj])
