"""Hot numeric kernels.

Every kernel exists twice: a loop form compiled by numba (``*_nb``) and a
vectorized numpy form (``*_np``).  The unsuffixed public names are bound to one
of them according to ``SIEVEBAYES_DISABLE_NUMBA`` (see ``_accel``).  Both forms
are kept numerically equivalent; ``tests/test_kernels.py`` checks this and
``benchmarks/bench_kernels.py`` times them against each other.
"""
import math

import numpy as np
from scipy.special import logsumexp

from ._accel import USE_NUMBA, njit

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# LP status codes returned by ``bounded_simplex``
LP_OPTIMAL = 0
LP_UNBOUNDED = 1
LP_ITERATION_CAP = 2


# ---------------------------------------------------------------------------
# bin lookup on the regular partition A_1 = [0, 1/k], A_j = ((j-1)/k, j/k]
# ---------------------------------------------------------------------------

def bin_index_np(x, k):
    edges = np.arange(k + 1) / k
    j = np.searchsorted(edges, x, side="left")
    return np.maximum(j, 1)


@njit
def bin_index_nb(x, k):
    edges = np.arange(k + 1) / k
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        j = np.searchsorted(edges, x[i])
        out[i] = j if j > 0 else 1
    return out


# ---------------------------------------------------------------------------
# polygon stencil: p_w(x) = c0 * w[i0] + c1 * w[i1]
# ---------------------------------------------------------------------------

def polygon_stencil_np(x, k):
    x = np.asarray(x, dtype=np.float64)
    if k == 1:
        zero = np.zeros(x.shape, dtype=np.int64)
        return zero, zero, np.ones(x.shape), np.zeros(x.shape)
    pos = k * x - 0.5
    i = np.clip(np.floor(pos), 0, k - 2)
    t = np.where(pos <= 0.0, 0.0, np.where(pos >= k - 1, 1.0, pos - i))
    i0 = i.astype(np.int64)
    return i0, i0 + 1, k * (1.0 - t), k * t


@njit
def polygon_stencil_nb(x, k):
    n = x.shape[0]
    i0 = np.zeros(n, dtype=np.int64)
    i1 = np.zeros(n, dtype=np.int64)
    c0 = np.empty(n)
    c1 = np.empty(n)
    for r in range(n):
        if k == 1:
            c0[r] = 1.0
            c1[r] = 0.0
            continue
        pos = k * x[r] - 0.5
        i = math.floor(pos)
        if i < 0:
            i = 0
        elif i > k - 2:
            i = k - 2
        if pos <= 0.0:
            t = 0.0
        elif pos >= k - 1:
            t = 1.0
        else:
            t = pos - i
        i0[r] = i
        i1[r] = i + 1
        c0[r] = k * (1.0 - t)
        c1[r] = k * t
    return i0, i1, c0, c1


# ---------------------------------------------------------------------------
# Euclidean projection onto the probability simplex (sort-based)
# ---------------------------------------------------------------------------

def project_simplex_np(v):
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@njit
def project_simplex_nb(v):
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1.0)
        if u[i] - t > 0.0:
            theta = t
    out = np.empty(n)
    for i in range(n):
        out[i] = max(v[i] - theta, 0.0)
    return out


# ---------------------------------------------------------------------------
# Gaussian location mixtures with a common scale, one mixture per row
# ---------------------------------------------------------------------------

def gauss_mix_loglik_np(theta, logw, sigma, x, chunk=128):
    m_draws = theta.shape[0]
    n = x.shape[0]
    out = np.empty(m_draws)
    for s in range(0, m_draws, chunk):
        th = theta[s:s + chunk]
        sg = sigma[s:s + chunk]
        z = (x[None, :, None] - th[:, None, :]) / sg[:, None, None]
        terms = logw[s:s + chunk, None, :] - 0.5 * z * z
        per_obs = logsumexp(terms, axis=2)
        out[s:s + chunk] = per_obs.sum(axis=1) - n * (_LOG_SQRT_2PI + np.log(sg))
    return out


@njit
def gauss_mix_loglik_nb(theta, logw, sigma, x):
    m_draws, k = theta.shape
    n = x.shape[0]
    out = np.empty(m_draws)
    buf = np.empty(k)
    for m in range(m_draws):
        s = sigma[m]
        tot = -n * (_LOG_SQRT_2PI + math.log(s))
        for i in range(n):
            mx = -np.inf
            for j in range(k):
                z = (x[i] - theta[m, j]) / s
                buf[j] = logw[m, j] - 0.5 * z * z
                if buf[j] > mx:
                    mx = buf[j]
            if mx == -np.inf:
                tot = -np.inf
                break
            acc = 0.0
            for j in range(k):
                acc += math.exp(buf[j] - mx)
            tot += mx + math.log(acc)
        out[m] = tot
    return out


def gauss_mix_average_np(theta, w, sigma, omega, x, chunk=256):
    """sum_m omega[m] * f_m(x) for mixtures f_m given row-wise."""
    out = np.zeros(x.shape[0])
    for s in range(0, theta.shape[0], chunk):
        th = theta[s:s + chunk]
        sg = sigma[s:s + chunk]
        z = (x[None, :, None] - th[:, None, :]) / sg[:, None, None]
        dens = (w[s:s + chunk, None, :] * np.exp(-0.5 * z * z)).sum(axis=2)
        dens /= sg[:, None] * math.sqrt(2.0 * math.pi)
        out += omega[s:s + chunk] @ dens
    return out


@njit
def gauss_mix_average_nb(theta, w, sigma, omega, x):
    m_draws, k = theta.shape
    out = np.zeros(x.shape[0])
    norm = math.sqrt(2.0 * math.pi)
    for m in range(m_draws):
        if omega[m] == 0.0:
            continue
        s = sigma[m]
        scale = omega[m] / (s * norm)
        for i in range(x.shape[0]):
            acc = 0.0
            for j in range(k):
                z = (x[i] - theta[m, j]) / s
                acc += w[m, j] * math.exp(-0.5 * z * z)
            out[i] += scale * acc
    return out


# ---------------------------------------------------------------------------
# Bounded-variable primal simplex on a dense tableau.
#
# Pricing: ``bland`` false uses the most negative reduced cost (Dantzig) and
# switches to Bland's smallest-index rule after DEGENERATE_STREAK consecutive
# steps of length <= DEGENERATE_STEP, returning to Dantzig once a step makes progress; this
# keeps Bland's anti-cycling guarantee.  ``bland`` true uses Bland throughout.
# Ratio-test entries below PIVOT_REL times the largest entry of the entering
# column are treated as zero.  The caller is expected to refactorize the
# tableau between calls on long solves.
#
# Minimizes c'x subject to A x = b, lo <= x <= hi, starting from a feasible
# basis whose columns form the identity in A.  Arrays are updated in place:
#   T        (m, N)  tableau B^{-1} A
#   d        (N,)    reduced costs c - c_B' B^{-1} A
#   basis    (m,)    column index of each basic variable
#   is_basic (N,)    membership flags
#   at_upper (N,)    nonbasic variable sits at its upper bound
#   xb       (m,)    values of the basic variables
# Returns (status, iterations).
# ---------------------------------------------------------------------------

DEGENERATE_STREAK = 50
DEGENERATE_STEP = 1e-12
PIVOT_REL = 1e-9

def bounded_simplex_np(T, d, lo, hi, basis, is_basic, at_upper, xb, max_iter, tol, bland=False):
    m = T.shape[0]
    movable = hi > lo
    streak = 0
    for it in range(max_iter):
        cand = ~is_basic & ((~at_upper & movable & (d < -tol)) | (at_upper & (d > tol)))
        if not cand.any():
            return LP_OPTIMAL, it
        if bland or streak >= DEGENERATE_STREAK:
            j = int(np.argmax(cand))
        else:
            j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
        sigma = -1.0 if at_upper[j] else 1.0
        col = sigma * T[:, j]
        piv_tol = max(1e-11, PIVOT_REL * np.abs(col).max())
        theta = hi[j] - lo[j]
        leave = -1
        lob = lo[basis]
        hib = hi[basis]
        lim = np.full(m, np.inf)
        dec = col > piv_tol
        inc = col < -piv_tol
        lim[dec] = (xb[dec] - lob[dec]) / col[dec]
        fin = inc & np.isfinite(hib)
        lim[fin] = (hib[fin] - xb[fin]) / (-col[fin])
        if lim.size:
            best = lim.min()
            if best < theta:
                ties = np.nonzero(lim <= best)[0]
                leave = int(ties[np.argmin(basis[ties])])
                theta = best
        if not np.isfinite(theta):
            return LP_UNBOUNDED, it
        theta = max(theta, 0.0)
        streak = streak + 1 if theta <= DEGENERATE_STEP else 0
        xb -= theta * col
        if leave < 0:
            at_upper[j] = not at_upper[j]
            continue
        r = leave
        out_var = basis[r]
        at_upper[out_var] = col[r] < 0.0
        is_basic[out_var] = False
        entering_value = lo[j] + theta if sigma > 0 else hi[j] - theta
        piv_row = T[r] / T[r, j]
        T -= np.outer(T[:, j], piv_row)
        T[r] = piv_row
        d -= d[j] * piv_row
        basis[r] = j
        is_basic[j] = True
        at_upper[j] = False
        xb[r] = entering_value
    return LP_ITERATION_CAP, max_iter


@njit
def bounded_simplex_nb(T, d, lo, hi, basis, is_basic, at_upper, xb, max_iter, tol, bland=False):
    m, n_col = T.shape
    streak = 0
    for it in range(max_iter):
        use_bland = bland or streak >= DEGENERATE_STREAK
        j = -1
        best_score = -1.0
        for c in range(n_col):
            if is_basic[c]:
                continue
            if at_upper[c]:
                ok = d[c] > tol
            else:
                ok = hi[c] > lo[c] and d[c] < -tol
            if not ok:
                continue
            if use_bland:
                j = c
                break
            if abs(d[c]) > best_score:
                best_score = abs(d[c])
                j = c
        if j < 0:
            return LP_OPTIMAL, it
        sigma = -1.0 if at_upper[j] else 1.0
        theta = hi[j] - lo[j]
        leave = -1
        cmax = 0.0
        for i in range(m):
            cmax = max(cmax, abs(T[i, j]))
        piv_tol = max(1e-11, PIVOT_REL * cmax)
        for i in range(m):
            a = sigma * T[i, j]
            b = basis[i]
            if a > piv_tol:
                lim = (xb[i] - lo[b]) / a
            elif a < -piv_tol and np.isfinite(hi[b]):
                lim = (hi[b] - xb[i]) / (-a)
            else:
                continue
            if lim < theta or (leave >= 0 and lim == theta and b < basis[leave]):
                theta = lim
                leave = i
        if not np.isfinite(theta):
            return LP_UNBOUNDED, it
        if theta < 0.0:
            theta = 0.0
        streak = streak + 1 if theta <= DEGENERATE_STEP else 0
        for i in range(m):
            xb[i] -= theta * sigma * T[i, j]
        if leave < 0:
            at_upper[j] = not at_upper[j]
            continue
        r = leave
        out_var = basis[r]
        at_upper[out_var] = sigma * T[r, j] < 0.0
        is_basic[out_var] = False
        entering_value = lo[j] + theta if sigma > 0 else hi[j] - theta
        piv = T[r, j]
        for c in range(n_col):
            T[r, c] /= piv
        for i in range(m):
            if i == r:
                continue
            f = T[i, j]
            if f != 0.0:
                for c in range(n_col):
                    T[i, c] -= f * T[r, c]
        dj = d[j]
        if dj != 0.0:
            for c in range(n_col):
                d[c] -= dj * T[r, c]
        basis[r] = j
        is_basic[j] = True
        at_upper[j] = False
        xb[r] = entering_value
    return LP_ITERATION_CAP, max_iter


if USE_NUMBA:
    bin_index = bin_index_nb
    polygon_stencil = polygon_stencil_nb
    project_simplex = project_simplex_nb
    gauss_mix_loglik = gauss_mix_loglik_nb
    gauss_mix_average = gauss_mix_average_nb
    bounded_simplex = bounded_simplex_nb
else:
    bin_index = bin_index_np
    polygon_stencil = polygon_stencil_np
    project_simplex = project_simplex_np
    gauss_mix_loglik = gauss_mix_loglik_np
    gauss_mix_average = gauss_mix_average_np
    bounded_simplex = bounded_simplex_np
