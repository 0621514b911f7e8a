"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is warmed up once (so compilation is excluded) and then timed on
identical inputs; outputs are compared before timing.  A final row times one
complete best-L1 LP solve with each simplex kernel.
"""
import argparse
import time

import numpy as np

from sievebayes import kernels
from sievebayes.best_approx import build_program, solve_program
from sievebayes.densities import catalog_lookup


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = rng.random(1_000_000)
    v = rng.normal(size=4096)
    theta = rng.normal(size=(2000, 4))
    logw = np.log(rng.dirichlet(np.ones(4), size=2000))
    sigma = rng.uniform(0.5, 1.5, size=2000)
    omega = rng.dirichlet(np.ones(2000))
    xs = rng.normal(size=400)
    grid = np.linspace(-5, 5, 2000)
    return [
        ("bin_index (1e6 pts, k=512)", "bin_index", (x, 512)),
        ("polygon_stencil (1e6 pts, k=512)", "polygon_stencil", (x, 512)),
        ("project_simplex (d=4096)", "project_simplex", (v,)),
        ("gauss_mix_loglik (2000 draws, n=400)", "gauss_mix_loglik", (theta, logw, sigma, xs)),
        ("gauss_mix_average (2000 draws, 2000 pts)", "gauss_mix_average",
         (theta, np.exp(logw), sigma, omega, grid)),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def lp_solve_time(impl, k):
    saved = kernels.bounded_simplex
    kernels.bounded_simplex = impl
    try:
        prog = build_program("polygon", catalog_lookup("quartic_c3"), k)
        t0 = time.perf_counter()
        sol, _ = solve_program(prog)
        return time.perf_counter() - t0, sol.distance
    finally:
        kernels.bounded_simplex = saved


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--lp-k", type=int, default=16, help="k for the LP solve row")
    args = p.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':44s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s}")
    for label, name, a in cases(rng):
        f_np = getattr(kernels, name + "_np")
        f_nb = getattr(kernels, name + "_nb")
        r_np, r_nb = f_np(*a), f_nb(*a)
        if not same(r_np, r_nb):
            raise SystemExit(f"{name}: backends disagree")
        t_np = best_time(lambda: f_np(*a), args.repeat)
        t_nb = best_time(lambda: f_nb(*a), args.repeat)
        print(f"{label:44s} {t_np:11.5f} {t_nb:11.5f} {t_np / t_nb:8.1f}x")
    lp_solve_time(kernels.bounded_simplex_nb, 4)  # compile
    t_np, d_np = lp_solve_time(kernels.bounded_simplex_np, args.lp_k)
    t_nb, d_nb = lp_solve_time(kernels.bounded_simplex_nb, args.lp_k)
    if abs(d_np - d_nb) > 1e-12:
        raise SystemExit("bounded_simplex: backends disagree")
    print(f"{'best-L1 LP solve (polygon, k=%d)' % args.lp_k:44s} "
          f"{t_np:11.5f} {t_nb:11.5f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
