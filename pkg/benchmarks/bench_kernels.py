"""Compare the compiled and pure-Python kernel backends.

Times each hot kernel on representative inputs, then a full solve with the
kernels of each backend swapped into ``psarp.kernels``. Prints one row per
benchmark with the speed-up of the compiled backend.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``
"""
import argparse
import timeit

import numpy as np

from psarp import kernels
from psarp.harness import gen_group_lasso
from psarp.solver import SolverConfig, solve
from psarp.tensor_calc import phi_coefficients

KERNELS = ("poly_eval", "mu_coefficients", "hard_groups", "normpow_quadform", "normpow_multilinear")


def kernel_cases(rng):
    groups, size, p = 50, 4, 3
    v = rng.standard_normal(groups * size)
    offsets = np.arange(0, groups * size + 1, size, dtype=np.intp)
    rho = rng.uniform(0.5, 2.0, groups)
    coef = np.zeros((groups, p + 1))
    for g in range(groups):
        kernels.mu_coefficients(float(rho[g]), 0.5, p, coef[g])
    coef[:, 0] = 0.0
    mask = np.ones(groups, dtype=np.uint8)
    r = rng.standard_normal(8)
    d = rng.standard_normal((4, 8))
    phi = phi_coefficients(0.5, 4)
    out = np.empty(p + 1)
    scale, norm = np.empty(groups), np.empty(groups)
    return {
        "poly_eval": lambda m: m.poly_eval(coef[0], 0.3),
        "mu_coefficients": lambda m: m.mu_coefficients(1.3, 0.5, p, out),
        "hard_groups": lambda m: m.hard_groups(v, offsets, rho, coef, np.ones(groups), mask, scale, norm),
        "normpow_quadform": lambda m: m.normpow_quadform(r, d[0], 0.5, 4, phi),
        "normpow_multilinear": lambda m: m.normpow_multilinear(r, d, 0.5, phi),
    }


def time_call(fn, repeat):
    number = 200
    best = min(timeit.repeat(fn, number=number, repeat=repeat))
    return best / number


def with_backend(module, fn):
    saved = {k: getattr(kernels, k) for k in KERNELS}
    try:
        for k in KERNELS:
            setattr(kernels, k, getattr(module, k))
        return fn()
    finally:
        for k, f in saved.items():
            setattr(kernels, k, f)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    mods = kernels.backends()
    names = [n for n in ("cython", "python") if n in mods]
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(names)}")
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    print(f"{'benchmark':<22}" + "".join(f"{n:>14}" for n in names) + f"{'speed-up':>12}")
    for label, call in cases.items():
        t = [time_call(lambda m=mods[n]: call(m), args.repeat) for n in names]
        ratio = t[-1] / t[0] if len(t) > 1 else float("nan")
        print(f"{label:<22}" + "".join(f"{x * 1e6:>11.2f} us" for x in t) + f"{ratio:>11.1f}x")
    prob = gen_group_lasso(groups=10, gsize=4, seed=7)
    cfg = SolverConfig(eps=1e-4)
    t = []
    for n in names:
        t.append(min(timeit.repeat(lambda m=mods[n]: with_backend(m, lambda: solve(prob, cfg)),
                                   number=1, repeat=max(1, args.repeat // 2))))
    ratio = t[-1] / t[0] if len(t) > 1 else float("nan")
    print(f"{'solve (40 vars)':<22}" + "".join(f"{x * 1e3:>11.1f} ms" for x in t) + f"{ratio:>11.1f}x")


if __name__ == "__main__":
    main()
