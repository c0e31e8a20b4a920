"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times the Lasso path on a knockoff-augmented AR(1) design and the LSCV pair
sums on normal scores, checks both backends agree, and prints a table.
"""
import argparse
import time

import numpy as np

from tdfdr import construct_knockoffs, make_rng
from tdfdr._backend import get_kernels
from tdfdr.density import bandwidth_grid, silverman_bandwidth
from tdfdr.lasso import geometric_grid, lambda_max, lasso_path_entries
from tdfdr.simulation import ar1_design


def best_of(func, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - t0)
    return min(times), out


def lasso_case(n, m, seed=0):
    gen = np.random.default_rng(seed)
    model = construct_knockoffs(ar1_design(n, m, 0.3, gen), make_rng(seed))
    k = m // 5
    y = model.design[:, :k] @ gen.choice([-3.5, 3.5], size=k) + gen.normal(size=n)
    y -= y.mean()
    aug = model.augmented
    return aug, y, geometric_grid(lambda_max(aug, y), 200)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    try:
        get_kernels("cython")
    except ImportError:
        print("compiled kernels not built; nothing to compare")
        return 1

    rows = []
    for n, m in ((200, 50), (600, 200)):
        aug, y, grid = lasso_case(n, m)
        res = {}
        for name in ("cython", "python"):
            res[name] = best_of(lambda: lasso_path_entries(aug, y, grid, backend=name), args.repeat)
        same = np.array_equal(res["cython"][1], res["python"][1])
        rows.append((f"lasso path n={n} m={m}", res["cython"][0], res["python"][0], same))

    for size in (2_000, 10_000):
        x = np.sort(np.random.default_rng(1).normal(size=size))
        hs = bandwidth_grid(silverman_bandwidth(x))
        res = {}
        for name in ("cython", "python"):
            kern = get_kernels(name)
            res[name] = best_of(lambda: kern.lscv_pair_sums(x, hs), args.repeat)
        same = all(np.allclose(a, b, rtol=1e-10) for a, b in zip(res["cython"][1], res["python"][1]))
        rows.append((f"LSCV pair sums n={size}", res["cython"][0], res["python"][0], same))

    print(f"{'kernel':<28}{'cython s':>10}{'python s':>10}{'speedup':>9}  agree")
    for name, tc, tp, same in rows:
        print(f"{name:<28}{tc:>10.3f}{tp:>10.3f}{tp / tc:>8.1f}x  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
