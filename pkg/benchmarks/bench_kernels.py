"""Time the compiled and numpy kernel backends on representative sizes.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from fldtransfer import kernels


def cases(g):
    d = 10
    A = g.standard_normal((d, d))
    S = A @ A.T + np.eye(d)
    nu = g.standard_normal(d)
    W100 = g.standard_normal((100, d))
    W10k = g.standard_normal((10_000, d))
    X = g.standard_normal((10_000, d))
    y = np.arange(10_000) % 2
    rules = g.standard_normal((11, d))
    ranks = 2 * np.arange(1, 21, dtype=np.int64)
    return {
        "mean_projected_risk B=100": lambda m: kernels.mean_projected_risk(W100, nu, S, impl=m),
        "mean_projected_risk B=1e4": lambda m: kernels.mean_projected_risk(W10k, nu, S, impl=m),
        "rule_balanced_accuracy 1e4x11": lambda m: kernels.rule_balanced_accuracy(X, y, rules, impl=m),
        "signed_rank_null_counts n=20": lambda m: kernels.signed_rank_null_counts(ranks, impl=m),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend not built; only the numpy fallback is available")
    names = sorted(impls)
    print(f"{'kernel':<32}" + "".join(f"{n + ' (us)':>16}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        times = {}
        for n in names:
            t = timeit.Timer(lambda: fn(impls[n]))
            number, _ = t.autorange()
            times[n] = min(t.repeat(args.repeat, number)) / number * 1e6
        line = f"{label:<32}" + "".join(f"{times[n]:>16.1f}" for n in names)
        if len(names) > 1:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
