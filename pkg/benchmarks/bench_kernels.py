"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --n 500 --dim 300
"""

import argparse
import timeit

import numpy as np

from otalign import _kernels_py, kernels


def cases(n, dim, rng):
    a = rng.standard_normal((n, dim))
    b = rng.standard_normal((n, dim))
    h = np.vstack([a, b])
    pairs = 125 * n
    src = rng.integers(n, size=pairs)
    dst = n + rng.integers(n, size=pairs)
    w = rng.standard_normal(pairs)
    cost = rng.uniform(0, 8, size=(n, n))
    return {
        "l1_cdist": lambda k: k.l1_cdist(a, b),
        "l1_pair_backward": lambda k: k.l1_pair_backward(h, src, dst, w, np.zeros_like(h)),
        "greedy_match": lambda k: k.greedy_match(cost, 4.0),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=500, help="entities per side")
    parser.add_argument("--dim", type=int, default=300)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = [("python", _kernels_py)]
    if kernels.compiled_backend is not None:
        backends.append(("compiled", kernels.compiled_backend))
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for name, fn in cases(args.n, args.dim, np.random.default_rng(0)).items():
        times = [best_of(lambda: fn(k), args.repeat) for _, k in backends]
        speedup = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else ""
        print(f"{name:<18}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + speedup)


if __name__ == "__main__":
    main()
