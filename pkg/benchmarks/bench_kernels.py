"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 200000] [--alpha 0.4] [--repeat 5]

Prints the best-of-``repeat`` time per kernel for each available backend, the
speed-up, and whether both backends returned identical bits.
"""
import argparse
import math
import timeit

import numpy as np

from clusterdr import kernels


def cases(n: int, alpha: float, rng: np.random.Generator):
    m = max(int(math.floor(n**alpha + 1e-9)), 1)
    sizes = np.full(n // m, m, dtype=np.int64)
    sizes[-1] += n - sizes.sum()
    off = np.concatenate([[0], np.cumsum(sizes)])
    v = rng.standard_normal(n)
    w2 = rng.standard_normal((n, 2))
    r = (rng.random(n) < 0.6).astype(np.int8)
    y = np.where(r == 1, rng.standard_normal(n), np.nan)
    pi = rng.uniform(0.01, 1.0, n)
    centre = np.repeat(rng.standard_normal(sizes.size), sizes)
    a1, a2 = 0.5 * np.eye(2), 0.2 * np.eye(2)
    return {
        "compensated_sum": lambda b: kernels.compensated_sum(v, backend=b),
        "segment_sums": lambda b: kernels.segment_sums(v, off, backend=b),
        "influence": lambda b: kernels.influence(r, y, pi, v, backend=b),
        "ar1_paths": lambda b: kernels.ar1_paths(centre, v, off, 0.8, 2.0, backend=b),
        "ar2_paths": lambda b: kernels.ar2_paths(w2, off, a1, a2, backend=b),
        "running_extrema": lambda b: kernels.running_extrema(w2, off, backend=b),
        "running_mean": lambda b: kernels.running_mean(w2, off, backend=b),
        "window_mean": lambda b: kernels.window_mean(w2, off, 3, backend=b),
        "past_means": lambda b: kernels.past_means(v, off, backend=b),
    }


def identical(a, b) -> bool:
    if isinstance(a, tuple):
        return all(identical(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--alpha", type=float, default=0.4, help="cluster size exponent")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    names = kernels.available_backends()
    backends = {name: kernels.get_backend(name) for name in names}
    print(f"n={args.n} alpha={args.alpha} backends={', '.join(names)}")
    print(f"{'kernel':<18}" + "".join(f"{name + ' ms':>12}" for name in names) + f"{'speed-up':>10}  identical")
    for label, fn in cases(args.n, args.alpha, np.random.default_rng(0)).items():
        times = {name: 1e3 * min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat))
                 for name, be in backends.items()}
        outs = [fn(be) for be in backends.values()]
        same = all(identical(outs[0], o) for o in outs[1:])
        ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<18}" + "".join(f"{times[nm]:>12.2f}" for nm in names) + f"{ratio:>10.1f}  {same}")


if __name__ == "__main__":
    main()
