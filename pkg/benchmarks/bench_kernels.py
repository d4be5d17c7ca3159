"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--size 256] [--repeat 3]

Also checks that both backends return identical arrays.
"""

import argparse
import time

import numpy as np

from glossforge import kernels


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--radius", type=int, default=12)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    n = args.size
    target = rng.random((n, n))
    thr = 0.5 + 0.5 * (rng.random((n, n)) - 0.5)
    shares = rng.dirichlet(np.ones(5), size=(n, n))
    values = rng.random((n, n))
    mask = rng.random((n, n)) < 0.2

    cases = {
        "error_diffuse": lambda m: m.error_diffuse(target, thr),
        "vector_error_diffuse": lambda m: m.vector_error_diffuse(shares),
        "disk_max_fill": lambda m: m.disk_max_fill(values, mask, args.radius),
    }
    backends = kernels.backends()
    print(f"size {n}x{n}, best of {args.repeat}; active backend: {kernels.BACKEND}")
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}  identical")
    for label, fn in cases.items():
        times, outs = {}, {}
        for name, mod in backends.items():
            times[name], outs[name] = _best(lambda: fn(mod), args.repeat)
        same = "n/a"
        if len(outs) == 2:
            a, b = outs.values()
            if isinstance(a, tuple):
                same = str(all(np.array_equal(x, y) for x, y in zip(a, b)))
            else:
                same = str(np.array_equal(a, b))
        speed = ""
        if "cython" in times and "python" in times:
            speed = f"{times['python'] / times['cython']:.1f}x"
        print(f"{label:<22}" + "".join(f"{times[k]:>11.4f}s" for k in backends) + f"{speed:>10}  {same}")


if __name__ == "__main__":
    main()
