"""Benchmark the compiled kernel backend against the pure-python fallback.

The two backends implement sparse integer-keyed convolution and per-offset
maximum reduction with identical accumulation order, so their outputs must be
bit-identical; this script times both and verifies that equality on the way.

Run:  python3 benchmarks/bench_kernels.py [--sizes 1000,5000,20000] [--seed 0]
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np


class Backend:
    def __init__(self, name, convolve, offset_reduce_max):
        self.BACKEND = name
        self.convolve = convolve
        self.offset_reduce_max = offset_reduce_max


def load_backend(name):
    # reload returns the same re-initialized module object, so the functions
    # must be captured before the next reload swaps them out
    os.environ["BEAMKAM_KERNELS"] = name
    import beamkam._kernels as k
    importlib.reload(k)
    return Backend(k.BACKEND, k.convolve, k.offset_reduce_max)


def random_sparse(rng, n, dims=2, span=40):
    keys = rng.integers(-span, span + 1, size=(n, dims)).astype(np.int64)
    keys = np.unique(keys, axis=0)
    vals = rng.standard_normal(len(keys)) + 1j * rng.standard_normal(len(keys))
    return keys, vals


def bench(fn, *args, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    parser = argparse.ArgumentParser()
    # the fallback materializes the full pair array (na*nb rows), so keep the
    # default sizes modest; the compiled backend streams and scales further
    parser.add_argument("--sizes", default="500,2000,8000")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]

    py = load_backend("python")
    if py.BACKEND != "python":
        print("could not force python backend", file=sys.stderr)
        return 1
    cy = load_backend("compiled")
    if cy.BACKEND != "compiled":
        print("note: compiled backend unavailable, timing python only")
        cy = None

    rng = np.random.default_rng(args.seed)
    print(f"{'op':<20}{'n':>8}{'python':>12}{'compiled':>12}{'speedup':>9}")
    for n in sizes:
        ka, va = random_sparse(rng, n)
        kb, vb = random_sparse(rng, n // 2 + 1)
        t_py, out_py = bench(py.convolve, ka, va, kb, vb, 1e-15)
        line = f"{'convolve':<20}{n:>8}{t_py * 1e3:>10.2f}ms"
        if cy is not None:
            t_cy, out_cy = bench(cy.convolve, ka, va, kb, vb, 1e-15)
            same = (np.array_equal(out_py[0], out_cy[0])
                    and np.array_equal(out_py[1], out_cy[1]))
            line += f"{t_cy * 1e3:>10.2f}ms{t_py / t_cy:>8.1f}x"
            if not same:
                print("MISMATCH between backends in convolve", file=sys.stderr)
                return 1
        print(line)

        rows = rng.integers(-40, 41, size=(n, 2)).astype(np.int64)
        cols = rng.integers(-40, 41, size=(n, 2)).astype(np.int64)
        mags = np.abs(rng.standard_normal(n))
        t_py, out_py = bench(py.offset_reduce_max, rows, cols, mags)
        line = f"{'offset_reduce_max':<20}{n:>8}{t_py * 1e3:>10.2f}ms"
        if cy is not None:
            t_cy, out_cy = bench(cy.offset_reduce_max, rows, cols, mags)
            same = (np.array_equal(out_py[0], out_cy[0])
                    and np.array_equal(out_py[1], out_cy[1]))
            line += f"{t_cy * 1e3:>10.2f}ms{t_py / t_cy:>8.1f}x"
            if not same:
                print("MISMATCH between backends in offset_reduce_max",
                      file=sys.stderr)
                return 1
        print(line)
    print("outputs bit-identical across backends" if cy is not None else "")
    return 0


if __name__ == "__main__":
    sys.exit(main())
