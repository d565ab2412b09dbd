"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--width 16] [--repeat 5]

Each kernel is run once to trigger compilation, then timed; both paths must
return identical results.  Above width ~18 the tables leave the cache and
orbit walking becomes latency bound on both paths, so the gap narrows.
"""
import argparse
import time

import numpy as np

from tflab import kernels, texpr


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(np.sort(a) if a.ndim == 1 and a.size < 64 else a,
                              np.sort(b) if b.ndim == 1 and b.size < 64 else b)
    return a == b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--width", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    n = args.width
    table = texpr.table(texpr.parse("x + (x*x | 5)"), n).astype(np.int64)
    perm = np.random.default_rng(0).permutation(1 << n).astype(np.int64)
    tables = np.stack([texpr.table(texpr.parse(f"{c} + x + 2*(x*x | 1)"), n)
                       for c in (3, 0, 6)]).astype(np.int64)
    bits = ((table[: 1 << 13] >> (n - 1)) & 1).astype(np.uint8)

    cases = [
        ("cycle_lengths (single cycle)", kernels.cycles_loop, kernels.cycles_np, (table,)),
        ("cycle_lengths (random perm)", kernels.cycles_loop, kernels.cycles_np, (perm,)),
        ("orbit", kernels.orbit_loop, kernels.orbit_np, (table, 0, 1 << n)),
        ("wreath_orbit", kernels.wreath_orbit_loop, kernels.wreath_orbit_np,
         (tables, 0, 0, 3 << n)),
        ("berlekamp_massey (8192 bits)", kernels.bm_loop, kernels.bm_np, (bits,)),
    ]
    print(f"width {n}, best of {args.repeat}")
    print(f"{'kernel':32} {'numba s':>10} {'numpy s':>10} {'speedup':>8}")
    for name, jit_fn, np_fn, a in cases:
        jit_fn(*a)
        tj, rj = best_of(lambda: jit_fn(*a), args.repeat)
        tn, rn = best_of(lambda: np_fn(*a), args.repeat)
        ok = "" if same(rj, rn) else "  MISMATCH"
        print(f"{name:32} {tj:10.4f} {tn:10.4f} {tn / tj:8.1f}{ok}")


if __name__ == "__main__":
    main()
