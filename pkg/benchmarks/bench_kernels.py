#!/usr/bin/env python3
"""Time the hot kernels under both backends (numba JIT vs the pure-numpy
fallback) and print a comparison table.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--samples M]

The numpy fallback is always available; the JIT column reads "disabled"
when numba is unavailable or IMD2_DISABLE_NUMBA is set.
"""

import argparse
import time

import numpy as np

from imd2cancel import kernels


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--samples", type=int, default=4608,
                    help="number of delay-embedded rows (default matches one dataset)")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    emb = np.ascontiguousarray(rng.uniform(0.0, 1.0, (args.samples, 3)))
    targets = rng.normal(size=args.samples)
    dims = np.array([[3, 3], [2, 3], [1, 2]], dtype=np.int64)
    flat = rng.normal(size=int(np.sum(dims[:, 0] * dims[:, 1])))

    rows = []
    if kernels.NUMBA_ENABLED:
        kernels.warmup()

        def jit_cheb():
            kernels._cheb_features_nb(emb, 8)

        def jit_nn():
            kernels._nn_loss_grad_flat_nb(emb, targets, flat, dims,
                                          kernels.ACTIVATION_CODES["tanh"])
    else:
        jit_cheb = jit_nn = None

    def np_cheb():
        kernels._cheb_features_np(emb, 8)

    def np_nn():
        kernels._nn_loss_grad_np(emb, targets, kernels._split_flat(flat, dims),
                                 kernels.ACTIVATION_CODES["tanh"])

    for name, jit_fn, np_fn in (("cheb_features (K=3, P=8)", jit_cheb, np_cheb),
                                ("nn_loss_grad (3-3-2-1)", jit_nn, np_nn)):
        t_np = best_of(np_fn, args.repeats)
        t_jit = best_of(jit_fn, args.repeats) if jit_fn else None
        rows.append((name, t_jit, t_np))

    print(f"{args.samples} rows, best of {args.repeats} runs "
          f"(numba {'on' if kernels.NUMBA_ENABLED else 'off'})\n")
    print(f"{'kernel':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    print("-" * 62)
    for name, t_jit, t_np in rows:
        jit_s = f"{t_jit * 1e3:.3f} ms" if t_jit is not None else "disabled"
        ratio = f"{t_np / t_jit:.1f}x" if t_jit else "-"
        print(f"{name:<28}{jit_s:>12}{t_np * 1e3:>9.3f} ms{ratio:>10}")


if __name__ == "__main__":
    main()
