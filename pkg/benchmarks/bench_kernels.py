"""Compare the numba and pure-numpy backends on the hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--batch 10000] [--repeat 5]

Times the batched Jacobi SVD (the compiled kernel) and, for reference, the
GELU used by the transformer MLP, which always runs on numpy.
"""
import argparse
import time

import numpy as np

from icljscc import _accel, cxmat, kernels


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=10_000)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    a = rng.standard_normal((args.batch, args.m, args.m)) + 1j * rng.standard_normal((args.batch, args.m, args.m))
    u = rng.standard_normal((64, 23, 256))

    results = {}
    backends = ["numpy"] + (["numba"] if _accel.numba is not None else [])
    for name in backends:
        _accel.set_backend(name)
        results[name] = best_of(lambda: cxmat.svd(a), args.repeat)
    gelu = best_of(lambda: kernels.gelu_forward(u), args.repeat)

    print(f"batched SVD of {args.batch} {args.m}x{args.m} complex matrices")
    for name, t in results.items():
        print(f"  {name:6s} {t * 1e3:9.2f} ms")
    if "numba" in results:
        print(f"  speed-up numba/numpy: {results['numpy'] / results['numba']:.1f}x")
    print(f"GELU on {u.size} values (numpy): {gelu * 1e3:.2f} ms")

    _accel.set_backend(backends[-1])
    ref = cxmat.svd(a)
    _accel.set_backend("numpy")
    alt = cxmat.svd(a)
    print(f"max |sigma| difference between backends: {np.max(np.abs(ref.sigma - alt.sigma)):.2e}")


if __name__ == "__main__":
    main()
