"""Benchmark the numba-accelerated kernels against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py
The same comparison can be forced package-wide with NOMADLITE_NO_NUMBA=1.
"""

import time

import numpy as np

from nomadlite import _accel


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (JIT compile for the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    rows = []

    x = rng.standard_normal((32, 300))
    w = rng.standard_normal((64, 32, 5))
    b = rng.standard_normal(64)
    rows.append(("conv1d_forward (32x300 -> 64)",
                 timeit(_accel.conv1d_forward_np, x, w, b, 2),
                 timeit(_accel.conv1d_forward_nb, x, w, b, 2) if _accel.HAVE_NUMBA else None))

    y = _accel.conv1d_forward_np(x, w, b, 2)
    gz = rng.standard_normal(y.shape)
    rows.append(("conv1d_backward (same shapes)",
                 timeit(_accel.conv1d_backward_np, x, w, 2, gz),
                 timeit(_accel.conv1d_backward_nb, x, w, 2, gz) if _accel.HAVE_NUMBA else None))

    r = rng.standard_normal((300, 32))
    d = rng.standard_normal((300, 32))
    rows.append(("patch_stats (300x32, 3x3)",
                 timeit(_accel.patch_stats_np, r, d, 3, 3),
                 timeit(_accel.patch_stats_nb, r, d, 3, 3) if _accel.HAVE_NUMBA else None))

    sig = rng.standard_normal(48000)
    taps = np.hanning(321)
    n_out = len(sig) // 3
    delay = len(taps) // 2
    rows.append(("resample_fir (48k, 321 taps, 1/3)",
                 timeit(_accel.resample_fir_np, sig, taps, 1, 3, n_out, delay),
                 timeit(_accel.resample_fir_nb, sig, taps, 1, 3, n_out, delay)
                 if _accel.HAVE_NUMBA else None))

    print(f"numba available: {_accel.HAVE_NUMBA}   package using numba: {_accel.USE_NUMBA}\n")
    print(f"{'kernel':<38} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:<38} {t_np * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>8}")
        else:
            print(f"{name:<38} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
