"""Compare the compiled and numpy kernel backends on realistic shapes.

Run:  python benchmarks/bench_kernels.py [--repeats N]

Times the sliding-window signature kernel and the recurrence scan
(forward and backward) on batch shapes matching a default training run,
after a warmup pass so compilation cost is reported separately.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from swps_lru import kernels


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeats: int = 5):
    rng = np.random.default_rng(0)
    seq = rng.normal(size=(128, 9))
    k_windows = (128 - 5) // 1 + 1

    b, k, d = 64, 124, 256
    lam_re = rng.uniform(0.5, 0.95, d)
    lam_im = rng.normal(0.0, 0.1, d)
    x_re = rng.normal(size=(b, k, d))
    x_im = rng.normal(size=(b, k, d))
    h_re, h_im = None, None

    cases = {}
    for name in ("numpy", "numba") if kernels.HAVE_NUMBA else ("numpy",):
        kernels.set_backend(name)
        t0 = time.perf_counter()
        kernels.window_signatures(seq, 5, 1, 2, k_windows)
        kernels.scan_forward(lam_re, lam_im, x_re, x_im)
        warm = time.perf_counter() - t0

        h_re, h_im = kernels.scan_forward(lam_re, lam_im, x_re, x_im)
        dh_re = np.ones_like(h_re)
        dh_im = np.zeros_like(h_im)
        cases[name] = {
            "first call (compile + run)": warm,
            "window signatures (L=128, w=5, m=2)": _time(
                lambda: kernels.window_signatures(seq, 5, 1, 2, k_windows), repeats
            ),
            "scan forward (64x124x256)": _time(
                lambda: kernels.scan_forward(lam_re, lam_im, x_re, x_im), repeats
            ),
            "scan backward (64x124x256)": _time(
                lambda: kernels.scan_backward(lam_re, lam_im, h_re, h_im, dh_re, dh_im), repeats
            ),
        }

    width = max(len(k) for c in cases.values() for k in c)
    for name, rows in cases.items():
        print(f"\nbackend: {name}")
        for label, secs in rows.items():
            print(f"  {label:<{width}}  {secs * 1e3:9.3f} ms")
    if len(cases) == 2:
        print("\nspeedup (numpy / numba):")
        for label in cases["numpy"]:
            if label.startswith("first call"):
                continue
            ratio = cases["numpy"][label] / cases["numba"][label]
            print(f"  {label:<{width}}  {ratio:6.2f}x")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    bench(ap.parse_args().repeats)
