"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Shapes follow a desk-scale long-horizon batch (B=32, L=336, H=720, N=7).
"""

import argparse
import timeit

import numpy as np

from tdalign import _kernels as K


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args()
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    B, L, H, N = args.batch, 336, 720, 7
    x = rng.normal(size=(B, L, N))
    y, yh, a = rng.normal(size=(B, H, N)), rng.normal(size=(B, H, N)), rng.normal(size=(B, N))
    d, dh = np.diff(y, axis=1), np.diff(yh, axis=1)
    cases = {
        "moving_average(k=25)": (K.numpy_moving_average, K.numba_moving_average, (x, 25)),
        "first_diff_terms(mse)": (K.numpy_first_diff_terms, K.numba_first_diff_terms, (y, yh, a, True)),
        "sign_mismatches": (K.numpy_sign_mismatches, K.numba_sign_mismatches, (d, dh)),
    }
    print(f"{'kernel':<24}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (slow, fast, argv) in cases.items():
        fast(*argv)  # compile outside the timed region
        t_slow = min(timeit.repeat(lambda: slow(*argv), number=1, repeat=args.repeat)) * 1e3
        t_fast = min(timeit.repeat(lambda: fast(*argv), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{t_slow:>10.3f}{t_fast:>10.3f}{t_slow / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
