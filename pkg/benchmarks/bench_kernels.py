"""Time the LSTM recurrence kernels: numba versus pure numpy.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Shapes follow the default model: audio stream after the conv blocks
(B=32, T=31, H=128) and the phoneme stream (B=32, T=14, H=128). Both
backends are checked for agreement before timing. With CSWD_NUMBA=0 only
the numpy kernels are timed.
"""
import argparse
import time

import numpy as np

from cswd import kernels
from cswd._accel import USE_NUMBA

SHAPES = [("audio", 32, 31, 128), ("phoneme", 32, 14, 128), ("long", 8, 200, 64)]


def _inputs(B, T, H, dtype, seed=0):
    rng = np.random.default_rng(seed)
    xp = rng.normal(size=(B, T, 4 * H)).astype(dtype)
    U = (rng.normal(size=(H, 4 * H)) / np.sqrt(H)).astype(dtype)
    dhs = rng.normal(size=(B, T, H)).astype(dtype)
    return xp, U, dhs


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeats=20, dtype=np.float32):
    rows = []
    for name, B, T, H in SHAPES:
        xp, U, dhs = _inputs(B, T, H, dtype)
        fwd_np = kernels.lstm_forward_numpy(xp, U)
        timings = {
            "numpy": _best_of(lambda: kernels.lstm_backward_numpy(dhs, *kernels.lstm_forward_numpy(xp, U), U), repeats)
        }
        if USE_NUMBA:
            fwd_nb = kernels.lstm_forward_numba(xp, U)  # also triggers compilation
            np.testing.assert_allclose(fwd_nb[0], fwd_np[0], rtol=1e-4, atol=1e-5)
            timings["numba"] = _best_of(
                lambda: kernels.lstm_backward_numba(dhs, *kernels.lstm_forward_numba(xp, U), U), repeats
            )
        rows.append((name, B, T, H, timings))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'shape':8s} {'B':>3s} {'T':>4s} {'H':>4s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, B, T, H, t in bench(args.repeats):
        nb = t.get("numba")
        nb_s = f"{1e3 * nb:10.2f}" if nb else f"{'n/a':>10s}"
        sp = f"{t['numpy'] / nb:8.2f}" if nb else f"{'':>8s}"
        print(f"{name:8s} {B:3d} {T:4d} {H:4d} {1e3 * t['numpy']:10.2f} {nb_s} {sp}")


if __name__ == "__main__":
    main()
