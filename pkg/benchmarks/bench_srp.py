#!/usr/bin/env python3
"""Benchmark the SRP accumulation kernel: compiled extension vs NumPy fallback.

Two views: a micro-benchmark of the accumulation step itself over realistic
shapes, and an end-to-end localization run showing how much of the total the
kernel accounts for (the FFTs dominate, so the macro gap is small).

Run: python benchmarks/bench_srp.py
"""

import sys
import time

import numpy as np

from arraydiar import kernels
from arraydiar.doa import build_grid, localize
from arraydiar.io import FramePlan, MicArrayGeometry, MultichannelClip, Segment
from arraydiar.synth import SceneSpec, SourceSpec, render


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def micro(backends):
    print("== micro: srp_accumulate_batch (seconds, best of 5)")
    print(f"{'frames x pairs x n_fft':>26} {'dirs':>6}", *(f"{name:>12}" for name in backends))
    rng = np.random.default_rng(0)
    cases = [
        (40, 6, 16384, 256),    # 4 mics, 0.5 s at 16 kHz
        (40, 6, 65536, 256),    # 4 mics, 0.5 s at 48 kHz
        (40, 28, 32768, 256),   # 8 mics, 1.0 s at 16 kHz
        (200, 6, 16384, 360),   # long meeting chunk, finer grid
    ]
    for frames, pairs, n_fft, dirs in cases:
        cc = np.ascontiguousarray(rng.standard_normal((frames, pairs, n_fft)))
        lag_idx = np.ascontiguousarray(rng.integers(0, n_fft, (dirs, pairs)).astype(np.int64))
        row = []
        results = {}
        for name, impl in backends.items():
            results[name] = impl.srp_accumulate_batch(cc, lag_idx)
            row.append(best_of(lambda impl=impl: impl.srp_accumulate_batch(cc, lag_idx)))
        names = list(backends)
        for other in names[1:]:
            assert np.array_equal(results[names[0]], results[other]), "backends disagree"
        label = f"{frames} x {pairs} x {n_fft}"
        print(f"{label:>26} {dirs:>6}", *(f"{t:>12.6f}" for t in row))


def macro(backends):
    print("\n== macro: localize() on a 20 s 4-mic scene at 16 kHz (seconds, best of 3)")
    geometry = MicArrayGeometry(
        mics=[[0.1, 0, 0], [0, 0.1, 0], [-0.1, 0, 0], [0, -0.1, 0]], sample_rate=16000
    )
    spec = SceneSpec(
        geometry=geometry,
        sources=(
            SourceSpec(azimuth=40.0, schedule=((0.0, 10.0),)),
            SourceSpec(azimuth=220.0, schedule=((10.0, 20.0),)),
        ),
        duration=20.0,
        snr_db=20.0,
        seed=1,
    )
    clip, _, vad = render(spec)
    grid = build_grid(geometry, 256)
    plan = FramePlan(0.5, 0.5)
    saved = kernels.srp_accumulate
    try:
        for name, impl in backends.items():
            kernels.srp_accumulate = impl.srp_accumulate
            t = best_of(lambda: localize(clip, plan, grid, vad), repeats=3)
            print(f"{name:>12}: {t:.3f}")
    finally:
        kernels.srp_accumulate = saved


def main():
    backends = kernels.available_backends()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    if len(backends) == 1:
        print("compiled extension not built; benchmarking the fallback only")
    micro(backends)
    macro(backends)
    return 0


if __name__ == "__main__":
    sys.exit(main())
