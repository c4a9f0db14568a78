"""Compare the compiled kernel backend against the pure-NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from vadet import _kernels
from vadet.scalogram import wavelet_taps


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    signal = rng.standard_normal(4096)
    trace = np.clip(rng.random(100_000), 0, 1)
    short_taps = wavelet_taps("gaus1", 0.6)
    long_taps = wavelet_taps("cgau1", 50.0)

    cases = [
        ("correlate short taps (%d)" % len(short_taps), lambda: _kernels.correlate_center(signal, short_taps)),
        ("correlate long taps (%d)" % len(long_taps), lambda: _kernels.correlate_center(signal, long_taps)),
        ("local_maxima (1e5)", lambda: _kernels.local_maxima(trace)),
    ]
    peaks = _kernels.local_maxima(trace)
    cases += [
        ("prominences (%d peaks)" % len(peaks), lambda: _kernels.prominences(trace, peaks)),
        (
            "select_by_distance",
            lambda: _kernels.select_by_distance(peaks, trace[peaks], 20, len(trace)),
        ),
    ]

    backends = _kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':<32}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases:
        times = {}
        for backend in backends:
            _kernels.use(backend)
            times[backend] = timeit(fn)
        row = f"{name:<32}" + "".join(f"{times[b] * 1e3:>12.3f}ms" for b in backends)
        if "compiled" in times and "python" in times:
            row += f"{times['python'] / times['compiled']:>9.2f}x"
        print(row)
    _kernels.use(backends[0])


if __name__ == "__main__":
    main()
