"""NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable (or explicitly requested).
Semantics are defined here; the compiled backend must match bit-for-bit on
the peak primitives and to rounding error on the convolutions.
"""

import numpy as np
from scipy.signal import fftconvolve

from ..errors import InvalidInputError

# Below this kernel length direct convolution beats the FFT on typical windows.
_FFT_TAP_THRESHOLD = 64


def correlate_center(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Zero-extended correlation of ``x`` with an odd-length centered tap vector.

    out[b] = sum_i x[b + i - L] * taps[i] with L = len(taps)//2 and x taken
    as zero outside its domain.  Output has the same length as ``x``.
    """
    if taps.size % 2 != 1:
        raise InvalidInputError("taps must have odd length")
    rev = taps[::-1]
    if taps.size <= _FFT_TAP_THRESHOLD:
        return np.convolve(x, rev, mode="same")
    out = fftconvolve(x, rev, mode="same")
    if not np.iscomplexobj(taps):
        return np.ascontiguousarray(out.real) if np.iscomplexobj(out) else out
    return out


def local_maxima(x: np.ndarray) -> np.ndarray:
    """Strict local maxima of a 1-D array, plateaus resolved to their midpoint.

    The midpoint of an even-length plateau is the lower of the two central
    indices.  The first and last samples are never maxima.
    """
    n = x.size
    if n < 3:
        return np.empty(0, dtype=np.intp)
    # Compress runs of equal values, then compare neighbouring run heights.
    change = np.empty(n, dtype=bool)
    change[0] = True
    np.not_equal(x[1:], x[:-1], out=change[1:])
    starts = np.flatnonzero(change)
    if starts.size < 3:
        return np.empty(0, dtype=np.intp)
    ends = np.empty_like(starts)
    ends[:-1] = starts[1:] - 1
    ends[-1] = n - 1
    heights = x[starts]
    is_peak = np.zeros(starts.size, dtype=bool)
    is_peak[1:-1] = (heights[1:-1] > heights[:-2]) & (heights[1:-1] > heights[2:])
    idx = np.flatnonzero(is_peak)
    return ((starts[idx] + ends[idx]) // 2).astype(np.intp)


def prominences(x: np.ndarray, peaks: np.ndarray) -> np.ndarray:
    """Topographic prominence of each peak.

    For a peak of height h, extend left and right until the border or a sample
    strictly higher than h; the prominence is h minus the higher of the two
    minima found on either side.
    """
    out = np.empty(peaks.size, dtype=np.float64)
    n = x.size
    for k, p in enumerate(peaks):
        h = x[p]
        higher_left = np.flatnonzero(x[:p] > h)
        lo = higher_left[-1] + 1 if higher_left.size else 0
        left_min = x[lo : p + 1].min()
        higher_right = np.flatnonzero(x[p + 1 :] > h)
        hi = p + 1 + higher_right[0] if higher_right.size else n
        right_min = x[p:hi].min()
        out[k] = h - max(left_min, right_min)
    return out


def select_by_distance(
    peaks: np.ndarray, heights: np.ndarray, min_distance: int, trace_length: int
) -> np.ndarray:
    """Suppress peaks closer than ``min_distance`` to a higher selected peak.

    Candidates are visited by descending height, lower index first on ties;
    a candidate within ``min_distance - 1`` samples of an already selected
    peak is dropped.  Returns the surviving peak indices in ascending order.
    """
    if peaks.size == 0:
        return peaks.astype(np.intp)
    order = np.lexsort((peaks, -heights))
    banned = np.zeros(trace_length, dtype=bool)
    selected = []
    for i in order:
        p = int(peaks[i])
        if banned[p]:
            continue
        selected.append(p)
        banned[max(0, p - min_distance + 1) : min(trace_length, p + min_distance)] = True
    return np.asarray(sorted(selected), dtype=np.intp)
