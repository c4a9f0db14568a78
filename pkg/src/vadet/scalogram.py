"""Continuous wavelet scalograms: six channels, sixteen scales, normalized.

Each acceleration window is transformed with three wavelet families, each over
a low and a high scale band, yielding six channels.  Per scale the transform
is the convolution of the signal with the scaled, time-reversed, conjugated
mother wavelet (1/sqrt(a) amplitude normalization, "same" alignment, zero
extension at the boundaries).  Complex families contribute their modulus,
the real family its signed value.  Every channel is independently rescaled to
[0, 1] and the channels are stacked time-major into a (n_s, 16, 6) tensor.
"""

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidInputError, ScaleTooLargeError, WindowTooShortError
from .ingest import LabelSet, PassageRecord
from .util import atomic_write_bytes

FAMILY_CGAU1 = "complex-gaussian-derivative-1"
FAMILY_GAUS1 = "gaussian-derivative-1"
FAMILY_FBSP = "frequency-b-spline"

_FAMILY_ALIASES = {
    "cgau1": FAMILY_CGAU1,
    FAMILY_CGAU1: FAMILY_CGAU1,
    "gaus1": FAMILY_GAUS1,
    FAMILY_GAUS1: FAMILY_GAUS1,
    "fbsp": FAMILY_FBSP,
    FAMILY_FBSP: FAMILY_FBSP,
}

_COMPLEX_FAMILIES = {FAMILY_CGAU1, FAMILY_FBSP}

# Frequency B-spline parameters (order, bandwidth, center frequency).  The
# band-limited first-order form with fb = 1.0 and fc = 1.5 is the common
# library default for this family; recorded in every run manifest.
FBSP_ORDER = 1
FBSP_FB = 1.0
FBSP_FC = 1.5

# The mother wavelet is sampled on its effective support [-8a, 8a].
SUPPORT_RADIUS = 8.0

WINDOW_BEFORE = 150
WINDOW_AFTER = 500
MIN_WINDOW = 16


def canonical_family(name: str) -> str:
    try:
        return _FAMILY_ALIASES[name]
    except KeyError:
        raise InvalidInputError(f"unknown wavelet family {name!r}") from None


@dataclass(frozen=True)
class WaveletSpec:
    """One scalogram channel: a wavelet family with a scale band."""

    family: str
    scale_min: float
    scale_max: float
    n_scales: int = 16

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        if not 0 < self.scale_min < self.scale_max:
            raise InvalidInputError("need 0 < scale_min < scale_max")
        if self.n_scales < 2:
            raise InvalidInputError("n_scales must be >= 2")


# Channel order is fixed: cgau low, cgau high, gaus low, gaus high, fbsp low,
# fbsp high.
DEFAULT_CHANNEL_SPECS = (
    WaveletSpec("cgau1", 1.0, 8.0),
    WaveletSpec("cgau1", 8.0, 50.0),
    WaveletSpec("gaus1", 0.6, 6.5),
    WaveletSpec("gaus1", 6.5, 35.0),
    WaveletSpec("fbsp", 1.5, 10.0),
    WaveletSpec("fbsp", 10.0, 40.0),
)


@dataclass
class Scalogram:
    """Normalized (n_s, n_f, n_t) tensor plus its window position."""

    tensor: np.ndarray
    window_start: int

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=np.float32)
        if self.tensor.ndim != 3:
            raise InvalidInputError(f"scalogram tensor must be 3-D, got {self.tensor.ndim}-D")

    @property
    def n_s(self) -> int:
        return self.tensor.shape[0]


def scale_grid(spec: WaveletSpec) -> np.ndarray:
    """Arithmetic progression from scale_min to scale_max, inclusive."""
    return np.linspace(spec.scale_min, spec.scale_max, spec.n_scales)


def mother_wavelet(family: str, x: np.ndarray) -> np.ndarray:
    """Sample the unit-energy mother wavelet at positions x."""
    family = canonical_family(family)
    x = np.asarray(x, dtype=np.float64)
    if family == FAMILY_GAUS1:
        return -2.0 * x * np.exp(-x * x) * (2.0 / math.pi) ** 0.25
    if family == FAMILY_CGAU1:
        return (
            (2.0 * math.pi) ** -0.25
            * (-1j - 2.0 * x)
            * np.exp(-1j * x)
            * np.exp(-x * x)
        )
    return np.sinc(FBSP_FB * x / FBSP_ORDER) ** FBSP_ORDER * np.exp(2j * math.pi * FBSP_FC * x)


def is_complex_family(family: str) -> bool:
    return canonical_family(family) in _COMPLEX_FAMILIES


def wavelet_taps(family: str, scale: float) -> np.ndarray:
    """Discretized conjugated wavelet at one scale, including 1/sqrt(a)."""
    half = int(math.floor(SUPPORT_RADIUS * scale))
    j = np.arange(-half, half + 1)
    return np.conj(mother_wavelet(family, j / scale)) / math.sqrt(scale)


def cwt(signal: np.ndarray, family: str, scales) -> np.ndarray:
    """Wavelet coefficient matrix (n_scales, n_samples), real-valued.

    Complex families return the modulus, the real family the signed value.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size == 0:
        raise InvalidInputError("signal must be a non-empty 1-D array")
    if not np.all(np.isfinite(signal)):
        raise InvalidInputError("signal contains non-finite values")
    scales = np.asarray(scales, dtype=np.float64)
    if np.any(scales <= 0):
        raise InvalidInputError("scales must be positive")
    family = canonical_family(family)
    n = signal.size
    out = np.empty((scales.size, n), dtype=np.float64)
    for i, a in enumerate(scales):
        support = 2 * int(math.floor(SUPPORT_RADIUS * a)) + 1
        if support > 10 * n:
            raise ScaleTooLargeError(
                f"scale {a:g}: wavelet support {support} exceeds 10x signal length {n}"
            )
        row = _kernels.correlate_center(signal, wavelet_taps(family, a))
        out[i] = np.abs(row) if family in _COMPLEX_FAMILIES else np.real(row)
    return out


def normalize(matrix: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant matrix maps to all zeros."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("matrix contains non-finite values")
    lo = matrix.min()
    hi = matrix.max()
    if hi == lo:
        return np.zeros_like(matrix)
    return (matrix - lo) / (hi - lo)


def window_bounds(crossing_indices, n_samples: int) -> tuple[int, int]:
    """[first - 150, last + 500], clamped to the recording; end exclusive."""
    indices = np.asarray(crossing_indices, dtype=np.int64)
    start = max(0, int(indices.min()) - WINDOW_BEFORE)
    end = min(n_samples, int(indices.max()) + WINDOW_AFTER + 1)
    return start, end


def transform_signal(segment: np.ndarray, specs=DEFAULT_CHANNEL_SPECS) -> np.ndarray:
    """Stacked normalized channels for one already-windowed signal."""
    channels = []
    for spec in specs:
        mat = cwt(segment, spec.family, scale_grid(spec))
        channels.append(normalize(mat).T)
    return np.stack(channels, axis=2).astype(np.float32)


def transform_passage(
    passage: PassageRecord,
    labels: LabelSet,
    sensor: int,
    specs=DEFAULT_CHANNEL_SPECS,
) -> tuple[Scalogram, np.ndarray, int]:
    """Window one sensor around its crossings and build the model input."""
    if not 0 <= sensor < passage.n_sensors:
        raise InvalidInputError(f"sensor {sensor} out of range")
    if labels.n_axles < 1:
        raise InvalidInputError("labels are empty")
    start, end = window_bounds(labels.crossing_indices[:, sensor], passage.n_samples)
    if end - start < MIN_WINDOW:
        raise WindowTooShortError(f"window of {end - start} samples is shorter than {MIN_WINDOW}")
    segment = passage.accel[start:end, sensor]
    tensor = transform_signal(segment, specs)
    target = labels.targets[start:end, sensor].astype(np.float32)
    return Scalogram(tensor=tensor, window_start=start), target, start


# ---------------------------------------------------------------------------
# Binary cache: header (n_s, n_f, n_t, window_start) as little-endian int32,
# then the tensor as little-endian float32, time-major.

_HEADER = struct.Struct("<4i")


def save_scalogram(sg: Scalogram, path: Path) -> None:
    n_s, n_f, n_t = sg.tensor.shape
    header = _HEADER.pack(n_s, n_f, n_t, sg.window_start)
    body = np.ascontiguousarray(sg.tensor, dtype="<f4").tobytes()
    atomic_write_bytes(Path(path), header + body)


def load_scalogram(path: Path) -> Scalogram:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated scalogram file")
    n_s, n_f, n_t, window_start = _HEADER.unpack_from(data)
    expected = _HEADER.size + 4 * n_s * n_f * n_t
    if len(data) != expected:
        raise InvalidInputError(f"{path}: expected {expected} bytes, found {len(data)}")
    tensor = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n_s, n_f, n_t)
    return Scalogram(tensor=tensor.copy(), window_start=window_start)
