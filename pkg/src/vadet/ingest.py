"""Load passage recordings and derive axle ground truth from wheel-load signals.

A passage is stored as a file pair: a YAML metadata document and a plain-text
numeric matrix (one sample per row, columns = wheel load G1, wheel load G2,
then the acceleration sensors).  Labeling detects the wheel-load peaks at the
two measuring points, pairs them by rank, derives per-axle mean velocities
from the known spacing, and converts those into per-sensor crossing sample
indices with a propagated spatial uncertainty.
"""

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import (
    InvalidInputError,
    InvalidLabelsError,
    InvalidPassageError,
    OutOfRangeError,
)
from .postprocess import find_peaks_raw
from .util import atomic_write_text, round_half_away

DEFAULT_SAMPLE_RATE = 600.0
DEFAULT_WLM_SPACING = 14.40
DEFAULT_WLM_SPACING_UNCERTAINTY = 0.20

# Wheel-load peak gates: height as a fraction of the channel maximum, spacing
# from the detector-side minimum-distance rule.
DEFAULT_PEAK_MIN_HEIGHT = 0.25
DEFAULT_PEAK_MIN_DISTANCE = 20


@dataclass
class PassageRecord:
    """One crossing event: raw signals plus sensor geometry."""

    id: str
    accel: np.ndarray
    wheel_load: np.ndarray
    sensor_offsets: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    wlm_spacing: float = DEFAULT_WLM_SPACING
    wlm_spacing_uncertainty: float = DEFAULT_WLM_SPACING_UNCERTAINTY

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=np.float64)
        self.wheel_load = np.asarray(self.wheel_load, dtype=np.float64)
        self.sensor_offsets = np.asarray(self.sensor_offsets, dtype=np.float64)
        if self.accel.ndim != 2 or self.accel.shape[0] < 1 or self.accel.shape[1] < 1:
            raise InvalidInputError(f"accel must be (n_samples, n_sensors), got {self.accel.shape}")
        if self.wheel_load.shape != (self.accel.shape[0], 2):
            raise InvalidInputError(
                f"wheel_load must be (n_samples, 2), got {self.wheel_load.shape}"
            )
        if self.sensor_offsets.shape != (self.accel.shape[1],):
            raise InvalidInputError("sensor_offsets must have one entry per sensor")
        if not np.all(np.isfinite(self.sensor_offsets)) or np.any(self.sensor_offsets < 0):
            raise InvalidInputError("sensor_offsets must be finite and >= 0")
        if self.sample_rate <= 0 or self.wlm_spacing <= 0:
            raise InvalidInputError("sample_rate and wlm_spacing must be positive")

    @property
    def n_samples(self) -> int:
        return self.accel.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.accel.shape[1]


@dataclass
class LabelSet:
    """Ground truth for one passage: velocities, crossing indices, targets."""

    axle_velocities: np.ndarray
    crossing_indices: np.ndarray
    uncertainty: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.axle_velocities = np.asarray(self.axle_velocities, dtype=np.float64)
        self.crossing_indices = np.asarray(self.crossing_indices, dtype=np.int64)
        self.uncertainty = np.asarray(self.uncertainty, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.uint8)
        n_a, n_sensors = self.crossing_indices.shape
        n_samples = self.targets.shape[0]
        if self.axle_velocities.shape != (n_a,):
            raise InvalidLabelsError("one velocity per axle required")
        if np.any(self.axle_velocities <= 0):
            raise InvalidLabelsError("axle velocities must be positive")
        if self.uncertainty.shape != (n_a, n_sensors):
            raise InvalidLabelsError("uncertainty must match crossing_indices shape")
        if self.targets.shape[1] != n_sensors:
            raise InvalidLabelsError("targets must have one column per sensor")
        if np.any(self.crossing_indices < 0) or np.any(self.crossing_indices >= n_samples):
            raise InvalidLabelsError("crossing index outside the recording")
        if n_a > 1 and not np.all(np.diff(self.crossing_indices, axis=0) > 0):
            raise InvalidLabelsError("crossing indices must be strictly increasing per sensor")
        for s in range(n_sensors):
            ones = np.flatnonzero(self.targets[:, s])
            if not np.array_equal(ones, np.sort(self.crossing_indices[:, s])):
                raise InvalidLabelsError(f"targets and crossing indices disagree for sensor {s}")

    @property
    def n_axles(self) -> int:
        return self.crossing_indices.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.crossing_indices.shape[1]


def detect_wheel_load_peaks(
    signal: np.ndarray,
    min_height: float = DEFAULT_PEAK_MIN_HEIGHT,
    min_distance: int = DEFAULT_PEAK_MIN_DISTANCE,
) -> np.ndarray:
    """Indices of wheel-load pulses: local maxima above a fraction of the maximum.

    Shares the peak algorithm with the detection-side peak extraction;
    ``min_height`` is relative to the signal maximum and no prominence gate
    is applied.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size == 0:
        raise InvalidInputError("wheel-load signal must be a non-empty 1-D array")
    if not np.all(np.isfinite(signal)):
        raise InvalidInputError("wheel-load signal contains non-finite values")
    threshold = min_height * float(signal.max())
    return find_peaks_raw(signal, threshold, min_distance, 0.0)


def validate_passage(peaks_g1, peaks_g2) -> bool:
    """Accept a passage only if both measuring points saw the same nonzero peak count."""
    return len(peaks_g1) == len(peaks_g2) > 0


def compute_axle_velocities(
    peaks_g1, peaks_g2, wlm_spacing: float, sample_rate: float
) -> np.ndarray:
    """Per-axle mean velocity from the peak delay between the two measuring points."""
    g1 = np.asarray(peaks_g1, dtype=np.int64)
    g2 = np.asarray(peaks_g2, dtype=np.int64)
    if g1.shape != g2.shape:
        raise InvalidPassageError(f"peak counts differ: {g1.size} vs {g2.size}")
    delta = g2 - g1
    if np.any(delta <= 0):
        raise InvalidPassageError(
            "non-positive peak spacing between measuring points (wrong direction or mispaired peaks)"
        )
    return wlm_spacing * sample_rate / delta


def compute_crossing_indices(
    peaks_g1,
    velocities,
    sensor_offsets,
    sample_rate: float,
    n_samples: int | None = None,
) -> np.ndarray:
    """Sample index at which each axle reaches each sensor's coordinate.

    index[a, s] = peaks_g1[a] + round(offset_s * sample_rate / v_a), rounding
    to the nearest integer with ties away from zero.
    """
    g1 = np.asarray(peaks_g1, dtype=np.int64)
    velocities = np.asarray(velocities, dtype=np.float64)
    offsets = np.asarray(sensor_offsets, dtype=np.float64)
    if np.any(velocities <= 0):
        raise InvalidPassageError("velocities must be positive")
    out = np.empty((g1.size, offsets.size), dtype=np.int64)
    for a in range(g1.size):
        for s in range(offsets.size):
            shift = round_half_away(offsets[s] * sample_rate / velocities[a])
            idx = int(g1[a]) + shift
            if n_samples is not None and not 0 <= idx < n_samples:
                raise OutOfRangeError(
                    f"crossing index {idx} for axle {a}, sensor {s} outside recording "
                    f"of {n_samples} samples"
                )
            out[a, s] = idx
    return out


def label_uncertainty(
    v: float,
    offset: float,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    wlm_spacing: float = DEFAULT_WLM_SPACING,
    wlm_spacing_uncertainty: float = DEFAULT_WLM_SPACING_UNCERTAINTY,
):
    """Absolute spatial label error from linear error propagation (meters).

    dx = v*dt + offset * (|v / s_wlm| * dt + |1 / s_wlm| * ds_wlm) with
    dt = 1 / sample_rate.  Accepts scalars or broadcastable arrays.
    """
    dt = 1.0 / sample_rate
    v = np.asarray(v, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    dx = v * dt + offset * (
        np.abs(v / wlm_spacing) * dt + abs(1.0 / wlm_spacing) * wlm_spacing_uncertainty
    )
    return float(dx) if dx.ndim == 0 else dx


def build_binary_labels(crossing_indices, n_samples: int) -> np.ndarray:
    """Per-sample binary targets: 1 exactly at each crossing index, else 0."""
    indices = np.asarray(crossing_indices, dtype=np.int64)
    if indices.ndim != 2:
        indices = indices.reshape(-1, 1) if indices.size else indices.reshape(0, 1)
    n_a, n_sensors = indices.shape
    if indices.size and (indices.min() < 0 or indices.max() >= n_samples):
        raise InvalidLabelsError("crossing index outside the recording")
    targets = np.zeros((n_samples, n_sensors), dtype=np.uint8)
    for s in range(n_sensors):
        column = indices[:, s]
        if np.unique(column).size != column.size:
            raise InvalidLabelsError(f"duplicate crossing index in sensor column {s}")
        targets[column, s] = 1
    return targets


def label_passage(
    passage: PassageRecord,
    min_height: float = DEFAULT_PEAK_MIN_HEIGHT,
    min_distance: int = DEFAULT_PEAK_MIN_DISTANCE,
) -> LabelSet:
    """Full labeling pipeline for one passage.

    Raises an error subclass for every rejection cause (peak-count mismatch,
    non-positive peak spacing, out-of-range index, inconsistent labels); the
    caller counts those as rejected passages.
    """
    peaks_g1 = detect_wheel_load_peaks(passage.wheel_load[:, 0], min_height, min_distance)
    peaks_g2 = detect_wheel_load_peaks(passage.wheel_load[:, 1], min_height, min_distance)
    if not validate_passage(peaks_g1, peaks_g2):
        raise InvalidPassageError(
            f"measuring points disagree: {peaks_g1.size} vs {peaks_g2.size} peaks"
        )
    velocities = compute_axle_velocities(
        peaks_g1, peaks_g2, passage.wlm_spacing, passage.sample_rate
    )
    indices = compute_crossing_indices(
        peaks_g1, velocities, passage.sensor_offsets, passage.sample_rate, passage.n_samples
    )
    uncertainty = label_uncertainty(
        velocities[:, None],
        passage.sensor_offsets[None, :],
        passage.sample_rate,
        passage.wlm_spacing,
        passage.wlm_spacing_uncertainty,
    )
    targets = build_binary_labels(indices, passage.n_samples)
    return LabelSet(
        axle_velocities=velocities,
        crossing_indices=indices,
        uncertainty=uncertainty,
        targets=targets,
    )


# ---------------------------------------------------------------------------
# File formats


def save_passage(passage: PassageRecord, directory: Path) -> tuple[Path, Path]:
    """Write the metadata/matrix file pair for one passage."""
    directory = Path(directory)
    meta = {
        "id": passage.id,
        "sample_rate": float(passage.sample_rate),
        "sensor_offsets": [float(x) for x in passage.sensor_offsets],
        "wlm_spacing": float(passage.wlm_spacing),
        "wlm_spacing_uncertainty": float(passage.wlm_spacing_uncertainty),
    }
    meta_path = directory / f"{passage.id}.yaml"
    atomic_write_text(meta_path, yaml.safe_dump(meta, sort_keys=False))
    matrix = np.hstack([passage.wheel_load, passage.accel])
    buf = io.StringIO()
    np.savetxt(buf, matrix, fmt="%.10g")
    data_path = directory / f"{passage.id}.txt"
    atomic_write_text(data_path, buf.getvalue())
    return meta_path, data_path


def load_passage(directory: Path, passage_id: str) -> PassageRecord:
    directory = Path(directory)
    with open(directory / f"{passage_id}.yaml", encoding="utf-8") as fh:
        meta = yaml.safe_load(fh)
    matrix = np.loadtxt(directory / f"{passage_id}.txt", ndmin=2)
    if matrix.shape[1] < 3:
        raise InvalidInputError(
            f"passage matrix needs at least 3 columns (G1, G2, sensors), got {matrix.shape[1]}"
        )
    return PassageRecord(
        id=str(meta["id"]),
        accel=matrix[:, 2:],
        wheel_load=matrix[:, :2],
        sensor_offsets=np.asarray(meta["sensor_offsets"], dtype=np.float64),
        sample_rate=float(meta.get("sample_rate", DEFAULT_SAMPLE_RATE)),
        wlm_spacing=float(meta.get("wlm_spacing", DEFAULT_WLM_SPACING)),
        wlm_spacing_uncertainty=float(
            meta.get("wlm_spacing_uncertainty", DEFAULT_WLM_SPACING_UNCERTAINTY)
        ),
    )


def list_passage_ids(directory: Path) -> list[str]:
    return sorted(p.stem for p in Path(directory).glob("*.yaml"))


def adapt_raw_matrix(matrix_path: Path, meta: dict) -> PassageRecord:
    """Wrap a bare per-passage text matrix (no metadata file) as a PassageRecord.

    Adapter for externally converted datasets; ``meta`` supplies the fields a
    metadata document would normally carry.  ``wheel_load_columns`` may
    override the default assumption that the first two columns are G1/G2.
    """
    matrix = np.loadtxt(matrix_path, ndmin=2)
    wl_cols = meta.get("wheel_load_columns", (0, 1))
    accel_cols = [c for c in range(matrix.shape[1]) if c not in wl_cols]
    return PassageRecord(
        id=str(meta["id"]),
        accel=matrix[:, accel_cols],
        wheel_load=matrix[:, list(wl_cols)],
        sensor_offsets=np.asarray(meta["sensor_offsets"], dtype=np.float64),
        sample_rate=float(meta.get("sample_rate", DEFAULT_SAMPLE_RATE)),
        wlm_spacing=float(meta.get("wlm_spacing", DEFAULT_WLM_SPACING)),
        wlm_spacing_uncertainty=float(
            meta.get("wlm_spacing_uncertainty", DEFAULT_WLM_SPACING_UNCERTAINTY)
        ),
    )


def save_labels(labels: LabelSet, passage_id: str, path: Path) -> None:
    """Write the per-passage label document (velocities, indices, uncertainty)."""
    doc = {
        "id": passage_id,
        "n_samples": int(labels.targets.shape[0]),
        "axle_velocities": [float(v) for v in labels.axle_velocities],
        "crossing_indices": [[int(i) for i in row] for row in labels.crossing_indices],
        "uncertainty_m": [[round(float(u), 6) for u in row] for row in labels.uncertainty],
    }
    atomic_write_text(Path(path), yaml.safe_dump(doc, sort_keys=False))


def load_labels(path: Path) -> tuple[str, LabelSet]:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    indices = np.asarray(doc["crossing_indices"], dtype=np.int64)
    velocities = np.asarray(doc["axle_velocities"], dtype=np.float64)
    labels = LabelSet(
        axle_velocities=velocities,
        crossing_indices=indices,
        uncertainty=np.asarray(doc["uncertainty_m"], dtype=np.float64),
        targets=build_binary_labels(indices, int(doc["n_samples"])),
    )
    return str(doc["id"]), labels
