"""Turn probability traces into axle detections and score them.

Peak extraction applies three gates in a fixed order: minimum height,
minimum topographic prominence, then minimum distance (higher peaks
suppress lower ones).  Scoring matches predicted peaks one-to-one against
ground-truth crossing indices within a temporal threshold and derives
precision/recall/F1 plus temporal and spatial error statistics.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .util import round_half_away


@dataclass(frozen=True)
class PeakParams:
    """Gates for peak extraction from a probability trace."""

    min_height: float = 0.25
    min_distance: int = 20
    min_prominence: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.min_height <= 1.0:
            raise InvalidInputError(f"min_height must be in (0, 1], got {self.min_height}")
        if self.min_distance < 1:
            raise InvalidInputError(f"min_distance must be >= 1, got {self.min_distance}")
        if self.min_prominence < 0.0:
            raise InvalidInputError(f"min_prominence must be >= 0, got {self.min_prominence}")


def min_distance_rule(min_wheel_distance: float, v_max: float, sample_rate: float) -> int:
    """Smallest admissible peak spacing in samples for a wheel distance and top speed.

    Half-up rounding of ``min_wheel_distance * sample_rate / v_max``.
    """
    return round_half_away(min_wheel_distance * sample_rate / v_max)


def find_peaks_raw(
    x: np.ndarray, min_height: float, min_distance: int, min_prominence: float
) -> np.ndarray:
    """Peak extraction in raw signal units (shared by trace and wheel-load paths).

    Candidates are strict local maxima (plateau midpoints, left-biased);
    candidates below ``min_height`` or with prominence below
    ``min_prominence`` are dropped; the rest are thinned by descending
    height (ties: lower index first) so that survivors are at least
    ``min_distance`` samples apart.  Returns ascending indices.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    peaks = _kernels.local_maxima(x)
    if peaks.size:
        peaks = peaks[x[peaks] >= min_height]
    if peaks.size and min_prominence > 0.0:
        prom = _kernels.prominences(x, peaks)
        peaks = peaks[prom >= min_prominence]
    if peaks.size:
        peaks = _kernels.select_by_distance(peaks, x[peaks], int(min_distance), x.size)
    return peaks


def find_peaks(trace: np.ndarray, params: PeakParams) -> np.ndarray:
    """Extract axle peaks from a model probability trace."""
    trace = np.asarray(trace, dtype=np.float64)
    if trace.ndim != 1 or trace.size == 0:
        raise InvalidInputError("trace must be a non-empty 1-D array")
    if not np.all(np.isfinite(trace)):
        raise InvalidInputError("trace contains non-finite values")
    return find_peaks_raw(trace, params.min_height, params.min_distance, params.min_prominence)


@dataclass
class Match:
    """One accepted (ground truth, prediction) pair."""

    gt_rank: int
    gt_index: int
    pred_index: int
    temporal_error: int
    spatial_error: float | None = None


@dataclass
class DetectionReport:
    """Matching outcome for one trace at one threshold."""

    threshold_label: str
    matches: list[Match] = field(default_factory=list)
    false_positives: list[int] = field(default_factory=list)
    false_negatives: list[int] = field(default_factory=list)

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.false_positives)

    @property
    def fn(self) -> int:
        return len(self.false_negatives)

    @property
    def precision(self) -> float:
        return _safe_metrics(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return _safe_metrics(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self) -> float:
        return _safe_metrics(self.tp, self.fp, self.fn)[2]

    @property
    def mean_abs_temporal_error(self) -> float | None:
        if not self.matches:
            return None
        return float(np.mean([abs(m.temporal_error) for m in self.matches]))

    @property
    def std_temporal_error(self) -> float | None:
        if not self.matches:
            return None
        return float(np.std([m.temporal_error for m in self.matches]))

    @property
    def mean_abs_spatial_error(self) -> float | None:
        errors = [m.spatial_error for m in self.matches if m.spatial_error is not None]
        if not errors:
            return None
        return float(np.mean(np.abs(errors)))


def _safe_metrics(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # 0/0 convention: an empty trace with no predictions is a perfect hit,
    # any other empty denominator scores zero.
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def match_peaks(
    predicted, ground_truth, threshold, threshold_label: str | None = None
) -> DetectionReport:
    """One-to-one matching of predictions to ground truth within a threshold.

    ``threshold`` is a sample count, either a scalar or one value per
    ground-truth axle.  Admissible pairs are accepted greedily by ascending
    absolute distance (ties: earlier ground truth first, then earlier
    prediction); every index is used at most once.
    """
    predicted = [int(p) for p in predicted]
    ground_truth = [int(g) for g in ground_truth]
    thresholds = np.broadcast_to(np.asarray(threshold), (len(ground_truth),))
    label = threshold_label if threshold_label is not None else str(threshold)

    pairs = []
    for gi, g in enumerate(ground_truth):
        for pi, p in enumerate(predicted):
            d = abs(g - p)
            if d <= thresholds[gi]:
                pairs.append((d, gi, pi))
    pairs.sort()

    used_gt: set[int] = set()
    used_pred: set[int] = set()
    matches = []
    for d, gi, pi in pairs:
        if gi in used_gt or pi in used_pred:
            continue
        used_gt.add(gi)
        used_pred.add(pi)
        matches.append(
            Match(
                gt_rank=gi,
                gt_index=ground_truth[gi],
                pred_index=predicted[pi],
                temporal_error=predicted[pi] - ground_truth[gi],
            )
        )
    matches.sort(key=lambda m: m.gt_rank)
    report = DetectionReport(threshold_label=label)
    report.matches = matches
    report.false_positives = [p for pi, p in enumerate(predicted) if pi not in used_pred]
    report.false_negatives = [g for gi, g in enumerate(ground_truth) if gi not in used_gt]
    return report


def spatial_metrics(
    report: DetectionReport, axle_velocities, sample_rate: float
) -> DetectionReport:
    """Fill in per-match spatial errors from per-axle mean velocities (meters)."""
    velocities = np.asarray(axle_velocities, dtype=np.float64)
    matches = []
    for m in report.matches:
        if m.gt_rank >= velocities.size:
            raise InvalidInputError(
                f"no velocity for ground-truth axle {m.gt_rank} (have {velocities.size})"
            )
        v = velocities[m.gt_rank]
        matches.append(replace(m, spatial_error=m.temporal_error * v / sample_rate))
    out = DetectionReport(
        threshold_label=report.threshold_label,
        false_positives=list(report.false_positives),
        false_negatives=list(report.false_negatives),
    )
    out.matches = matches
    return out


def spatial_threshold_samples(threshold_m: float, axle_velocities, sample_rate: float) -> np.ndarray:
    """Convert a spatial threshold to per-axle sample thresholds (half-up rounding)."""
    velocities = np.asarray(axle_velocities, dtype=np.float64)
    if np.any(velocities <= 0):
        raise InvalidInputError("axle velocities must be positive")
    return np.array(
        [round_half_away(threshold_m * sample_rate / v) for v in velocities], dtype=np.int64
    )


@dataclass
class TraceReport:
    """A scored trace tagged with its origin, the unit `aggregate` works on."""

    passage_id: str
    sensor: int
    report: DetectionReport


def aggregate(reports: list[TraceReport], group_by: str = "global") -> dict:
    """Pool detection reports globally or per passage / per sensor.

    Global aggregation pools TP/FP/FN and error statistics over all traces;
    grouped aggregation computes per-group precision/recall and their 25%
    quantile, median and mean across groups.
    """
    if not reports:
        raise InvalidInputError("cannot aggregate an empty report collection")
    if group_by == "global":
        return _aggregate_global(reports)
    if group_by == "per_passage":
        return _aggregate_grouped(reports, lambda r: r.passage_id)
    if group_by == "per_sensor":
        return _aggregate_grouped(reports, lambda r: r.sensor)
    raise InvalidInputError(f"unknown group_by {group_by!r}")


def _aggregate_global(reports: list[TraceReport]) -> dict:
    tp = sum(r.report.tp for r in reports)
    fp = sum(r.report.fp for r in reports)
    fn = sum(r.report.fn for r in reports)
    precision, recall, f1 = _safe_metrics(tp, fp, fn)
    temporal = [m.temporal_error for r in reports for m in r.report.matches]
    spatial = [
        m.spatial_error
        for r in reports
        for m in r.report.matches
        if m.spatial_error is not None
    ]
    return {
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "mean_abs_temporal_error": float(np.mean(np.abs(temporal))) if temporal else None,
        "std_temporal_error": float(np.std(temporal)) if temporal else None,
        "mean_abs_spatial_error": float(np.mean(np.abs(spatial))) if spatial else None,
    }


def _aggregate_grouped(reports: list[TraceReport], key) -> dict:
    groups: dict = {}
    for r in reports:
        groups.setdefault(key(r), []).append(r)
    rows = []
    for group in sorted(groups, key=str):
        tp = sum(r.report.tp for r in groups[group])
        fp = sum(r.report.fp for r in groups[group])
        fn = sum(r.report.fn for r in groups[group])
        precision, recall, f1 = _safe_metrics(tp, fp, fn)
        rows.append(
            {
                "group": group,
                "tp": tp,
                "fp": fp,
                "fn": fn,
                "precision": precision,
                "recall": recall,
                "f1": f1,
            }
        )
    quantiles = {}
    for metric in ("precision", "recall"):
        values = np.array([row[metric] for row in rows])
        quantiles[metric] = {
            "q25": float(np.percentile(values, 25)),
            "median": float(np.percentile(values, 50)),
            "mean": float(values.mean()),
        }
    return {"rows": rows, "quantiles": quantiles}
