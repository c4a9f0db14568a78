"""Training loop for the axle detector: batching, focal loss, validation.

Windows (one per passage and sensor) are sampled with replacement each step,
zero-padded to the batch maximum rounded up to a multiple of 16, and the
padded samples are masked out of the loss.  After every epoch the validation
split is scored by running peak extraction on the predicted probabilities and
matching against the labeled crossings; the checkpoint with the best
validation F1 is kept.
"""

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .detector import DetectorModel, focal_loss, pad_to_multiple_of_16, predict, scalogram_to_input
from .errors import ConfigError, TrainingDivergedError
from .postprocess import PeakParams, TraceReport, aggregate, find_peaks, match_peaks
from .scalogram import DEFAULT_CHANNEL_SPECS, Scalogram, transform_passage


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 2.5
    epochs: int = 150
    steps_per_epoch: int = 150
    batch_size: int = 16
    split: tuple[float, float, float] = (0.70, 0.20, 0.10)
    split_seed: int = 0
    learning_rate: float = 1e-3
    checkpoint_policy: str = "best-val-f1"

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if abs(sum(self.split) - 1.0) > 1e-9 or any(f < 0 for f in self.split):
            raise ConfigError("split fractions must be non-negative and sum to 1")
        if min(self.epochs, self.steps_per_epoch, self.batch_size) < 1:
            raise ConfigError("epochs, steps_per_epoch and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.checkpoint_policy != "best-val-f1":
            raise ConfigError(f"unknown checkpoint policy {self.checkpoint_policy!r}")


@dataclass
class WindowSample:
    """One training window: model input, per-sample target, crossing positions."""

    passage_id: str
    sensor: int
    scalogram: Scalogram
    target: np.ndarray
    crossings: np.ndarray = field(init=False)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float32)
        self.crossings = np.flatnonzero(self.target > 0.5).astype(np.int64)

    @property
    def length(self) -> int:
        return self.target.shape[0]


def split_passages(
    passage_ids, split: tuple[float, float, float], seed: int
) -> dict[str, list[str]]:
    """Deterministic passage-level split (all sensors of a passage together)."""
    ids = sorted(str(i) for i in passage_ids)
    if not ids:
        raise ConfigError("no passages to split")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train : n_train + n_val],
        "test": shuffled[n_train + n_val :],
    }


def build_windows(passages, labels_by_id, specs=DEFAULT_CHANNEL_SPECS) -> list[WindowSample]:
    """Transform every (passage, sensor) into a WindowSample, deterministic order."""
    windows = []
    for passage in sorted(passages, key=lambda p: p.id):
        labels = labels_by_id[passage.id]
        for sensor in range(passage.n_sensors):
            sg, target, _ = transform_passage(passage, labels, sensor, specs)
            windows.append(
                WindowSample(passage_id=passage.id, sensor=sensor, scalogram=sg, target=target)
            )
    return windows


def assemble_batch(windows: list[WindowSample], indices, multiple: int = 16):
    """Stack selected windows zero-padded to the batch maximum length."""
    chosen = [windows[i] for i in indices]
    t_max = max(w.length for w in chosen)
    t_pad = ((t_max + multiple - 1) // multiple) * multiple
    n_f = chosen[0].scalogram.tensor.shape[1]
    n_t = chosen[0].scalogram.tensor.shape[2]
    x = np.zeros((len(chosen), n_t, t_pad, n_f), dtype=np.float32)
    y = np.zeros((len(chosen), t_pad), dtype=np.float32)
    mask = np.zeros((len(chosen), t_pad), dtype=np.float32)
    for b, w in enumerate(chosen):
        x[b, :, : w.length, :] = np.transpose(w.scalogram.tensor, (2, 0, 1))
        y[b, : w.length] = w.target
        mask[b, : w.length] = 1.0
    return torch.from_numpy(x), torch.from_numpy(y), torch.from_numpy(mask)


def evaluate_windows(
    model: DetectorModel,
    windows: list[WindowSample],
    threshold,
    params: PeakParams | None = None,
    threshold_label: str | None = None,
) -> list[TraceReport]:
    """Predict, extract peaks, and match against ground truth per window."""
    params = params or PeakParams()
    reports = []
    for w in windows:
        probs = predict(model, w.scalogram)
        peaks = find_peaks(probs, params)
        report = match_peaks(peaks, w.crossings, threshold, threshold_label=threshold_label)
        reports.append(TraceReport(passage_id=w.passage_id, sensor=w.sensor, report=report))
    return reports


def _pooled_metrics(reports: list[TraceReport]):
    row = aggregate(reports, group_by="global")
    return row["precision"], row["recall"], row["f1"]


def train(
    model: DetectorModel,
    train_windows: list[WindowSample],
    val_windows: list[WindowSample],
    cfg: TrainConfig,
    rng: np.random.Generator,
    eval_threshold: int = 20,
    eval_params: PeakParams | None = None,
    callback=None,
):
    """Optimize the model, returning (model, history, diagnostics).

    The model is left holding the best-by-validation-F1 weights.  History is
    one record per epoch: epoch, loss, val_precision, val_recall, val_F1.
    ``callback(epoch, record)`` may return True to stop early.
    """
    if not train_windows or not val_windows:
        raise ConfigError("empty train or validation split")
    multiple = 2**model.config.depth
    optimizer = torch.optim.Adam(model.net.parameters(), lr=cfg.learning_rate)
    history = []
    best_state = None
    best_f1 = -1.0
    best_epoch = -1
    best_peaks = 0

    for epoch in range(1, cfg.epochs + 1):
        model.net.train()
        losses = []
        for step in range(cfg.steps_per_epoch):
            indices = rng.integers(0, len(train_windows), size=cfg.batch_size)
            x, y, mask = assemble_batch(train_windows, indices, multiple)
            optimizer.zero_grad()
            p = model.net(x)
            loss = focal_loss(p, y, cfg.gamma, mask=mask)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, step {step + 1}")
            loss.backward()
            optimizer.step()
            losses.append(float(loss.item()))

        reports = evaluate_windows(model, val_windows, eval_threshold, eval_params)
        precision, recall, f1 = _pooled_metrics(reports)
        n_peaks = sum(r.report.tp + r.report.fp for r in reports)
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "val_precision": precision,
            "val_recall": recall,
            "val_F1": f1,
        }
        history.append(record)
        if f1 > best_f1:
            best_f1 = f1
            best_epoch = epoch
            best_peaks = n_peaks
            best_state = copy.deepcopy(model.net.state_dict())
        if callback is not None and callback(epoch, record):
            break

    if best_state is not None:
        model.net.load_state_dict(best_state)
    diagnostics = {
        "best_epoch": best_epoch,
        "best_val_f1": best_f1,
        "val_peaks_at_best": best_peaks,
        "collapsed": best_peaks == 0,
    }
    return model, history, diagnostics
