"""Command-line pipeline: synth, label, transform, train, sweep-gamma, predict, evaluate.

Every command materializes its configuration, seeds all RNGs, writes its
outputs atomically into the run directory, and drops a manifest.json from
which the run can be reproduced (pass the manifest as --config).
"""

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import (
    load_config,
    make_manifest,
    materialize_config,
    fingerprint_file,
    fingerprint_tree,
    seed_everything,
    write_manifest,
)
from .detector import DetectorModel, ModelConfig, build_model, load_checkpoint, predict, save_checkpoint
from .errors import ConfigError, InvalidPassageError, VadetError
from .ingest import (
    LabelSet,
    PassageRecord,
    label_passage,
    list_passage_ids,
    load_labels,
    load_passage,
    save_labels,
    save_passage,
)
from .postprocess import (
    PeakParams,
    TraceReport,
    aggregate,
    find_peaks,
    match_peaks,
    spatial_metrics,
    spatial_threshold_samples,
)
from .scalogram import WaveletSpec, save_scalogram, transform_passage
from .synth import SyntheticScenario, random_scenario, simulate_passage
from .training import TrainConfig, WindowSample, build_windows, split_passages, train
from .util import atomic_write_text


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(Path(path), buf.getvalue())


def _write_json(path: Path, doc) -> None:
    atomic_write_text(Path(path), json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _pmap(fn, items, workers: int):
    """Ordered map, optionally across a thread pool."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _require_dir(config: dict, key: str) -> Path:
    value = config["paths"].get(key)
    if not value:
        raise ConfigError(f"config paths.{key} is required for this command")
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"paths.{key} does not exist: {path}")
    return path


def _channel_specs(config: dict) -> tuple[WaveletSpec, ...]:
    return tuple(WaveletSpec(**c) for c in config["channels"])


def _peak_params(config: dict) -> PeakParams:
    return PeakParams(**config["peaks"])


def _load_labeled_dataset(config: dict):
    """Returns (passages, labels_by_id, rejected_by_id); passages are labeled only."""
    data_dir = _require_dir(config, "data")
    ids = list_passage_ids(data_dir)
    if not ids:
        raise ConfigError(f"no passages found in {data_dir}")
    labels_dir = config["paths"].get("labels")
    labels: dict[str, LabelSet] = {}
    rejected: dict[str, str] = {}
    passages = []
    for pid in ids:
        passage = load_passage(data_dir, pid)
        if labels_dir:
            label_path = Path(labels_dir) / f"{pid}.yaml"
            if not label_path.exists():
                raise ConfigError(f"label file missing for passage {pid}: {label_path}")
            _, labels[pid] = load_labels(label_path)
        else:
            try:
                labels[pid] = label_passage(
                    passage,
                    config["ingest"]["min_height"],
                    config["ingest"]["min_distance"],
                )
            except VadetError as exc:
                rejected[pid] = str(exc)
                continue
        passages.append(passage)
    if not passages:
        raise ConfigError("no labelable passages in dataset")
    return passages, labels, rejected


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(config: dict, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    n = int(config["synth"]["n_passages"])
    if n <= 0:
        raise ConfigError("empty dataset requested (synth.n_passages must be >= 1)")
    rng = np.random.default_rng(config["seed"])
    passages_dir = out_dir / "passages"
    labels_dir = out_dir / "labels"
    passages_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    overrides = dict(config["synth"].get("scenario") or {})
    for key, value in overrides.items():
        if isinstance(value, list):
            overrides[key] = tuple(value)
    n_axles_total = 0
    for i in range(n):
        scenario = random_scenario(
            rng,
            i,
            n_axles_range=tuple(config["synth"]["n_axles_range"]),
            velocity_range=tuple(config["synth"]["velocity_range"]),
            load_range=tuple(config["synth"]["load_range"]),
            spacing_range=tuple(config["synth"]["spacing_range"]),
            noise_rms=config["synth"]["noise_rms"],
            **overrides,
        )
        record, _ = simulate_passage(scenario, rng)
        try:
            labels = label_passage(
                record, config["ingest"]["min_height"], config["ingest"]["min_distance"]
            )
        except VadetError as exc:
            raise InvalidPassageError(
                f"generated passage {record.id} is not labelable: {exc}"
            ) from exc
        save_passage(record, passages_dir)
        save_labels(labels, record.id, labels_dir / f"{record.id}.yaml")
        n_axles_total += labels.n_axles

    summary = {"n_passages": n, "n_axles_total": n_axles_total}
    materialize_config(config, out_dir / "config.yaml")
    manifest = make_manifest("synth", config, fingerprint_tree(passages_dir), {"summary": summary})
    write_manifest(manifest, out_dir)
    print(f"synth: wrote {n} passages ({n_axles_total} axles) to {out_dir}")
    return summary


def cmd_label(config: dict, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    data_dir = _require_dir(config, "data")
    ids = list_passage_ids(data_dir)
    if not ids:
        raise ConfigError(f"no passages found in {data_dir}")
    labels_dir = out_dir / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)

    accepted = 0
    rejected: dict[str, str] = {}
    velocities: list[float] = []
    for pid in ids:
        passage = load_passage(data_dir, pid)
        try:
            labels = label_passage(
                passage, config["ingest"]["min_height"], config["ingest"]["min_distance"]
            )
        except VadetError as exc:
            rejected[pid] = str(exc)
            continue
        save_labels(labels, pid, labels_dir / f"{pid}.yaml")
        velocities.extend(float(v) for v in labels.axle_velocities)
        accepted += 1

    counts, edges = np.histogram(np.asarray(velocities), bins=20) if velocities else (
        np.zeros(0, dtype=int),
        np.zeros(1),
    )
    _write_csv(
        out_dir / "velocity_histogram.csv",
        ["bin_left_mps", "bin_right_mps", "count"],
        [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))],
    )
    stats = {
        "accepted": accepted,
        "rejected": len(rejected),
        "rejection_reasons": rejected,
        "n_axles": len(velocities),
    }
    _write_json(out_dir / "stats.json", stats)
    materialize_config(config, out_dir / "config.yaml")
    manifest = make_manifest("label", config, fingerprint_tree(data_dir), {"summary": stats})
    write_manifest(manifest, out_dir)
    print(f"label: {accepted} accepted, {len(rejected)} rejected, {len(velocities)} axles")
    return stats


def cmd_transform(config: dict, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    passages, labels, rejected = _load_labeled_dataset(config)
    specs = _channel_specs(config)
    cache_dir = out_dir / "scalograms"
    cache_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(p, s) for p in sorted(passages, key=lambda p: p.id) for s in range(p.n_sensors)]

    def run(job):
        passage, sensor = job
        sg, _, _ = transform_passage(passage, labels[passage.id], sensor, specs)
        save_scalogram(sg, cache_dir / f"{passage.id}_s{sensor}.bin")
        return passage.id, sensor, sg

    results = _pmap(run, jobs, int(config.get("workers", 1)))

    # One long-format example tensor (first passage, first sensor) as CSV.
    _, _, example = results[0]
    n_s, n_f, n_t = example.tensor.shape
    header = ["local_index"] + [f"ch{t}_scale{f}" for t in range(n_t) for f in range(n_f)]
    rows = (
        [i] + [example.tensor[i, f, t] for t in range(n_t) for f in range(n_f)]
        for i in range(n_s)
    )
    _write_csv(out_dir / "scalogram_example.csv", header, rows)

    summary = {"n_scalograms": len(results), "rejected": len(rejected)}
    materialize_config(config, out_dir / "config.yaml")
    manifest = make_manifest(
        "transform", config, fingerprint_tree(config["paths"]["data"]), {"summary": summary}
    )
    write_manifest(manifest, out_dir)
    print(f"transform: wrote {len(results)} scalograms to {cache_dir}")
    return summary


def _train_config(config: dict) -> TrainConfig:
    t = config["train"]
    return TrainConfig(
        gamma=float(t["gamma"]),
        epochs=int(t["epochs"]),
        steps_per_epoch=int(t["steps_per_epoch"]),
        batch_size=int(t["batch_size"]),
        split=tuple(float(x) for x in t["split"]),
        split_seed=int(t["split_seed"]),
        learning_rate=float(t["learning_rate"]),
        checkpoint_policy=t["checkpoint_policy"],
    )


def _split_windows(config: dict, passages, labels):
    tcfg = _train_config(config)
    split = split_passages([p.id for p in passages], tcfg.split, tcfg.split_seed)
    specs = _channel_specs(config)
    by_id = {p.id: p for p in passages}
    windows = {}
    for name in ("train", "val", "test"):
        windows[name] = build_windows([by_id[i] for i in split[name]], labels, specs)
    return tcfg, split, windows


def cmd_train(config: dict, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    rng = seed_everything(int(config["seed"]), bool(config["deterministic"]))
    passages, labels, rejected = _load_labeled_dataset(config)
    tcfg, split, windows = _split_windows(config, passages, labels)
    if not windows["train"] or not windows["val"]:
        raise ConfigError(
            f"empty split: train={len(windows['train'])}, val={len(windows['val'])} windows"
        )

    epoch_offset = 0
    resume_from = config["train"].get("resume_from")
    if resume_from:
        model = load_checkpoint(resume_from)
        epoch_offset = int(model.training_manifest.get("epochs_completed", 0))
    else:
        model = build_model(ModelConfig(**config["model"]))

    model, history, diagnostics = train(
        model,
        windows["train"],
        windows["val"],
        tcfg,
        rng,
        eval_threshold=int(config["train"]["eval_threshold"]),
        eval_params=_peak_params(config),
    )
    for record in history:
        record["epoch"] += epoch_offset

    best_epoch = diagnostics["best_epoch"] + epoch_offset
    best_record = next(r for r in history if r["epoch"] == best_epoch)
    model.training_manifest = {
        "gamma": tcfg.gamma,
        "epochs_completed": epoch_offset + len(history),
        "seed": int(config["seed"]),
        "split_seed": tcfg.split_seed,
        "best_epoch": best_epoch,
    }
    save_checkpoint(model, out_dir / "checkpoint.bin")
    _write_csv(
        out_dir / "history.csv",
        ["epoch", "loss", "val_precision", "val_recall", "val_F1"],
        [
            (r["epoch"], r["loss"], r["val_precision"], r["val_recall"], r["val_F1"])
            for r in history
        ],
    )
    summary = {
        "gamma": tcfg.gamma,
        "best_epoch": best_epoch,
        "best_val_f1": diagnostics["best_val_f1"],
        "best_val_precision": best_record["val_precision"],
        "best_val_recall": best_record["val_recall"],
        "val_peaks_at_best": diagnostics["val_peaks_at_best"],
        "collapsed": diagnostics["collapsed"],
        "split_sizes": {k: len(v) for k, v in split.items()},
        "window_counts": {k: len(v) for k, v in windows.items()},
        "rejected_passages": len(rejected),
    }
    _write_json(out_dir / "summary.json", summary)
    materialize_config(config, out_dir / "config.yaml")
    fingerprints = fingerprint_tree(config["paths"]["data"])
    manifest = make_manifest(
        "train",
        config,
        fingerprints,
        {"summary": summary, "elapsed_s": round(time.monotonic() - started, 3)},
    )
    write_manifest(manifest, out_dir)
    print(
        f"train: gamma={tcfg.gamma:g} best epoch {best_epoch} "
        f"val F1={diagnostics['best_val_f1']:.4f}"
        + (" [collapsed]" if diagnostics["collapsed"] else "")
    )
    return summary


def cmd_sweep_gamma(config: dict, out_dir: Path, gammas=None) -> list[dict]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if gammas is None:
        gammas = config["sweep"]["gammas"]
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ConfigError("no gamma values to sweep")

    rows = []
    for gamma in gammas:
        sub_config = json.loads(json.dumps(config))
        sub_config["train"]["gamma"] = gamma
        sub_out = out_dir / f"gamma_{gamma:g}"
        summary = cmd_train(sub_config, sub_out)
        rows.append(
            {
                "gamma": gamma,
                "best_epoch": summary["best_epoch"],
                "val_F1": summary["best_val_f1"],
                "val_precision": summary["best_val_precision"],
                "val_recall": summary["best_val_recall"],
                "unusable": summary["collapsed"],
            }
        )

    _write_csv(
        out_dir / "sweep.csv",
        ["gamma", "best_epoch", "val_F1", "val_precision", "val_recall", "unusable"],
        [
            (r["gamma"], r["best_epoch"], r["val_F1"], r["val_precision"], r["val_recall"], r["unusable"])
            for r in rows
        ],
    )
    materialize_config(config, out_dir / "config.yaml")
    manifest = make_manifest("sweep-gamma", config, {}, {"summary": {"rows": rows}})
    write_manifest(manifest, out_dir)
    print("sweep-gamma: " + ", ".join(f"g={r['gamma']:g} F1={r['val_F1']:.4f}" for r in rows))
    return rows


def _load_model(config: dict) -> DetectorModel:
    path = config["paths"].get("checkpoint")
    if not path:
        raise ConfigError("config paths.checkpoint is required for this command")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _select_windows(config: dict, passages, labels):
    which = config["evaluate"]["split"]
    tcfg, split, windows = _split_windows(config, passages, labels)
    if which == "all":
        return windows["train"] + windows["val"] + windows["test"]
    if which not in windows:
        raise ConfigError(f"evaluate.split must be train/val/test/all, got {which!r}")
    return windows[which]


def cmd_predict(config: dict, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    seed_everything(int(config["seed"]), bool(config["deterministic"]))
    model = _load_model(config)
    passages, labels, _ = _load_labeled_dataset(config)
    windows = _select_windows(config, passages, labels)
    if not windows:
        raise ConfigError("selected split contains no windows")
    params = _peak_params(config)

    pred_dir = out_dir / "predictions"
    pred_dir.mkdir(parents=True, exist_ok=True)
    peak_rows = []
    for w in windows:
        probs = predict(model, w.scalogram)
        start = w.scalogram.window_start
        _write_csv(
            pred_dir / f"{w.passage_id}_s{w.sensor}.csv",
            ["sample", "probability"],
            ((start + i, probs[i]) for i in range(len(probs))),
        )
        for p in find_peaks(probs, params):
            peak_rows.append((w.passage_id, w.sensor, start + int(p), probs[p]))
    _write_csv(
        out_dir / "peaks.csv",
        ["passage_id", "sensor", "peak_sample", "probability"],
        peak_rows,
    )
    summary = {"n_windows": len(windows), "n_peaks": len(peak_rows)}
    materialize_config(config, out_dir / "config.yaml")
    manifest = make_manifest("predict", config, {}, {"summary": summary})
    write_manifest(manifest, out_dir)
    print(f"predict: {len(peak_rows)} peaks over {len(windows)} windows")
    return summary


def _threshold_label(spec: dict) -> str:
    return f"{spec['value']:g}{'samples' if spec['kind'] == 'samples' else 'cm'}"


def cmd_evaluate(config: dict, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed_everything(int(config["seed"]), bool(config["deterministic"]))
    model = _load_model(config)
    passages, labels, _ = _load_labeled_dataset(config)
    windows = _select_windows(config, passages, labels)
    if not windows:
        raise ConfigError("selected split contains no windows")
    params = _peak_params(config)
    sample_rate = passages[0].sample_rate

    predictions = [(w, find_peaks(predict(model, w.scalogram), params)) for w in windows]

    report_rows = []
    deviation_rows = []
    distribution_rows = []
    summary_thresholds = {}
    for thr_spec in config["evaluate"]["thresholds"]:
        label = _threshold_label(thr_spec)
        reports = []
        for w, peaks in predictions:
            velocities = labels[w.passage_id].axle_velocities
            if thr_spec["kind"] == "samples":
                threshold = int(thr_spec["value"])
            else:
                threshold = spatial_threshold_samples(
                    float(thr_spec["value"]) / 100.0, velocities, sample_rate
                )
            report = match_peaks(peaks, w.crossings, threshold, threshold_label=label)
            report = spatial_metrics(report, velocities, sample_rate)
            reports.append(TraceReport(passage_id=w.passage_id, sensor=w.sensor, report=report))

        for tr in reports:
            r = tr.report
            report_rows.append(
                (
                    tr.passage_id,
                    tr.sensor,
                    label,
                    r.tp,
                    r.fp,
                    r.fn,
                    r.precision,
                    r.recall,
                    r.f1,
                    r.mean_abs_temporal_error,
                    r.mean_abs_spatial_error,
                )
            )
            start_by = next(w for w, _ in predictions if w.passage_id == tr.passage_id and w.sensor == tr.sensor)
            start = start_by.scalogram.window_start
            for m in r.matches:
                deviation_rows.append(
                    (
                        tr.passage_id,
                        tr.sensor,
                        label,
                        start + int(m.gt_index),
                        start + int(m.pred_index),
                        m.temporal_error,
                        m.spatial_error,
                    )
                )

        summary_thresholds[label] = aggregate(reports, "global")
        for group_by in ("per_passage", "per_sensor"):
            grouped = aggregate(reports, group_by)
            for metric in ("precision", "recall"):
                q = grouped["quantiles"][metric]
                distribution_rows.append(
                    (label, group_by, metric, q["q25"], q["median"], q["mean"])
                )

    _write_csv(
        out_dir / "report.csv",
        [
            "passage_id",
            "sensor",
            "threshold",
            "tp",
            "fp",
            "fn",
            "precision",
            "recall",
            "f1",
            "mean_abs_temporal_err",
            "mean_abs_spatial_err",
        ],
        report_rows,
    )
    _write_csv(
        out_dir / "deviations.csv",
        [
            "passage_id",
            "sensor",
            "threshold",
            "gt_sample",
            "pred_sample",
            "temporal_error_samples",
            "spatial_error_m",
        ],
        deviation_rows,
    )
    _write_csv(
        out_dir / "distributions.csv",
        ["threshold", "group_by", "metric", "q25", "median", "mean"],
        distribution_rows,
    )
    summary = {
        "split": config["evaluate"]["split"],
        "n_windows": len(windows),
        "thresholds": summary_thresholds,
    }
    _write_json(out_dir / "summary.json", summary)
    materialize_config(config, out_dir / "config.yaml")
    fingerprints = fingerprint_tree(config["paths"]["data"])
    fingerprints["__checkpoint__"] = fingerprint_file(config["paths"]["checkpoint"])
    manifest = make_manifest("evaluate", config, fingerprints, {"summary": summary})
    write_manifest(manifest, out_dir)
    headline = ", ".join(
        f"{label}: F1={doc['f1']:.4f}" for label, doc in summary_thresholds.items()
    )
    print(f"evaluate [{config['evaluate']['split']}]: {headline}")
    return summary


# ---------------------------------------------------------------------------
# Entry point

_COMMANDS = {
    "synth": cmd_synth,
    "label": cmd_label,
    "transform": cmd_transform,
    "train": cmd_train,
    "sweep-gamma": cmd_sweep_gamma,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vadet",
        description="Axle detection from bridge acceleration signals: "
        "wavelet scalograms, a convolutional per-sample classifier, and peak scoring.",
    )
    parser.add_argument("--version", action="version", version=f"vadet {__version__}")
    parser.add_argument("--config", help="YAML config or a previous run's manifest.json")
    parser.add_argument("--out", help="run output directory (default runs/<command>)")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--workers", type=int, help="override config worker count")
    parser.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="force (or disable) deterministic torch algorithms",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate a synthetic dataset with labels"),
        ("label", "derive labels and statistics from wheel-load channels"),
        ("transform", "precompute scalogram cache files"),
        ("train", "train the detector, keeping the best-by-validation-F1 checkpoint"),
        ("sweep-gamma", "train once per focusing parameter and tabulate metrics"),
        ("predict", "write probability traces and detected peaks"),
        ("evaluate", "score a checkpoint against labels at all thresholds"),
    ]:
        sp = sub.add_parser(name, help=help_text)
        if name == "sweep-gamma":
            sp.add_argument("--gammas", help="comma-separated focusing parameters, e.g. 0,2.5")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.workers is not None:
            config["workers"] = args.workers
        if args.deterministic is not None:
            config["deterministic"] = args.deterministic
        out_dir = Path(args.out) if args.out else Path("runs") / args.command
        if args.command == "sweep-gamma" and getattr(args, "gammas", None):
            gammas = [float(g) for g in args.gammas.split(",")]
            cmd_sweep_gamma(config, out_dir, gammas)
        else:
            _COMMANDS[args.command](config, out_dir)
    except VadetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
