"""Run configuration, reproducibility manifests, and seeding.

Every command materializes its full configuration (defaults deep-merged with
the user's config file), seeds numpy and torch, and writes a manifest
recording the config, data fingerprints, kernel backend, and thread count.
A manifest can itself be passed as the config of a later run to reproduce it.
"""

import copy
import datetime
import hashlib
import json
from pathlib import Path

import numpy as np
import torch
import yaml

from . import __version__, _kernels
from .errors import ConfigError
from .util import atomic_write_text

DEFAULT_CONFIG = {
    "seed": 0,
    "deterministic": True,
    "workers": 1,
    "paths": {
        "data": None,
        "labels": None,
        "checkpoint": None,
        "scalograms": None,
    },
    "synth": {
        "n_passages": 8,
        "n_axles_range": [2, 16],
        "velocity_range": [10.0, 57.0],
        "load_range": [60.0, 150.0],
        "spacing_range": [2.0, 2.6],
        "noise_rms": 0.05,
        "scenario": {},
    },
    "ingest": {
        "min_height": 0.25,
        "min_distance": 20,
    },
    "channels": [
        {"family": "cgau1", "scale_min": 1.0, "scale_max": 8.0, "n_scales": 16},
        {"family": "cgau1", "scale_min": 8.0, "scale_max": 50.0, "n_scales": 16},
        {"family": "gaus1", "scale_min": 0.6, "scale_max": 6.5, "n_scales": 16},
        {"family": "gaus1", "scale_min": 6.5, "scale_max": 35.0, "n_scales": 16},
        {"family": "fbsp", "scale_min": 1.5, "scale_max": 10.0, "n_scales": 16},
        {"family": "fbsp", "scale_min": 10.0, "scale_max": 40.0, "n_scales": 16},
    ],
    "fbsp": {"order": 1, "fb": 1.0, "fc": 1.5},
    "model": {
        "depth": 4,
        "base_feature_maps": 16,
        "input_channels": 6,
        "input_scales": 16,
        "kernel_time": 3,
        "kernel_freq": 3,
    },
    "train": {
        "gamma": 2.5,
        "epochs": 150,
        "steps_per_epoch": 150,
        "batch_size": 16,
        "split": [0.70, 0.20, 0.10],
        "split_seed": 0,
        "learning_rate": 1e-3,
        "checkpoint_policy": "best-val-f1",
        "eval_threshold": 20,
        "resume_from": None,
    },
    "peaks": {
        "min_height": 0.25,
        "min_distance": 20,
        "min_prominence": 0.15,
    },
    "sweep": {"gammas": [0.0, 2.5]},
    "evaluate": {
        "split": "test",
        "thresholds": [
            {"kind": "samples", "value": 20},
            {"kind": "cm", "value": 200},
            {"kind": "cm", "value": 37},
            {"kind": "cm", "value": 20},
        ],
    },
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    """Defaults merged with a YAML/JSON config file or a previous manifest."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    if "toolkit_version" in doc and "config" in doc:
        doc = doc["config"]
    return deep_merge(DEFAULT_CONFIG, doc)


def materialize_config(config: dict, path: Path) -> None:
    """Write the fully resolved configuration next to the run outputs.

    Keys are sorted so a run and its manifest-driven re-run produce
    byte-identical files regardless of the in-memory dict order.
    """
    atomic_write_text(Path(path), yaml.safe_dump(config, sort_keys=True))


def fingerprint_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fingerprint_tree(directory) -> dict[str, str]:
    """sha256 of every regular file under a directory, keyed by relative path."""
    directory = Path(directory)
    out = {}
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(directory))] = fingerprint_file(p)
    return out


def seed_everything(seed: int, deterministic: bool = True) -> np.random.Generator:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(bool(deterministic))
    return np.random.default_rng(seed)


def make_manifest(command: str, config: dict, data_fingerprints=None, extra=None) -> dict:
    manifest = {
        "toolkit_version": __version__,
        "command": command,
        "config": config,
        "backend": _kernels.BACKEND,
        "torch_threads": torch.get_num_threads(),
        "data_fingerprints": data_fingerprints or {},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(manifest: dict, out_dir: Path) -> Path:
    path = Path(out_dir) / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
