"""Configuration loading, merging, manifests, fingerprints, seeding."""

import json

import numpy as np
import pytest
import torch
import yaml

from vadet.config import (
    DEFAULT_CONFIG,
    deep_merge,
    fingerprint_file,
    fingerprint_tree,
    load_config,
    make_manifest,
    materialize_config,
    seed_everything,
    write_manifest,
)
from vadet.errors import ConfigError


def test_defaults_standalone():
    cfg = load_config(None)
    assert cfg == DEFAULT_CONFIG
    assert cfg is not DEFAULT_CONFIG  # deep copy, safe to mutate
    cfg["train"]["gamma"] = 99.0
    assert DEFAULT_CONFIG["train"]["gamma"] == 2.5


def test_deep_merge_nested():
    merged = deep_merge({"a": {"x": 1, "y": 2}, "b": 3}, {"a": {"y": 9}, "c": 4})
    assert merged == {"a": {"x": 1, "y": 9}, "b": 3, "c": 4}


def test_load_config_merges_partial_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"train": {"gamma": 0.0}, "seed": 7}))
    cfg = load_config(p)
    assert cfg["train"]["gamma"] == 0.0
    assert cfg["train"]["epochs"] == DEFAULT_CONFIG["train"]["epochs"]
    assert cfg["seed"] == 7


def test_load_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/does/not/exist.yaml")


def test_load_config_rejects_non_mapping(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- just\n- a\n- list\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_load_config_accepts_manifest(tmp_path):
    cfg = load_config(None)
    cfg["seed"] = 42
    manifest = make_manifest("synth", cfg)
    path = write_manifest(manifest, tmp_path)
    assert path.name == "manifest.json"
    again = load_config(path)
    assert again["seed"] == 42
    assert again["train"] == cfg["train"]


def test_materialize_config_canonical_bytes(tmp_path):
    a = {"b": 1, "a": {"z": 2, "y": 3}}
    b = {"a": {"y": 3, "z": 2}, "b": 1}
    materialize_config(a, tmp_path / "a.yaml")
    materialize_config(b, tmp_path / "b.yaml")
    assert (tmp_path / "a.yaml").read_bytes() == (tmp_path / "b.yaml").read_bytes()


def test_fingerprints(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "x.txt").write_text("hello")
    (tmp_path / "sub" / "y.txt").write_text("world")
    tree = fingerprint_tree(tmp_path)
    assert set(tree) == {"x.txt", "sub/y.txt"}
    assert tree["x.txt"] == fingerprint_file(tmp_path / "x.txt")
    assert all(len(v) == 64 for v in tree.values())
    (tmp_path / "x.txt").write_text("hello!")
    assert fingerprint_tree(tmp_path)["x.txt"] != tree["x.txt"]


def test_manifest_contents(tmp_path):
    manifest = make_manifest("train", {"seed": 1}, {"f": "0" * 64}, {"elapsed_s": 1.5})
    assert manifest["command"] == "train"
    assert manifest["config"] == {"seed": 1}
    assert manifest["data_fingerprints"] == {"f": "0" * 64}
    assert manifest["elapsed_s"] == 1.5
    assert manifest["backend"] in ("python", "compiled")
    assert "timestamp" in manifest and "toolkit_version" in manifest
    path = write_manifest(manifest, tmp_path)
    assert json.loads(path.read_text())["command"] == "train"


def test_seed_everything_reproduces_torch_and_numpy():
    rng1 = seed_everything(123, deterministic=True)
    t1 = torch.randn(4)
    n1 = rng1.random(4)
    rng2 = seed_everything(123, deterministic=True)
    t2 = torch.randn(4)
    n2 = rng2.random(4)
    assert torch.equal(t1, t2)
    np.testing.assert_array_equal(n1, n2)
    assert torch.are_deterministic_algorithms_enabled()
