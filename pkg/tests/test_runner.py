import json

import numpy as np
import pandas as pd
import pytest

from lcnn.experiment.manifest import Manifest
from lcnn.experiment.runner import run_experiment

VOLATILE = {"timing.json", "run.log"}


def _write_blobs(path, seed, missing=False):
    generator = np.random.default_rng(seed)
    features = np.vstack([generator.normal(-1.5, 0.5, (30, 3)), generator.normal(1.5, 0.5, (30, 3))])
    frame = pd.DataFrame(features, columns=["a", "b", "c"])
    frame["label"] = ["neg"] * 30 + ["pos"] * 30
    frame = frame.astype({"a": object})
    if missing:
        frame.loc[3, "a"] = "?"
    frame.to_csv(path, index=False)


@pytest.fixture
def manifest(tmp_path) -> Manifest:
    _write_blobs(tmp_path / "first.csv", 1, missing=True)
    _write_blobs(tmp_path / "second.csv", 2)
    data = {
        "name": "tiny",
        "master_seed": 4,
        "datasets": [{"name": "first", "path": "first.csv"}, {"name": "second", "path": "second.csv"}],
        "methods": [
            {"name": "baseline", "preset": "SE", "hidden_widths": [3], "schedule": {"epochs": 3, "batch_size": 10}},
            {"name": "lcnn", "preset": "SE+LC-L", "hidden_widths": [3], "schedule": {"epochs": 3, "batch_size": 10}},
        ],
        "grid": {"d_values": [1e-3, 1e-5]},
        "protocol": {"folds": 3, "repeats": 2, "grid_folds": 2},
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(data))
    return Manifest.load(path)


def _bundle(directory):
    return {
        str(p.relative_to(directory)): p.read_bytes()
        for p in sorted(directory.rglob("*"))
        if p.is_file() and p.name not in VOLATILE
    }


def test_bundle_layout(tmp_path, manifest):
    result = run_experiment(manifest, tmp_path / "out")
    out = tmp_path / "out"
    for name in ("manifest.json", "comparison.json", "comparison.csv", "statistics.json", "timing.json", "run.log"):
        assert (out / name).exists(), name
    assert (out / "grid" / "first__lcnn.csv").exists()
    assert (out / "cv" / "second__baseline.json").exists()
    assert (out / "train_reports" / "first__baseline.json").exists()
    assert (out / "capacity" / "second__lcnn.json").exists()
    assert result.table.is_complete
    selections = pd.read_csv(out / "grid" / "first__lcnn.csv")
    # one selection per outer fold
    assert len(selections) == 6
    assert {"repeat", "fold", "d", "inner_mean", "accuracy"} <= set(selections.columns)
    assert set(selections["d"]) <= {1e-3, 1e-5}
    cv = json.loads((out / "cv" / "first__baseline.json").read_text())
    assert len(cv["cv"]["folds"]) == 6
    assert "friedman" in result.statistics
    assert result.selections["first__lcnn"].consensus.objective.lcnn_d in (1e-3, 1e-5)
    timing = json.loads((out / "timing.json").read_text())
    assert "std_seconds" in timing["training_seconds"]["first"]["lcnn"]


def test_runs_are_byte_identical_apart_from_timing(tmp_path, manifest):
    run_experiment(manifest, tmp_path / "one")
    run_experiment(manifest, tmp_path / "two")
    first, second = _bundle(tmp_path / "one"), _bundle(tmp_path / "two")
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], name

