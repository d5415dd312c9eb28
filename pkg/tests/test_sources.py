from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from lcnn.data import sources
from lcnn.data.sources import load_builtin, load_dataset, load_openml, make_synthetic
from lcnn.errors import ConfigError


@pytest.mark.parametrize("name, size, n_features, n_classes", [("iris", 150, 4, 3), ("wine", 178, 13, 3)])
def test_builtin_datasets(name, size, n_features, n_classes):
    ds = load_builtin(name)
    assert (ds.size, ds.n_features, ds.n_classes) == (size, n_features, n_classes)
    assert ds.name == name
    assert not ds.has_missing


def test_unknown_builtin_is_a_config_error():
    with pytest.raises(ConfigError):
        load_builtin("abalone")
    with pytest.raises(ConfigError):
        load_dataset()


def test_synthetic_is_seeded():
    first, second = make_synthetic(seed=4), make_synthetic(seed=4)
    assert np.array_equal(first.features, second.features)
    assert first.n_classes == 2
    assert load_dataset("synthetic", seed=4).size == 400


def test_load_dataset_prefers_a_path(tmp_path):
    path = tmp_path / "iris.csv"
    path.write_text("a,label\n1,x\n2,y\n")
    ds = load_dataset("iris", path=path)
    assert ds.size == 2
    assert ds.name == "iris"


def test_openml_sets_are_fetched_and_encoded(monkeypatch):
    calls = []

    def fake_fetch(name, version, **kwargs):
        calls.append((name, version))
        return SimpleNamespace(
            data=pd.DataFrame({"preg": [1, 2, 3], "plas": ["85", "?", "140"]}),
            target=pd.Series(["tested_positive", "tested_negative", "tested_positive"], dtype="category"),
        )

    monkeypatch.setattr(sources, "fetch_openml", fake_fetch)
    ds = load_builtin("pima")
    assert calls == [("diabetes", 1)]
    assert ds.name == "pima"
    assert ds.class_names == ["tested_negative", "tested_positive"]
    assert list(ds.labels) == [1, 0, 1]
    assert ds.feature_names == ["preg", "plas"]
    # non-numeric cells become missing
    assert ds.missing_mask[1, 1]
    with pytest.raises(ConfigError):
        load_openml("iris")
