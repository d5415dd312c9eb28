import numpy as np
import pytest

from lcnn import config
from lcnn.data.dataset import Dataset
from lcnn.nn.linalg import ActivationKind
from lcnn.nn.network import Network, NetworkConfig


@pytest.fixture(autouse=True)
def _quiet_progress(monkeypatch):
    monkeypatch.setattr(config, "SHOW_PROGRESS", False)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_network(widths, activations, weights, biases) -> Network:
    """Network with hand-set parameters."""
    return Network(
        config=NetworkConfig(layer_widths=tuple(widths), activations=tuple(activations)),
        weights=[np.asarray(w, dtype=np.float64) for w in weights],
        biases=[np.asarray(b, dtype=np.float64) for b in biases],
    )


@pytest.fixture
def identity_chain() -> Network:
    """1 -> 1 -> 1 with identity activations and unit weights."""
    return make_network(
        [1, 1, 1],
        [ActivationKind.IDENTITY, ActivationKind.IDENTITY],
        [[[1.0]], [[1.0]]],
        [[0.0], [0.0]],
    )


@pytest.fixture
def blobs() -> Dataset:
    """Two well-separated 2-D clusters, 40 points each."""
    generator = np.random.default_rng(7)
    negative = generator.normal(-2.0, 0.4, size=(40, 2))
    positive = generator.normal(2.0, 0.4, size=(40, 2))
    return Dataset(
        features=np.vstack([negative, positive]),
        labels=np.repeat([0, 1], 40),
        class_names=["neg", "pos"],
        feature_names=["x0", "x1"],
        name="blobs",
    )
