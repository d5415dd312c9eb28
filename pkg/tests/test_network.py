import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from lcnn.errors import ConfigError, DataError, ShapeError
from lcnn.nn.linalg import ActivationKind
from lcnn.nn.network import Network, NetworkConfig, augmented_view, forward, init_network, predict
from tests.conftest import make_network

TANH = ActivationKind.TANH
IDENTITY = ActivationKind.IDENTITY


@pytest.mark.parametrize(
    "widths, activations",
    [
        ((3,), ()),
        ((3, 0, 1), (TANH, TANH)),
        ((3, 4, 1), (TANH,)),
        ((3, 4, 1), (ActivationKind.SOFTMAX, TANH)),
    ],
)
def test_invalid_configs(widths, activations):
    with pytest.raises(ConfigError):
        NetworkConfig(layer_widths=widths, activations=activations)


def test_classifier_config():
    config = NetworkConfig.classifier(4, [8, 6], 3)
    assert config.layer_widths == (4, 8, 6, 3)
    assert config.n_layers == 3
    assert config.penultimate_width == 6
    assert not config.is_binary


def test_init_network_is_seeded_and_bounded():
    config = NetworkConfig.classifier(9, [5], 2, seed=3)
    first, second = init_network(config), init_network(config)
    for w1, w2 in zip(first.weights, second.weights):
        assert_array_equal(w1, w2)
    assert np.all(np.abs(first.weights[0]) <= 1.0 / 3.0)
    assert all(np.all(b == 0.0) for b in first.biases)
    assert first.parameter_count() == 9 * 5 + 5 + 5 * 2 + 2


def test_network_rejects_mismatched_parameters():
    config = NetworkConfig(layer_widths=(2, 1), activations=(IDENTITY,))
    with pytest.raises(ShapeError):
        Network(config=config, weights=[np.ones((2, 1))], biases=[np.zeros(1)])
    with pytest.raises(DataError):
        Network(config=config, weights=[np.array([[np.inf, 0.0]])], biases=[np.zeros(1)])


def test_forward_hand_case():
    net = make_network([2, 1], [IDENTITY], [[[1.0, 2.0]]], [[0.5]])
    trace = forward(net, [[1.0, 1.0]])
    assert_allclose(trace.net, [[3.5]])
    assert_allclose(trace.output, [[3.5]])
    assert trace.penultimate is trace.inputs


def test_forward_validates_batches():
    net = init_network(NetworkConfig.classifier(3, [2], 1))
    with pytest.raises(ShapeError):
        forward(net, np.zeros((4, 2)))
    with pytest.raises(DataError):
        forward(net, [[0.0, np.nan, 0.0]])


def test_predict_binary_threshold():
    net = make_network([1, 1], [TANH], [[[1.0]]], [[0.0]])
    assert_array_equal(predict(net, [[-1.0], [0.0], [2.0]]), [0, 1, 1])


def test_predict_multiclass_ties_take_lowest_index():
    net = make_network([2, 3], [TANH], [np.zeros((3, 2))], [np.zeros(3)])
    assert_array_equal(predict(net, [[1.0, -1.0]]), [0])


def test_document_round_trip(tmp_path):
    net = init_network(NetworkConfig.classifier(3, [4], 2, seed=5))
    path = net.save(tmp_path / "net.json")
    loaded = Network.load(path, kind="classifier")
    assert loaded.config == net.config
    for w1, w2 in zip(net.weights, loaded.weights):
        assert_array_equal(w1, w2)


def test_document_rejects_wrong_version_and_kind():
    document = init_network(NetworkConfig.classifier(2, [], 1)).to_dict()
    with pytest.raises(ConfigError):
        Network.from_dict({**document, "version": 99})
    with pytest.raises(ConfigError):
        Network.from_dict(document, kind="autoencoder")


def test_augmented_view_reproduces_output_pre_activations(rng):
    net = init_network(NetworkConfig.classifier(4, [5], 3, seed=1))
    trace = forward(net, rng.normal(size=(6, 4)))
    augmented, beta = augmented_view(trace)
    assert augmented.shape == (6, 6)
    assert_allclose(augmented[:, -1], 1.0)
    assert_allclose(augmented @ beta.T, trace.net)


def test_forward_matches_composed_matmuls(rng):
    w1, w2 = rng.normal(size=(3, 2)), rng.normal(size=(1, 3))
    net = make_network([2, 3, 1], [IDENTITY, IDENTITY], [w1, w2], [np.zeros(3), np.zeros(1)])
    x = rng.normal(size=(4, 2))
    assert_allclose(forward(net, x).output, x @ w1.T @ w2.T)


def test_predict_is_invariant_to_positive_output_scaling(rng):
    net = init_network(NetworkConfig.classifier(3, [4], 3, seed=6))
    x = rng.normal(size=(20, 3))
    labels = predict(net, x)
    scaled = net.copy()
    scaled.weights[-1] *= 3.0
    scaled.biases[-1] *= 3.0
    assert_array_equal(predict(scaled, x), labels)
