from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto
from pathlib import Path

import numpy as np

from lcnn.config import DEFAULT_SEED, FORMAT_VERSION
from lcnn.errors import ConfigError, DataError, ShapeError
from lcnn.nn.linalg import ActivationKind, Matrix, activate, matmul
from lcnn.utils.utils import Utils

NETWORK_FORMAT = "lcnn-network"


class ModelMode(Enum):
    TRAINING = auto()
    EVALUATION = auto()


@dataclass(frozen=True)
class NetworkConfig:
    """Layer widths [n0, l1, ..., output] and one activation per non-input layer."""

    layer_widths: tuple[int, ...]
    activations: tuple[ActivationKind, ...]
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.layer_widths)
        kinds = tuple(ActivationKind(k) for k in self.activations)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activations", kinds)

        if len(widths) < 2:
            raise ConfigError(f"Need an input and an output layer, got widths={widths}")
        if any(w < 1 for w in widths):
            raise ConfigError(f"Layer widths must be positive, got widths={widths}")
        if len(kinds) != len(widths) - 1:
            raise ConfigError(
                f"Expected {len(widths) - 1} activations, got {len(kinds)}"
            )
        if ActivationKind.SOFTMAX in kinds[:-1]:
            raise ConfigError("softmax is only legal on the output layer")

    @classmethod
    def classifier(
        cls,
        n_inputs: int,
        hidden_widths: list[int] | tuple[int, ...],
        n_outputs: int,
        hidden_activation: ActivationKind = ActivationKind.TANH,
        output_activation: ActivationKind = ActivationKind.TANH,
        seed: int = DEFAULT_SEED,
    ) -> "NetworkConfig":
        widths = (n_inputs, *hidden_widths, n_outputs)
        kinds = (*[hidden_activation] * len(hidden_widths), output_activation)
        return cls(layer_widths=widths, activations=kinds, seed=seed)

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def penultimate_width(self) -> int:
        return self.layer_widths[-2]

    @property
    def is_binary(self) -> bool:
        return self.output_width == 1


@dataclass
class Network:
    config: NetworkConfig
    weights: list[Matrix]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != self.n_layers or len(self.biases) != self.n_layers:
            raise ShapeError("One weight matrix and one bias vector per layer expected")
        widths = self.config.layer_widths
        for h, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[h + 1], widths[h]) or b.shape != (widths[h + 1],):
                raise ShapeError(
                    f"Layer {h}: weights {w.shape} / biases {b.shape} do not match "
                    f"widths {widths[h]} -> {widths[h + 1]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DataError(f"Layer {h} has non-finite parameters")

    @property
    def n_layers(self) -> int:
        return self.config.n_layers

    def copy(self) -> "Network":
        return Network(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_dict(self, kind: str = "classifier") -> dict:
        return {
            "format": NETWORK_FORMAT,
            "version": FORMAT_VERSION,
            "kind": kind,
            "layer_widths": list(self.config.layer_widths),
            "activations": [k.value for k in self.config.activations],
            "seed": self.config.seed,
            "weights": [w.ravel(order="C").tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict, kind: str | None = None) -> "Network":
        if data.get("format") != NETWORK_FORMAT:
            raise ConfigError(f"Not a network document: format={data.get('format')}")
        if data.get("version") != FORMAT_VERSION:
            raise ConfigError(f"Unsupported network version: {data.get('version')}")
        if kind is not None and data.get("kind") != kind:
            raise ConfigError(f"Expected a {kind} document, got {data.get('kind')}")

        config = NetworkConfig(
            layer_widths=tuple(data["layer_widths"]),
            activations=tuple(data["activations"]),
            seed=data.get("seed", DEFAULT_SEED),
        )
        widths = config.layer_widths
        weights = [
            np.asarray(flat, dtype=np.float64).reshape(widths[h + 1], widths[h])
            for h, flat in enumerate(data["weights"])
        ]
        biases = [np.asarray(b, dtype=np.float64) for b in data["biases"]]
        return cls(config=config, weights=weights, biases=biases)

    def save(self, path: str | Path, kind: str = "classifier") -> Path:
        return Utils.dump_json(self.to_dict(kind=kind), path)

    @classmethod
    def load(cls, path: str | Path, kind: str | None = None) -> "Network":
        return cls.from_dict(Utils.load_json(path), kind=kind)


@dataclass(frozen=True)
class ForwardTrace:
    """Every layer's pre-activations a_h and activations u_h for one batch.

    `masks[h]` is the (already rescaled) dropout mask applied to u_h, or None.
    """

    network: Network
    inputs: Matrix
    pre_activations: list[Matrix]
    activations: list[Matrix]
    masks: list[Matrix | None] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.pre_activations)

    @property
    def net(self) -> Matrix:
        """Output-layer pre-activations (one column per class score)."""
        return self.pre_activations[-1]

    @property
    def output(self) -> Matrix:
        return self.activations[-1]

    def layer_input(self, h: int) -> Matrix:
        return self.inputs if h == 0 else self.activations[h - 1]

    @property
    def penultimate(self) -> Matrix:
        return self.layer_input(self.n_layers - 1)


def init_network(config: NetworkConfig) -> Network:
    rng = Utils.rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(config.layer_widths[:-1], config.layer_widths[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(config=config, weights=weights, biases=biases)


def _check_batch(net: Network, batch) -> Matrix:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != net.config.input_width:
        raise ShapeError(
            f"Batch shape {x.shape} does not match input width {net.config.input_width}"
        )
    if not np.all(np.isfinite(x)):
        raise DataError("Batch contains non-finite values")
    return x


def propagate(net: Network, u: Matrix, start: int) -> tuple[list[Matrix], list[Matrix]]:
    """Run layers start..end from the given layer input."""
    pre, act = [], []
    for h in range(start, net.n_layers):
        a = matmul(u, net.weights[h].T) + net.biases[h]
        u = activate(net.config.activations[h], a)
        pre.append(a)
        act.append(u)
    return pre, act


def forward(net: Network, batch) -> ForwardTrace:
    x = _check_batch(net, batch)
    pre, act = propagate(net, x, start=0)
    return ForwardTrace(
        network=net,
        inputs=x,
        pre_activations=pre,
        activations=act,
        masks=[None] * net.n_layers,
    )


def predict(net: Network, batch) -> np.ndarray:
    """Class indices; binary nets map net >= 0 to index 1 (target +1), else index 0 (target -1)."""
    scores = forward(net, batch).net
    if net.config.is_binary:
        return (scores[:, 0] >= 0.0).astype(np.int64)
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(scores, axis=1).astype(np.int64)


def augmented_view(trace: ForwardTrace) -> tuple[Matrix, Matrix]:
    """Penultimate outputs with a constant 1 appended, and beta = [W_k | b_k] per output."""
    u = trace.penultimate
    augmented = np.hstack([u, np.ones((u.shape[0], 1))])
    net = trace.network
    beta = np.hstack([net.weights[-1], net.biases[-1][:, None]])
    return augmented, beta
