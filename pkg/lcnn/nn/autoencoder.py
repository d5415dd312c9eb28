from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from lcnn.config import DEFAULT_SEED, KL_RHO, SAE_HIDDEN, SPARSITY_EPS
from lcnn.errors import ConfigError, DataError
from lcnn.nn.linalg import ActivationKind, Matrix
from lcnn.nn.network import Network, NetworkConfig, forward, init_network, predict
from lcnn.nn.objective import LcnnMode, LossKind, ObjectiveBreakdown, ObjectiveSpec, total_objective
from lcnn.nn.training import TrainingData, TrainReport, TrainSchedule, sgd_train

AUTOENCODER_KIND = "autoencoder"


@dataclass
class Autoencoder:
    """Single hidden layer, logistic encoder and decoder: n -> l -> n."""

    network: Network

    def __post_init__(self) -> None:
        config = self.network.config
        if config.n_layers != 2:
            raise ConfigError("An autoencoder has exactly one hidden layer")
        if config.input_width != config.output_width:
            raise ConfigError(
                f"Decoder width {config.output_width} differs from input width {config.input_width}"
            )
        if any(kind != ActivationKind.LOGISTIC for kind in config.activations):
            raise ConfigError("Encoder and decoder must both be logistic")

    @classmethod
    def create(cls, n_inputs: int, hidden: int = SAE_HIDDEN, seed: int = DEFAULT_SEED) -> "Autoencoder":
        config = NetworkConfig(
            layer_widths=(n_inputs, hidden, n_inputs),
            activations=(ActivationKind.LOGISTIC, ActivationKind.LOGISTIC),
            seed=seed,
        )
        return cls(init_network(config))

    @property
    def n_inputs(self) -> int:
        return self.network.config.input_width

    @property
    def hidden_width(self) -> int:
        return self.network.config.layer_widths[1]

    @property
    def encoder_weights(self) -> Matrix:
        return self.network.weights[0]

    @property
    def encoder_biases(self) -> np.ndarray:
        return self.network.biases[0]

    @property
    def decoder_weights(self) -> Matrix:
        return self.network.weights[1]

    @property
    def decoder_biases(self) -> np.ndarray:
        return self.network.biases[1]

    def weight_blocks(self) -> list[Matrix]:
        return [self.encoder_weights, self.decoder_weights]

    def save(self, path: str | Path) -> Path:
        return self.network.save(path, kind=AUTOENCODER_KIND)

    @classmethod
    def load(cls, path: str | Path) -> "Autoencoder":
        return cls(Network.load(path, kind=AUTOENCODER_KIND))


def _check_unit_interval(batch) -> Matrix:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DataError("Autoencoder inputs must be scaled to [0, 1]")
    return x


def sae_forward(ae: Autoencoder, batch) -> tuple[Matrix, Matrix]:
    """Hidden activations u and reconstructions x_hat."""
    trace = forward(ae.network, _check_unit_interval(batch))
    return trace.activations[0], trace.output


def sae_spec(c: float, d: float, rho: float = KL_RHO, weight_decay: float = 0.0) -> ObjectiveSpec:
    # the LCNN term acts on the decoder pre-activations, i.e. the output layer
    return ObjectiveSpec(
        loss=LossKind.RECONSTRUCTION,
        kl_c=c,
        kl_rho=rho,
        lcnn_mode=LcnnMode.LAST_LAYER if d > 0 else LcnnMode.OFF,
        lcnn_d=d,
        weight_decay=weight_decay,
    )


def sae_objective(
    ae: Autoencoder,
    batch,
    c: float,
    d: float,
    rho: float = KL_RHO,
    weight_decay: float = 0.0,
) -> ObjectiveBreakdown:
    x = _check_unit_interval(batch)
    spec = sae_spec(c, d, rho, weight_decay)
    return total_objective(spec, ae.network, forward(ae.network, x))


def sae_train(
    ae: Autoencoder,
    features: Matrix,
    c: float,
    d: float,
    schedule: TrainSchedule,
    rho: float = KL_RHO,
    weight_decay: float = 0.0,
    progress: bool | None = None,
) -> TrainReport:
    """Train on reconstruction + KL sparsity + decoder LCNN term; `Autoencoder(report.network)` is the result."""
    x = _check_unit_interval(features)
    data = TrainingData(features=x, targets=x)
    return sgd_train(
        ae.network, data, sae_spec(c, d, rho, weight_decay), schedule, progress=progress
    )


def linear_probe(
    ae: Autoencoder,
    train_features: Matrix,
    train_labels: np.ndarray,
    test_features: Matrix,
    test_labels: np.ndarray,
    schedule: TrainSchedule,
    seed: int = DEFAULT_SEED,
) -> float:
    """Frozen encoder, softmax layer trained on the hidden code; returns test accuracy."""
    train_code, _ = sae_forward(ae, train_features)
    test_code, _ = sae_forward(ae, test_features)
    n_classes = int(max(np.max(train_labels), np.max(test_labels))) + 1
    config = NetworkConfig(
        layer_widths=(ae.hidden_width, n_classes),
        activations=(ActivationKind.SOFTMAX,),
        seed=seed,
    )
    data = TrainingData(features=train_code, targets=train_labels, labels=train_labels)
    report = sgd_train(
        init_network(config),
        data,
        ObjectiveSpec(loss=LossKind.SOFTMAX_CROSS_ENTROPY),
        schedule,
        progress=False,
    )
    return float(np.mean(predict(report.network, test_code) == test_labels))


def _flatten(weights) -> np.ndarray:
    if isinstance(weights, np.ndarray):
        return weights.ravel()
    return np.concatenate([np.asarray(w, dtype=np.float64).ravel() for w in weights])


@dataclass
class WeightHistogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"bin_low": self.edges[:-1], "bin_high": self.edges[1:], "count": self.counts}
        )

    def to_csv(self, path: str | Path) -> Path:
        output_path = Path(path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(output_path, index=False)
        return output_path


def weight_histogram(weights, bin_count: int = 50, limit: float | None = None) -> WeightHistogram:
    """Histogram over [-limit, limit]; values beyond the range land in the edge bins."""
    if bin_count < 1:
        raise ConfigError(f"bin_count must be >= 1, got {bin_count}")
    values = _flatten(weights)
    if limit is None:
        limit = float(np.max(np.abs(values))) if values.size else 0.0
    if limit <= 0:
        limit = 1.0
    counts, edges = np.histogram(np.clip(values, -limit, limit), bins=bin_count, range=(-limit, limit))
    return WeightHistogram(edges=edges, counts=counts)


def sparsity_fraction(weights, eps: float = SPARSITY_EPS) -> float:
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    values = _flatten(weights)
    if values.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(values) < eps) / values.size)
