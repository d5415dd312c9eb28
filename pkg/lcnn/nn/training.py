import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import softmax
from tqdm import tqdm

from lcnn import config
from lcnn.config import GRADCHECK_STEP, GRADCHECK_SUBSET, KL_CLAMP, RELU_KINK
from lcnn.errors import ConfigError, DivergenceError, ShapeError, SpecError
from lcnn.logger import logger
from lcnn.nn.linalg import ActivationKind, Matrix, activate_derivative
from lcnn.nn.network import ForwardTrace, ModelMode, Network, forward, propagate
from lcnn.nn.objective import (
    LcnnMode,
    LossKind,
    ObjectiveBreakdown,
    ObjectiveSpec,
    check_spec,
    total_objective,
)
from lcnn.utils.utils import Utils


class TrainSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.05, gt=0.0)
    lr_decay: float = Field(default=1.0, gt=0.0, le=1.0)
    shuffle_seed: int = 0


@dataclass
class TrainingData:
    """Features plus the loss targets; `labels` (class indices) enable accuracy telemetry."""

    features: Matrix
    targets: np.ndarray
    labels: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass
class Gradients:
    weights: list[Matrix]
    biases: list[np.ndarray]

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            weights=[factor * w for w in self.weights],
            biases=[factor * b for b in self.biases],
        )


@dataclass
class EpochRecord:
    epoch: int
    objective: dict
    learning_rate: float
    mean_abs_gradient: list[float]
    train_accuracy: float | None = None
    validation_accuracy: float | None = None
    validation_error: float | None = None
    seconds: float = 0.0


@dataclass
class TrainReport:
    network: Network
    method: str = ""
    epochs: list[EpochRecord] = field(default_factory=list)
    diverged: bool = False

    @property
    def total_seconds(self) -> float:
        return float(sum(record.seconds for record in self.epochs))

    @property
    def final_objective(self) -> dict | None:
        return self.epochs[-1].objective if self.epochs else None

    def epoch_averaged_gradient(self, layers: list[int] | None = None) -> float:
        """Mean over epochs (and the given layers) of the per-layer mean |gradient|."""
        if not self.epochs:
            return 0.0
        values = np.array([record.mean_abs_gradient for record in self.epochs])
        if layers is not None:
            values = values[:, layers]
        return float(values.mean())

    def to_dict(self, include_timing: bool = True) -> dict:
        records = []
        for record in self.epochs:
            row = Utils.to_builtin(record)
            if not include_timing:
                row.pop("seconds")
            records.append(row)
        return {
            "method": self.method,
            "diverged": self.diverged,
            "epochs": records,
            "network": self.network.to_dict(),
        }

    def to_json(self, path: str | Path, include_timing: bool = True) -> Path:
        return Utils.dump_json(self.to_dict(include_timing=include_timing), path)

    def to_frame(self, include_timing: bool = True) -> pd.DataFrame:
        rows = []
        for record in self.epochs:
            row = {
                "epoch": record.epoch,
                "learning_rate": record.learning_rate,
                "train_accuracy": record.train_accuracy,
                "validation_accuracy": record.validation_accuracy,
                "validation_error": record.validation_error,
            }
            row.update({f"objective_{k}": v for k, v in record.objective.items()})
            row.update(
                {f"grad_layer_{h}": g for h, g in enumerate(record.mean_abs_gradient)}
            )
            if include_timing:
                row["seconds"] = record.seconds
            rows.append(row)
        return pd.DataFrame(rows)

    def to_csv(self, path: str | Path, include_timing: bool = True) -> Path:
        output_path = Path(path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame(include_timing=include_timing).to_csv(output_path, index=False)
        return output_path


def _output_delta(
    spec: ObjectiveSpec, trace: ForwardTrace, targets, scale: float
) -> Matrix:
    """dE_emp/d(net) for the output layer."""
    m = trace.batch_size
    output_kind = trace.network.config.activations[-1]
    match spec.loss:
        case LossKind.SQUARED_ERROR:
            y = np.asarray(targets, dtype=np.float64).reshape(trace.output.shape)
            return (trace.output - y) / m * activate_derivative(output_kind, trace.net)
        case LossKind.SOFTMAX_CROSS_ENTROPY:
            probs = softmax(trace.net, axis=1)
            probs[np.arange(m), np.asarray(targets)] -= 1.0
            return probs / m
        case LossKind.RECONSTRUCTION:
            reference = trace.inputs if targets is None else np.asarray(targets, dtype=np.float64)
            return scale * (trace.output - reference) * activate_derivative(output_kind, trace.net)


def _kl_gradient(u: Matrix, rho: float) -> Matrix:
    inside = (u > KL_CLAMP) & (u < 1.0 - KL_CLAMP)
    u = np.clip(u, KL_CLAMP, 1.0 - KL_CLAMP)
    return np.where(inside, -rho / u + (1.0 - rho) / (1.0 - u), 0.0)


def backward(
    net: Network,
    trace: ForwardTrace,
    spec: ObjectiveSpec,
    targets=None,
    scale: float = 1.0,
) -> Gradients:
    """Exact gradient of total_objective with respect to every weight and bias."""
    check_spec(spec, net)
    if trace.n_layers != net.n_layers or trace.inputs.shape[1] != net.config.input_width:
        raise ShapeError("Trace was not produced by this network")

    kinds = net.config.activations
    lcnn_scale = scale * spec.lcnn_d if spec.lcnn_active else 0.0
    n_layers = net.n_layers

    delta = _output_delta(spec, trace, targets, scale) + lcnn_scale * trace.net
    grad_w: list[Matrix] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers

    for h in reversed(range(n_layers)):
        grad_w[h] = delta.T @ trace.layer_input(h) + spec.weight_decay * net.weights[h]
        grad_b[h] = delta.sum(axis=0)
        if h == 0:
            break

        upstream = delta @ net.weights[h]
        if spec.kl_c > 0 and h == 1:
            upstream = upstream + scale * spec.kl_c * _kl_gradient(
                trace.activations[0], spec.kl_rho
            )
        mask = trace.masks[h - 1] if trace.masks else None
        if mask is not None:
            upstream = upstream * mask
        delta = upstream * activate_derivative(kinds[h - 1], trace.pre_activations[h - 1])
        if spec.lcnn_mode == LcnnMode.ALL_LAYERS:
            # D * a per hidden pre-activation
            delta = delta + lcnn_scale * trace.pre_activations[h - 1]

    return Gradients(weights=grad_w, biases=grad_b)


def mean_abs_gradient(gradients: Gradients, layer: int) -> float:
    if not 0 <= layer < len(gradients.weights):
        raise ConfigError(f"Layer {layer} out of range")
    return float(np.mean(np.abs(gradients.weights[layer])))


def apply_dropout(
    trace: ForwardTrace,
    rate: float,
    rng: np.random.Generator,
    mode: ModelMode = ModelMode.TRAINING,
    layer: int | None = None,
) -> ForwardTrace:
    """Inverted dropout on one hidden layer (default: the penultimate one).

    Layers downstream of the masked activations are recomputed.
    """
    if not 0.0 <= rate < 1.0:
        raise SpecError(f"Dropout rate must lie in [0, 1), got {rate}")
    if mode == ModelMode.EVALUATION or rate == 0.0:
        return trace
    if layer is None:
        layer = trace.n_layers - 2
    if layer < 0:
        logger.debug("Dropout skipped: network has no hidden layer")
        return trace

    keep = rng.random(trace.activations[layer].shape) >= rate
    mask = keep / (1.0 - rate)
    masked = trace.activations[layer] * mask
    pre, act = propagate(trace.network, masked, start=layer + 1)
    masks = list(trace.masks) if trace.masks else [None] * trace.n_layers
    masks[layer] = mask
    return ForwardTrace(
        network=trace.network,
        inputs=trace.inputs,
        pre_activations=trace.pre_activations[: layer + 1] + pre,
        activations=trace.activations[:layer] + [masked] + act,
        masks=masks,
    )


def _near_kink(
    kinds: tuple[ActivationKind, ...],
    base: ForwardTrace,
    perturbed: list[ForwardTrace],
    layer: int,
    neuron: int | None,
) -> bool:
    for g in range(layer, base.n_layers):
        if kinds[g] != ActivationKind.RELU:
            continue
        if g == layer and neuron is not None:
            if np.any(np.abs(base.pre_activations[g][:, neuron]) < RELU_KINK):
                return True
        pattern = base.pre_activations[g] > 0
        if any(np.any((t.pre_activations[g] > 0) != pattern) for t in perturbed):
            return True
    return False


def gradient_check(
    net: Network,
    spec: ObjectiveSpec,
    batch: Matrix,
    targets=None,
    step: float = GRADCHECK_STEP,
    max_parameters: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between backward and central finite differences.

    Dropout is ignored (the check needs a deterministic objective). With
    `max_parameters`, a seeded subset of at least GRADCHECK_SUBSET parameters is probed.
    """
    base = forward(net, batch)
    analytic = backward(net, base, spec, targets)
    probe = net.copy()
    kinds = net.config.activations

    parameters = [
        (is_weight, h, index)
        for h in range(net.n_layers)
        for is_weight, array in ((True, net.weights[h]), (False, net.biases[h]))
        for index in np.ndindex(array.shape)
    ]
    if max_parameters is not None and len(parameters) > max_parameters:
        size = min(len(parameters), max(max_parameters, GRADCHECK_SUBSET))
        chosen = Utils.rng(seed).choice(len(parameters), size=size, replace=False)
        parameters = [parameters[i] for i in sorted(chosen)]

    def evaluate() -> tuple[float, ForwardTrace]:
        trace = forward(probe, batch)
        return total_objective(spec, probe, trace, targets).total, trace

    worst = 0.0
    for is_weight, h, index in parameters:
        array = probe.weights[h] if is_weight else probe.biases[h]
        original = array[index]
        array[index] = original + step
        f_plus, trace_plus = evaluate()
        array[index] = original - step
        f_minus, trace_minus = evaluate()
        array[index] = original

        if _near_kink(kinds, base, [trace_plus, trace_minus], h, index[0]):
            continue
        numeric = (f_plus - f_minus) / (2.0 * step)
        exact = (analytic.weights[h] if is_weight else analytic.biases[h])[index]
        error = abs(exact - numeric) / max(1e-8, abs(exact) + abs(numeric))
        worst = max(worst, error)
    return worst


def _accuracy(trace: ForwardTrace, labels: np.ndarray | None) -> float | None:
    if labels is None:
        return None
    scores = trace.net
    if scores.shape[1] == 1:
        predicted = (scores[:, 0] >= 0.0).astype(np.int64)
    else:
        predicted = np.argmax(scores, axis=1)
    return float(np.mean(predicted == labels))


def _is_finite(net: Network) -> bool:
    return all(
        np.all(np.isfinite(w)) and np.all(np.isfinite(b))
        for w, b in zip(net.weights, net.biases)
    )


def evaluate_objective(
    net: Network, data: TrainingData, spec: ObjectiveSpec
) -> tuple[ObjectiveBreakdown, ForwardTrace]:
    trace = forward(net, data.features)
    return total_objective(spec, net, trace, data.targets), trace


def sgd_train(
    net: Network,
    train: TrainingData,
    spec: ObjectiveSpec,
    schedule: TrainSchedule,
    validation: TrainingData | None = None,
    progress: bool | None = None,
) -> TrainReport:
    """Seeded minibatch SGD, w <- w - lr * g, with per-epoch decay and telemetry.

    The input network is not modified; the report carries the trained copy.
    """
    check_spec(spec, net)
    m = train.size
    if schedule.batch_size > m:
        raise ConfigError(f"batch_size={schedule.batch_size} exceeds {m} training samples")

    model = net.copy()
    shuffle_rng = Utils.rng(schedule.shuffle_seed)
    dropout_rng = Utils.rng(Utils.derive_seed(schedule.shuffle_seed, 1))
    learning_rate = schedule.learning_rate
    report = TrainReport(network=model.copy(), method=spec.method_name)
    show = config.SHOW_PROGRESS if progress is None else progress

    for epoch in tqdm(range(schedule.epochs), disable=not show, desc=spec.method_name):
        start = time.perf_counter()
        order = shuffle_rng.permutation(m)
        gradient_sums = np.zeros(model.n_layers)
        n_batches = 0

        with np.errstate(over="ignore", invalid="ignore"):
            for begin in range(0, m, schedule.batch_size):
                indices = order[begin : begin + schedule.batch_size]
                trace = forward(model, train.features[indices])
                if spec.dropout_rate > 0:
                    trace = apply_dropout(trace, spec.dropout_rate, dropout_rng)
                gradients = backward(
                    model, trace, spec, train.targets[indices], scale=m / len(indices)
                )
                for h in range(model.n_layers):
                    gradient_sums[h] += mean_abs_gradient(gradients, h)
                    model.weights[h] -= learning_rate * gradients.weights[h]
                    model.biases[h] -= learning_rate * gradients.biases[h]
                n_batches += 1
                if not _is_finite(model):
                    break

            finite = _is_finite(model)
            if finite:
                breakdown, trace = evaluate_objective(model, train, spec)
                finite = np.isfinite(breakdown.total)

        if not finite:
            report.diverged = True
            message = f"Objective became non-finite at epoch {epoch}; keeping epoch {epoch - 1}"
            logger.error(message)
            raise DivergenceError(message, report)

        record = EpochRecord(
            epoch=epoch,
            objective=breakdown.as_dict(),
            learning_rate=learning_rate,
            mean_abs_gradient=(gradient_sums / n_batches).tolist(),
            train_accuracy=_accuracy(trace, train.labels),
        )
        if validation is not None and validation.labels is not None:
            validation_trace = forward(model, validation.features)
            record.validation_accuracy = _accuracy(validation_trace, validation.labels)
            record.validation_error = 1.0 - record.validation_accuracy
        record.seconds = time.perf_counter() - start

        report.epochs.append(record)
        report.network = model.copy()
        learning_rate *= schedule.lr_decay

    return report
