from dataclasses import asdict, dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, format_spec: str) -> str:
            return str(self.value).__format__(format_spec)

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import log_softmax

from lcnn.config import KL_CLAMP, KL_RHO, TARGET_MAGNITUDE
from lcnn.errors import DataError, EmptyBatchError, ShapeError, SpecError
from lcnn.logger import logger
from lcnn.nn.linalg import ActivationKind, Matrix
from lcnn.nn.network import ForwardTrace, Network


class LossKind(StrEnum):
    SQUARED_ERROR = "squared_error"
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"
    RECONSTRUCTION = "reconstruction"


class LcnnMode(StrEnum):
    OFF = "off"
    LAST_LAYER = "last_layer"
    ALL_LAYERS = "all_layers"


_LOSS_NOTATION = {
    "SE": LossKind.SQUARED_ERROR,
    "S": LossKind.SOFTMAX_CROSS_ENTROPY,
    "RE": LossKind.RECONSTRUCTION,
}
_NOTATION_KEYS = {*_LOSS_NOTATION, "W", "LC-L", "LC-A", "D", "BN", "KL", "rho", "t"}


def _coefficient(value, key: str) -> tuple[bool, float]:
    """Notation values are booleans (term on, coefficient chosen later) or scalars."""
    if value is None or value is False:
        return False, 0.0
    if value is True:
        return True, 0.0
    try:
        coefficient = float(value)
    except (TypeError, ValueError):
        raise SpecError(f"{key} must be a boolean or a number, got {value!r}")
    if coefficient < 0:
        raise SpecError(f"{key} must be nonnegative, got {coefficient}")
    return coefficient > 0, coefficient


class ObjectiveSpec(BaseModel):
    """Which terms of the error functional are active, and their coefficients.

    Coefficients follow the all-layer functional: weight_decay multiplies
    1/2 sum ||w||^2 and lcnn_d multiplies 1/2 sum of squared pre-activations.
    """

    model_config = ConfigDict(frozen=True)

    loss: LossKind = LossKind.SQUARED_ERROR
    weight_decay: float = Field(default=0.0, ge=0.0)
    lcnn_mode: LcnnMode = LcnnMode.OFF
    lcnn_d: float = Field(default=0.0, ge=0.0)
    kl_c: float = Field(default=0.0, ge=0.0)
    kl_rho: float = Field(default=KL_RHO, gt=0.0, lt=1.0)
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    target_magnitude: float = Field(default=TARGET_MAGNITUDE, gt=0.0, lt=1.0)

    @property
    def lcnn_active(self) -> bool:
        return self.lcnn_mode != LcnnMode.OFF and self.lcnn_d > 0.0

    @property
    def method_name(self) -> str:
        loss_name = {v: k for k, v in _LOSS_NOTATION.items()}[self.loss]
        parts = [loss_name]
        if self.weight_decay > 0:
            parts.append("W")
        if self.lcnn_mode == LcnnMode.LAST_LAYER:
            parts.append("LC-L")
        elif self.lcnn_mode == LcnnMode.ALL_LAYERS:
            parts.append("LC-A")
        if self.dropout_rate > 0:
            parts.append("D")
        if self.kl_c > 0:
            parts.append("KL")
        return " + ".join(parts)

    def to_notation(self) -> dict:
        return {
            "SE": self.loss == LossKind.SQUARED_ERROR,
            "S": self.loss == LossKind.SOFTMAX_CROSS_ENTROPY,
            "RE": self.loss == LossKind.RECONSTRUCTION,
            "W": self.weight_decay,
            "LC-L": self.lcnn_d if self.lcnn_mode == LcnnMode.LAST_LAYER else 0.0,
            "LC-A": self.lcnn_d if self.lcnn_mode == LcnnMode.ALL_LAYERS else 0.0,
            "D": self.dropout_rate,
            "BN": False,
            "KL": self.kl_c,
            "rho": self.kl_rho,
            "t": self.target_magnitude,
        }

    @classmethod
    def from_notation(cls, block: dict) -> "ObjectiveSpec":
        unknown = set(block) - _NOTATION_KEYS
        if unknown:
            raise SpecError(f"Unknown objective keys: {sorted(unknown)}")
        if block.get("BN"):
            raise SpecError("Batch normalization (BN) is not supported")

        losses = [kind for key, kind in _LOSS_NOTATION.items() if block.get(key)]
        if len(losses) != 1:
            raise SpecError("Exactly one of S, SE, RE must be set")

        _, weight_decay = _coefficient(block.get("W"), "W")
        last_on, last_d = _coefficient(block.get("LC-L"), "LC-L")
        all_on, all_d = _coefficient(block.get("LC-A"), "LC-A")
        if last_on and all_on:
            raise SpecError("LC-L and LC-A are mutually exclusive")
        mode = LcnnMode.OFF
        if last_on:
            mode = LcnnMode.LAST_LAYER
        elif all_on:
            mode = LcnnMode.ALL_LAYERS
        _, dropout = _coefficient(block.get("D"), "D")
        _, kl_c = _coefficient(block.get("KL"), "KL")

        return cls(
            loss=losses[0],
            weight_decay=weight_decay,
            lcnn_mode=mode,
            lcnn_d=last_d + all_d,
            kl_c=kl_c,
            kl_rho=block.get("rho", KL_RHO),
            dropout_rate=dropout,
            target_magnitude=block.get("t", TARGET_MAGNITUDE),
        )


@dataclass
class ObjectiveBreakdown:
    empirical: float
    weight_decay: float = 0.0
    lcnn: float = 0.0
    kl: float = 0.0
    clamp_events: int = 0

    @property
    def total(self) -> float:
        return self.empirical + self.weight_decay + self.lcnn + self.kl

    def as_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


def _check_batch_size(m: int) -> None:
    if m == 0:
        raise EmptyBatchError("Objective evaluated on an empty batch")


def empirical_error_squared(outputs: Matrix, targets: Matrix) -> float:
    """(1/2M) sum_i ||y_i - f(net_i)||^2."""
    outputs = np.asarray(outputs, dtype=np.float64)
    m = outputs.shape[0]
    _check_batch_size(m)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size % m == 0:
        targets = targets.reshape(m, -1)
    if outputs.shape != targets.shape:
        raise ShapeError(f"Outputs {outputs.shape} and targets {targets.shape} differ")
    return float(np.sum((targets - outputs) ** 2) / (2.0 * m))


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise DataError("Labels must be a 1-D vector of class indices")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise DataError(f"Labels outside [0, {n_classes - 1}]")
    return labels


def empirical_error_softmax(logits: Matrix, labels: np.ndarray) -> float:
    """(1/M) sum_i -log softmax(net_i)[label_i]."""
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.shape[0]
    _check_batch_size(m)
    labels = _check_labels(labels, logits.shape[1])
    if labels.shape[0] != m:
        raise ShapeError(f"{labels.shape[0]} labels for {m} samples")
    log_probs = log_softmax(logits, axis=1)
    return float(-np.mean(log_probs[np.arange(m), labels]))


def reconstruction_error(inputs: Matrix, reconstructions: Matrix) -> float:
    """1/2 sum_i ||x_i - x_hat_i||^2 (not averaged over samples)."""
    if inputs.shape != reconstructions.shape:
        raise ShapeError(f"Inputs {inputs.shape} and reconstructions {reconstructions.shape} differ")
    _check_batch_size(inputs.shape[0])
    return float(0.5 * np.sum((inputs - reconstructions) ** 2))


def lcnn_penalty_last(trace: ForwardTrace) -> float:
    """sum_i sum_j (net_j^i)^2 over the output layer."""
    return float(np.sum(trace.net**2))


def lcnn_penalty_all(trace: ForwardTrace) -> float:
    """Squared pre-activations of every hidden layer plus the output layer."""
    return float(sum(np.sum(a**2) for a in trace.pre_activations))


def l2_penalty(net: Network) -> float:
    """1/2 sum of squared weights over all layers; biases excluded."""
    return float(0.5 * sum(np.sum(w**2) for w in net.weights))


def clamp_activations(u: Matrix) -> tuple[Matrix, int]:
    clamped = np.clip(u, KL_CLAMP, 1.0 - KL_CLAMP)
    events = int(np.count_nonzero(clamped != u))
    if events:
        logger.debug(f"KL sparsity: clamped {events} activations at the (0, 1) boundary")
    return clamped, events


def kl_sparsity_penalty(u: Matrix, rho: float = KL_RHO) -> float:
    """sum_i sum_j KL(rho || u_j^i), per sample and per neuron."""
    if not 0.0 < rho < 1.0:
        raise SpecError(f"rho must lie in (0, 1), got {rho}")
    u, _ = clamp_activations(np.asarray(u, dtype=np.float64))
    return float(
        np.sum(rho * np.log(rho / u) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - u)))
    )


def check_spec(spec: ObjectiveSpec, net: Network) -> None:
    """Reject objective/architecture combinations the error functional does not define."""
    if spec.kl_c > 0 and spec.loss != LossKind.RECONSTRUCTION:
        raise SpecError("KL sparsity is only defined for autoencoder (reconstruction) training")
    if spec.kl_c > 0 and net.n_layers < 2:
        raise SpecError("KL sparsity needs a hidden layer")
    output_kind = net.config.activations[-1]
    if spec.loss != LossKind.SOFTMAX_CROSS_ENTROPY and output_kind == ActivationKind.SOFTMAX:
        raise SpecError("softmax outputs are only trained with the cross-entropy loss")


def total_objective(
    spec: ObjectiveSpec,
    net: Network,
    trace: ForwardTrace,
    targets=None,
    scale: float = 1.0,
) -> ObjectiveBreakdown:
    """E_emp + C_w * l2 + (D/2) * LCNN term (+ C * KL for autoencoders).

    Sums over samples are multiplied by `scale` (full M / batch size) so that a
    minibatch estimates the full-dataset functional.
    """
    check_spec(spec, net)

    match spec.loss:
        case LossKind.SQUARED_ERROR:
            empirical = empirical_error_squared(trace.output, targets)
        case LossKind.SOFTMAX_CROSS_ENTROPY:
            empirical = empirical_error_softmax(trace.net, targets)
        case LossKind.RECONSTRUCTION:
            reference = trace.inputs if targets is None else np.asarray(targets, dtype=np.float64)
            empirical = scale * reconstruction_error(reference, trace.output)

    breakdown = ObjectiveBreakdown(empirical=empirical)
    if spec.weight_decay > 0:
        breakdown.weight_decay = spec.weight_decay * l2_penalty(net)
    if spec.lcnn_active:
        penalty = (
            lcnn_penalty_last(trace)
            if spec.lcnn_mode == LcnnMode.LAST_LAYER
            else lcnn_penalty_all(trace)
        )
        breakdown.lcnn = scale * 0.5 * spec.lcnn_d * penalty
    if spec.kl_c > 0:
        hidden, breakdown.clamp_events = clamp_activations(trace.activations[0])
        breakdown.kl = scale * spec.kl_c * kl_sparsity_penalty(hidden, spec.kl_rho)
    return breakdown
