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
from scipy.special import expit, softmax

from lcnn.errors import DataError, ShapeError, UnsupportedOperationError

# Row-major float64 matrix; rows are samples wherever a batch is involved.
Matrix = np.ndarray


class ActivationKind(StrEnum):
    TANH = "tanh"
    LOGISTIC = "logistic"
    RELU = "relu"
    IDENTITY = "identity"
    SOFTMAX = "softmax"

    @property
    def is_elementwise(self) -> bool:
        return self != ActivationKind.SOFTMAX


def as_matrix(values, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-D float64 array, promoting vectors to a single row."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DataError(f"{name} contains non-finite entries")
    return matrix


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Inner dimensions differ: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def activate(kind: ActivationKind, x: Matrix) -> Matrix:
    match ActivationKind(kind):
        case ActivationKind.TANH:
            return np.tanh(x)
        case ActivationKind.LOGISTIC:
            return expit(x)
        case ActivationKind.RELU:
            return np.maximum(x, 0.0)
        case ActivationKind.IDENTITY:
            return np.array(x, dtype=np.float64, copy=True)
        case ActivationKind.SOFTMAX:
            # scipy subtracts the row maximum before exponentiating
            return softmax(x, axis=1)


def activate_derivative(kind: ActivationKind, x: Matrix) -> Matrix:
    """Element-wise f'(x) evaluated at the pre-activation x."""
    match ActivationKind(kind):
        case ActivationKind.TANH:
            return 1.0 - np.tanh(x) ** 2
        case ActivationKind.LOGISTIC:
            s = expit(x)
            return s * (1.0 - s)
        case ActivationKind.RELU:
            # subgradient 0 at the kink
            return (x > 0.0).astype(np.float64)
        case ActivationKind.IDENTITY:
            return np.ones_like(x, dtype=np.float64)
        case ActivationKind.SOFTMAX:
            raise UnsupportedOperationError(
                "softmax has no element-wise derivative; it is differentiated "
                "jointly with the cross-entropy loss"
            )
