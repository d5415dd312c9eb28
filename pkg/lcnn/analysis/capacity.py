import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import linprog
from scipy.special import logit
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import Perceptron

from lcnn.config import CONSERVATIVE_THETA, TARGET_MAGNITUDE
from lcnn.errors import (
    DataError,
    DataFormatError,
    DegenerateClassifierError,
    DomainError,
    UnsupportedOperationError,
)
from lcnn.logger import logger
from lcnn.nn.linalg import ActivationKind, Matrix, activate
from lcnn.nn.network import ForwardTrace, augmented_view
from lcnn.utils.utils import Utils


def dichotomy_count(m: int, n: int) -> int:
    """Number of homogeneous linear dichotomies of m points in general position in R^n."""
    if m < 1 or n < 1:
        raise DomainError(f"Need m >= 1 and n >= 1, got m={m}, n={n}")
    if m < n + 1:
        return 2**m
    return 2 * sum(math.comb(m - 1, i) for i in range(n))


def _is_linearly_realizable(points: Matrix, signs: np.ndarray) -> bool:
    # exists w with s_i * w.x_i >= 1 for all i
    a_ub = -(signs[:, None] * points)
    result = linprog(
        c=np.zeros(points.shape[1]),
        A_ub=a_ub,
        b_ub=-np.ones(points.shape[0]),
        bounds=[(None, None)] * points.shape[1],
        method="highs",
    )
    return result.status == 0


def count_linear_dichotomies(points: Matrix) -> int:
    """Brute-force count of labelings realizable by a hyperplane through the origin.

    A labeling and its negation are realizable together, so only labelings with
    a positive first point are tested.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise DataError("Expected a non-empty M x n point matrix")
    m = points.shape[0]
    count = 0
    for tail in itertools.product((1.0, -1.0), repeat=m - 1):
        signs = np.array((1.0, *tail))
        if _is_linearly_realizable(points, signs):
            count += 1
    return 2 * count


def geometric_margin(points: Matrix, beta: np.ndarray) -> float:
    """min_i |beta.u_i| / ||beta|| over augmented points."""
    beta = np.asarray(beta, dtype=np.float64).ravel()
    norm = np.linalg.norm(beta)
    if norm == 0.0:
        raise DegenerateClassifierError("beta is zero; the classifier has no hyperplane")
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        raise DataError("Margin of an empty point set is undefined")
    return float(np.min(np.abs(points @ beta)) / norm)


def enclosing_radius(points: Matrix) -> float:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.shape[0] == 0:
        raise DataError("Radius of an empty point set is undefined")
    return float(np.max(np.linalg.norm(points, axis=1)))


def theta_from_target(kind: ActivationKind, t: float) -> float:
    """theta = f^-1(t) for the output activation."""
    match ActivationKind(kind):
        case ActivationKind.TANH:
            if not -1.0 < t < 1.0:
                raise DomainError(f"tanh target must satisfy |t| < 1, got {t}")
            return float(np.arctanh(t))
        case ActivationKind.LOGISTIC:
            if not 0.0 < t < 1.0:
                raise DomainError(f"logistic target must lie in (0, 1), got {t}")
            return float(logit(t))
        case ActivationKind.IDENTITY:
            return float(t)
        case _:
            raise UnsupportedOperationError(f"{kind} has no usable inverse")


def _range_margin(values: np.ndarray, w: np.ndarray) -> float:
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise DegenerateClassifierError("Output weights are zero")
    return float((np.max(values) - np.min(values)) / norm)


def range_margin(trace: ForwardTrace, weights: np.ndarray | None = None, output_index: int = 0) -> float:
    """(V_max - V_min) / ||w|| for one output neuron over the batch."""
    if weights is None:
        weights = trace.network.weights[-1][output_index]
    return _range_margin(trace.output[:, output_index], np.asarray(weights, dtype=np.float64))


def separability_check(points: Matrix, labels: np.ndarray, max_iter: int | None = None) -> bool:
    """True iff a perceptron reaches zero training error within an iteration cap."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        return True
    if max_iter is None:
        max_iter = max(1000, 10 * points.shape[0])
    perceptron = Perceptron(tol=None, max_iter=max_iter, shuffle=False, random_state=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        perceptron.fit(points, labels)
    return bool(perceptron.score(points, labels) == 1.0)


@dataclass
class OutputBound:
    """Bound quantities for one output score (one-vs-rest for multiclass nets)."""

    output_index: int
    d: float
    d_min: float
    c_prime: float | None
    c_bound: float | None
    sum_sq_net: float
    gamma_bound: float
    fat_margin_bound: float
    range_margin: float | None
    theta_condition: bool
    non_separable: bool


@dataclass
class CapacityReport:
    m: int
    n: int
    r1: float
    theta: float
    theta_available: bool
    outputs: list[OutputBound] = field(default_factory=list)
    beta_fitted: bool = False

    @property
    def theta_degenerate(self) -> bool:
        """theta == 0 (e.g. logistic output with t = 0.5) leaves C' undefined."""
        return self.theta == 0.0

    @property
    def headline(self) -> OutputBound:
        return max(self.outputs, key=lambda o: o.gamma_bound)

    @property
    def gamma_bound(self) -> float:
        return self.headline.gamma_bound

    @property
    def fat_margin_bound(self) -> float:
        return max(o.fat_margin_bound for o in self.outputs)

    @property
    def sum_sq_net(self) -> float:
        return float(sum(o.sum_sq_net for o in self.outputs))

    @property
    def d(self) -> float:
        return self.headline.d

    @property
    def c_prime(self) -> float | None:
        return self.headline.c_prime

    @property
    def non_separable(self) -> bool:
        return any(o.non_separable for o in self.outputs)

    def to_dict(self) -> dict:
        data = Utils.to_builtin(self)
        data.update(
            {
                "gamma_bound": self.gamma_bound,
                "fat_margin_bound": self.fat_margin_bound,
                "sum_sq_net": self.sum_sq_net,
                "non_separable": self.non_separable,
                "theta_degenerate": self.theta_degenerate,
            }
        )
        return data

    def to_json(self, path: str | Path) -> Path:
        return Utils.dump_json(self.to_dict(), path)


def _theta(kind: ActivationKind, t: float) -> tuple[float, bool]:
    try:
        return theta_from_target(kind, t), True
    except UnsupportedOperationError:
        logger.debug(f"No inverse for {kind}; using theta={CONSERVATIVE_THETA}")
        return CONSERVATIVE_THETA, False


def capacity_report(
    augmented: Matrix,
    beta: Matrix,
    output_kind: ActivationKind,
    t: float = TARGET_MAGNITUDE,
    beta_fitted: bool = False,
) -> CapacityReport:
    """Margins, radius and the LCNN / fat-margin bounds for augmented points and beta rows."""
    augmented = np.asarray(augmented, dtype=np.float64)
    beta = np.atleast_2d(np.asarray(beta, dtype=np.float64))
    m, n = augmented.shape[0], augmented.shape[1] - 1
    r1 = enclosing_radius(augmented)
    theta, theta_available = _theta(output_kind, t)
    if theta == 0.0:
        logger.warning(f"theta=0 for {output_kind} at t={t}; C' undefined, gamma falls back to 1 + n")

    scores = augmented @ beta.T
    values = activate(output_kind, scores)
    report = CapacityReport(
        m=m, n=n, r1=r1, theta=theta, theta_available=theta_available, beta_fitted=beta_fitted
    )
    for k, row in enumerate(beta):
        net = scores[:, k]
        d = geometric_margin(augmented, row)
        sum_sq = float(np.sum(net**2))
        try:
            margin = _range_margin(values[:, k], row[:-1])
        except DegenerateClassifierError:
            margin = None
        if d == 0.0:
            # the fat-margin premise fails; only the width cap remains
            c_prime, gamma, fat = None, 1.0 + n, 1.0 + n
        elif theta == 0.0:
            c_prime, gamma = None, 1.0 + n
            fat = 1.0 + min(4.0 * r1**2 / d**2, n)
        else:
            c_prime = r1**2 / (m * d**2 * theta**2)
            gamma = 1.0 + min(4.0 * c_prime * sum_sq, n)
            fat = 1.0 + min(4.0 * r1**2 / d**2, n)
        report.outputs.append(
            OutputBound(
                output_index=k,
                d=d,
                d_min=d,
                c_prime=c_prime,
                c_bound=None if c_prime is None else 4.0 * c_prime,
                sum_sq_net=sum_sq,
                gamma_bound=gamma,
                fat_margin_bound=fat,
                range_margin=margin,
                theta_condition=bool(np.min(np.abs(net)) >= abs(theta)),
                non_separable=d == 0.0,
            )
        )
    return report


def vc_bound(trace: ForwardTrace, t: float = TARGET_MAGNITUDE) -> CapacityReport:
    augmented, beta = augmented_view(trace)
    return capacity_report(augmented, beta, trace.network.config.activations[-1], t)


def load_trace_csv(
    path: str | Path,
    beta: np.ndarray | None = None,
    output_kind: ActivationKind = ActivationKind.TANH,
    t: float = TARGET_MAGNITUDE,
) -> CapacityReport:
    """Capacity report for external penultimate activations (columns u_0..u_{n-1}, label).

    Without beta, a binary classifier is fitted by least squares to +-t targets.
    """
    frame = pd.read_csv(path)
    if "label" not in frame.columns:
        raise DataFormatError("Trace CSV has no label column", column="label")
    feature_columns = [c for c in frame.columns if c.startswith("u_")]
    if not feature_columns:
        raise DataFormatError("Trace CSV has no u_* columns")
    for column in feature_columns:
        bad = pd.to_numeric(frame[column], errors="coerce").isna()
        if bad.any():
            raise DataFormatError("Non-numeric activation", row=int(np.argmax(bad.to_numpy())), column=column)

    u = frame[feature_columns].to_numpy(dtype=np.float64)
    augmented = np.hstack([u, np.ones((u.shape[0], 1))])
    fitted = beta is None
    if fitted:
        classes = np.unique(frame["label"].to_numpy())
        if classes.size != 2:
            raise DataError(f"Fitting beta needs binary labels, got {classes.size} classes")
        targets = np.where(frame["label"].to_numpy() == classes[1], t, -t)
        beta, *_ = np.linalg.lstsq(augmented, targets, rcond=None)
    beta = np.atleast_2d(np.asarray(beta, dtype=np.float64))
    if beta.shape[1] != augmented.shape[1]:
        raise DataError(f"beta has {beta.shape[1]} entries, expected {augmented.shape[1]}")
    return capacity_report(augmented, beta, output_kind, t, beta_fitted=fitted)
