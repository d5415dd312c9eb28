from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm, rankdata

from lcnn.config import P_VALUE_FLOOR, SIGNIFICANCE_LEVEL, WILCOXON_EXACT_MAX_N, WILCOXON_MIN_N
from lcnn.errors import DataError, InsufficientSamplesError, ShapeError, UndefinedTestError
from lcnn.utils.utils import Utils


def format_p_value(p_value: float) -> str:
    if p_value < P_VALUE_FLOOR:
        return f"< {P_VALUE_FLOOR:g}"
    return f"{p_value:.4g}"


@dataclass
class WilcoxonResult:
    statistic: float
    p_value: float
    significant: bool
    n: int
    method: str

    def to_dict(self) -> dict:
        return {**Utils.to_builtin(self), "p_value_text": format_p_value(self.p_value)}


@dataclass
class FriedmanResult:
    chi_squared: float
    p_value: float
    n_datasets: int
    n_methods: int
    mean_ranks: list[float]

    def to_dict(self) -> dict:
        return {**Utils.to_builtin(self), "p_value_text": format_p_value(self.p_value)}


def _exact_wilcoxon_p(ranks: np.ndarray, statistic: float) -> float:
    """Two-sided p by enumerating every sign assignment of the ranks."""
    n = ranks.size
    signs = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    w_plus = signs @ ranks
    w_min = np.minimum(w_plus, ranks.sum() - w_plus)
    return float(np.count_nonzero(w_min <= statistic + 1e-9) / 2**n)


def _normal_wilcoxon_p(ranks: np.ndarray, statistic: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (statistic - mean) / np.sqrt(variance)
    return float(2.0 * norm.cdf(-abs(z)))


def wilcoxon_signed_rank(scores_a, scores_b, alpha: float = SIGNIFICANCE_LEVEL) -> WilcoxonResult:
    """Paired two-sided signed-rank test; W = min(W+, W-) after dropping zero differences."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"Paired score vectors differ: {a.shape} vs {b.shape}")

    differences = a - b
    differences = differences[differences != 0.0]
    if differences.size == 0:
        raise UndefinedTestError("All paired differences are zero")
    if differences.size < WILCOXON_MIN_N:
        raise InsufficientSamplesError(
            f"{differences.size} nonzero differences; at least {WILCOXON_MIN_N} required"
        )

    ranks = rankdata(np.abs(differences))
    w_plus = float(ranks[differences > 0].sum())
    w_minus = float(ranks[differences < 0].sum())
    statistic = min(w_plus, w_minus)

    if differences.size <= WILCOXON_EXACT_MAX_N:
        p_value, method = _exact_wilcoxon_p(ranks, statistic), "exact"
    else:
        p_value, method = _normal_wilcoxon_p(ranks, statistic), "normal"
    p_value = min(1.0, p_value)
    return WilcoxonResult(
        statistic=statistic,
        p_value=p_value,
        significant=p_value < alpha,
        n=int(differences.size),
        method=method,
    )


def friedman_test(scores) -> FriedmanResult:
    """Friedman chi-squared over a datasets x methods score matrix (higher score = rank 1)."""
    matrix = np.asarray(scores, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"Expected a datasets x methods matrix, got shape {matrix.shape}")
    n, k = matrix.shape
    if n < 2 or k < 2:
        raise DataError(f"Need at least 2 datasets and 2 methods, got {n} x {k}")
    if not np.all(np.isfinite(matrix)):
        raise DataError("Score matrix is incomplete")

    ranks = np.vstack([rankdata(-row) for row in matrix])
    mean_ranks = ranks.mean(axis=0)
    statistic = 12.0 * n / (k * (k + 1)) * (np.sum(mean_ranks**2) - k * (k + 1) ** 2 / 4.0)
    statistic = max(0.0, float(statistic))
    return FriedmanResult(
        chi_squared=statistic,
        p_value=float(chi2.sf(statistic, k - 1)),
        n_datasets=n,
        n_methods=k,
        mean_ranks=mean_ranks.tolist(),
    )
