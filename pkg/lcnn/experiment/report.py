from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from lcnn.analysis.statistics import friedman_test, wilcoxon_signed_rank
from lcnn.config import WILCOXON_MIN_N
from lcnn.errors import DataError, UndefinedTestError
from lcnn.experiment.protocol import CvResult
from lcnn.logger import logger
from lcnn.utils.utils import Utils


@dataclass
class TableCell:
    mean: float
    std: float
    mean_seconds: float
    scores: list[float]
    n_failed: int = 0
    std_seconds: float = 0.0

    @classmethod
    def from_cv(cls, result: CvResult) -> "TableCell":
        return cls(
            result.mean, result.std, result.mean_seconds, list(result.scores), result.n_failed, result.std_seconds
        )

    @property
    def text(self) -> str:
        """Percent accuracy as "mean ± std"."""
        if not np.isfinite(self.mean):
            return "n/a"
        return f"{100 * self.mean:.2f} ± {100 * self.std:.2f}"

    @property
    def time_text(self) -> str:
        """Training seconds per fold as "mean ± std"."""
        return f"{self.mean_seconds:.3f} ± {self.std_seconds:.3f}"


@dataclass
class ComparisonTable:
    datasets: list[str]
    methods: list[str]
    cells: dict[str, dict[str, TableCell]] = field(default_factory=dict)

    def set(self, dataset: str, method: str, cell: TableCell) -> None:
        self.cells.setdefault(dataset, {})[method] = cell

    def get(self, dataset: str, method: str) -> TableCell | None:
        return self.cells.get(dataset, {}).get(method)

    def score_matrix(self) -> np.ndarray:
        """datasets x methods mean accuracies; NaN marks a hole."""
        matrix = np.full((len(self.datasets), len(self.methods)), np.nan)
        for i, dataset in enumerate(self.datasets):
            for j, method in enumerate(self.methods):
                cell = self.get(dataset, method)
                if cell is not None:
                    matrix[i, j] = cell.mean
        return matrix

    @property
    def is_complete(self) -> bool:
        return bool(np.all(np.isfinite(self.score_matrix())))

    def to_frame(self, include_timing: bool = False) -> pd.DataFrame:
        rows = []
        for dataset in self.datasets:
            for method in self.methods:
                cell = self.get(dataset, method)
                if cell is None:
                    continue
                row = {
                    "dataset": dataset,
                    "method": method,
                    "mean": cell.mean,
                    "std": cell.std,
                    "accuracy": cell.text,
                    "n_failed": cell.n_failed,
                }
                if include_timing:
                    row["mean_seconds"] = cell.mean_seconds
                    row["std_seconds"] = cell.std_seconds
                rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self, include_timing: bool = False) -> dict:
        return {
            "datasets": self.datasets,
            "methods": self.methods,
            "rows": Utils.to_builtin(self.to_frame(include_timing).to_dict(orient="records")),
        }

    def timing(self) -> dict:
        return {
            dataset: {
                method: {"mean_seconds": cell.mean_seconds, "std_seconds": cell.std_seconds, "text": cell.time_text}
                for method, cell in cells.items()
            }
            for dataset, cells in self.cells.items()
        }

    def write(self, output_dir: str | Path) -> list[Path]:
        output_dir = Path(output_dir)
        csv_path = output_dir / "comparison.csv"
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(csv_path, index=False)
        return [Utils.dump_json(self.to_dict(), output_dir / "comparison.json"), csv_path]


def _skipped(reason: str) -> dict:
    logger.warning(f"Statistical test skipped: {reason}")
    return {"skipped": reason}


def _wilcoxon(a, b, label: str) -> dict:
    try:
        return wilcoxon_signed_rank(a, b).to_dict()
    except UndefinedTestError as e:
        return _skipped(f"{label}: {e}")


def compare_methods(table: ComparisonTable) -> dict:
    """Friedman over the whole table, Wilcoxon of the first method against each other one.

    Wilcoxon runs across dataset means and, per dataset, over the paired fold scores
    (every method sees the same splits).
    """
    reference, others = table.methods[0], table.methods[1:]
    statistics: dict = {"reference_method": reference}

    if len(table.datasets) < 2 or len(table.methods) < 2:
        statistics["friedman"] = _skipped("Friedman needs at least 2 datasets and 2 methods")
    else:
        try:
            statistics["friedman"] = friedman_test(table.score_matrix()).to_dict()
        except DataError as e:
            statistics["friedman"] = _skipped(str(e))

    matrix = table.score_matrix()
    across = {}
    for j, method in enumerate(others, start=1):
        if len(table.datasets) < WILCOXON_MIN_N:
            across[method] = {
                "skipped": f"{len(table.datasets)} datasets; at least {WILCOXON_MIN_N} required"
            }
            continue
        across[method] = _wilcoxon(matrix[:, 0], matrix[:, j], f"{reference} vs {method}")
    if others and len(table.datasets) < WILCOXON_MIN_N:
        logger.warning(f"Wilcoxon across datasets skipped: n={len(table.datasets)} < {WILCOXON_MIN_N}")

    per_dataset = {}
    for dataset in table.datasets:
        reference_cell = table.get(dataset, reference)
        per_dataset[dataset] = {}
        for method in others:
            cell = table.get(dataset, method)
            label = f"{dataset}: {reference} vs {method}"
            if reference_cell is None or cell is None or len(reference_cell.scores) != len(cell.scores):
                per_dataset[dataset][method] = _skipped(f"{label}: unpaired fold scores")
                continue
            per_dataset[dataset][method] = _wilcoxon(reference_cell.scores, cell.scores, label)

    statistics["wilcoxon"] = {"across_datasets": across, "per_dataset": per_dataset}
    return statistics
