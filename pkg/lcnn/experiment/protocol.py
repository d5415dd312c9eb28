import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from lcnn.config import CV_FOLDS, CV_REPEATS, DEFAULT_SEED
from lcnn.data.dataset import Dataset, kfold_split, scale_features
from lcnn.errors import ConfigError, DivergenceError
from lcnn.experiment.learner import LcnnLearner, Learner
from lcnn.experiment.manifest import ModelConfig
from lcnn.logger import logger
from lcnn.utils.utils import Utils

LearnerFactory = Callable[[int], Learner]


def _factory(config: ModelConfig | LearnerFactory) -> LearnerFactory:
    if isinstance(config, ModelConfig):
        return lambda seed: LcnnLearner(config.reseeded(seed))
    return config


@dataclass
class FoldResult:
    index: int
    repeat: int
    fold: int
    accuracy: float | None
    seconds: float
    failed: bool = False
    error: str | None = None


@dataclass
class CvResult:
    mean: float
    std: float
    scores: list[float]
    mean_seconds: float
    std_seconds: float = 0.0
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(f.failed for f in self.folds)

    @property
    def warning(self) -> bool:
        return self.n_failed > 0

    def to_dict(self, include_timing: bool = True) -> dict:
        folds = [Utils.to_builtin(f) for f in self.folds]
        data = {
            "mean": self.mean,
            "std": self.std,
            "scores": self.scores,
            "n_failed": self.n_failed,
            "warning": self.warning,
            "folds": folds,
        }
        if include_timing:
            data["mean_seconds"] = self.mean_seconds
            data["std_seconds"] = self.std_seconds
        else:
            for fold in folds:
                fold.pop("seconds")
        return Utils.to_builtin(data)


def _run_fold(
    factory: LearnerFactory,
    dataset: Dataset,
    train_idx: np.ndarray,
    validation_idx: np.ndarray,
    seed: int,
    index: int,
    folds: int,
) -> FoldResult:
    """Scale on the training rows only, fit, score on the held-out rows."""
    train = scale_features(dataset.subset(train_idx))
    validation = scale_features(dataset.subset(validation_idx), train.scaling)
    learner = factory(seed)
    repeat, fold = divmod(index, folds)
    start = time.perf_counter()
    try:
        learner.fit(train)
    except DivergenceError as e:
        logger.warning(f"{dataset.name}: fold {fold} of repeat {repeat} diverged ({e})")
        return FoldResult(index, repeat, fold, None, time.perf_counter() - start, True, str(e))
    seconds = time.perf_counter() - start
    return FoldResult(index, repeat, fold, learner.accuracy(validation), seconds)


def cross_validate(
    config: ModelConfig | LearnerFactory,
    dataset: Dataset,
    folds: int = CV_FOLDS,
    repeats: int = CV_REPEATS,
    seed: int = DEFAULT_SEED,
    n_jobs: int = 1,
) -> CvResult:
    """Repeated k-fold accuracy; diverged folds are reported and left out of the aggregate."""
    factory = _factory(config)
    splits = kfold_split(dataset, folds, repeats, seed)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_fold)(factory, dataset, train_idx, val_idx, Utils.derive_seed(seed, i), i, folds)
        for i, (train_idx, val_idx) in enumerate(splits)
    )
    return _aggregate(dataset, results)


def _aggregate(dataset: Dataset, results: list[FoldResult]) -> CvResult:
    scores = [r.accuracy for r in results if not r.failed]
    if len(scores) < len(results):
        logger.warning(f"{dataset.name}: {len(results) - len(scores)} of {len(results)} folds failed")
    seconds = [r.seconds for r in results]
    return CvResult(
        mean=float(np.mean(scores)) if scores else float("nan"),
        std=float(np.std(scores)) if scores else float("nan"),
        scores=scores,
        mean_seconds=float(np.mean(seconds)),
        std_seconds=float(np.std(seconds)),
        folds=list(results),
    )


@dataclass
class GridRow:
    config: ModelConfig
    result: CvResult

    def as_record(self, include_timing: bool = True) -> dict:
        record = {
            **self.config.describe(),
            "mean": self.result.mean,
            "std": self.result.std,
            "n_failed": self.result.n_failed,
        }
        record["hidden_widths"] = "-".join(str(w) for w in record["hidden_widths"])
        if include_timing:
            record["mean_seconds"] = self.result.mean_seconds
        return record


def _selection_key(config: ModelConfig, mean: float) -> tuple:
    score = mean if np.isfinite(mean) else -np.inf
    return (-score, *config.grid_key())


@dataclass
class GridResult:
    best: ModelConfig
    rows: list[GridRow]

    @property
    def best_row(self) -> GridRow:
        return next(row for row in self.rows if row.config is self.best)

    def to_frame(self, include_timing: bool = True) -> pd.DataFrame:
        return pd.DataFrame([row.as_record(include_timing) for row in self.rows])

    def to_csv(self, path: str | Path, include_timing: bool = True) -> Path:
        output_path = Path(path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame(include_timing).to_csv(output_path, index=False)
        return output_path


def grid_search(
    points: list[ModelConfig],
    dataset: Dataset,
    folds: int = 3,
    repeats: int = 1,
    seed: int = DEFAULT_SEED,
    n_jobs: int = 1,
) -> GridResult:
    """Cross-validate every grid point; best mean wins, ties go to smaller D, C, width."""
    if not points:
        raise ConfigError("Grid search needs at least one grid point")
    results = Parallel(n_jobs=n_jobs)(
        delayed(cross_validate)(point, dataset, folds, repeats, seed) for point in points
    )
    rows = [GridRow(point, result) for point, result in zip(points, results)]
    rows.sort(key=lambda row: _selection_key(row.config, row.result.mean))
    return GridResult(best=rows[0].config, rows=rows)


@dataclass
class FoldSelection:
    """Grid point chosen on one outer fold's training rows."""

    index: int
    config: ModelConfig
    inner_mean: float
    train_rows: int


@dataclass
class NestedCvResult:
    cv: CvResult
    selections: list[FoldSelection]

    @property
    def consensus(self) -> ModelConfig:
        """Most frequently selected grid point; ties go to the simpler one."""
        counts: dict[tuple, list[FoldSelection]] = {}
        for selection in self.selections:
            counts.setdefault(selection.config.grid_key(), []).append(selection)
        key = min(counts, key=lambda k: (-len(counts[k]), k))
        return counts[key][0].config

    def to_frame(self) -> pd.DataFrame:
        records = []
        for selection, fold in zip(self.selections, self.cv.folds):
            record = {
                "repeat": fold.repeat,
                "fold": fold.fold,
                **selection.config.describe(),
                "inner_mean": selection.inner_mean,
                "accuracy": fold.accuracy,
            }
            record["hidden_widths"] = "-".join(str(w) for w in record["hidden_widths"])
            records.append(record)
        return pd.DataFrame(records)

    def to_csv(self, path: str | Path) -> Path:
        output_path = Path(path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(output_path, index=False)
        return output_path


def _run_nested_fold(
    points: list[ModelConfig],
    dataset: Dataset,
    train_idx: np.ndarray,
    validation_idx: np.ndarray,
    seed: int,
    index: int,
    folds: int,
    inner_folds: int,
    inner_repeats: int,
) -> tuple[FoldSelection, FoldResult]:
    """Select on the outer training rows alone, then score the winner on the held-out rows."""
    inner = dataset.subset(train_idx)
    grid = grid_search(points, inner, inner_folds, inner_repeats, seed=seed)
    selection = FoldSelection(index, grid.best, grid.best_row.result.mean, len(train_idx))
    return selection, _run_fold(_factory(grid.best), dataset, train_idx, validation_idx, seed, index, folds)


def nested_cross_validate(
    points: list[ModelConfig],
    dataset: Dataset,
    folds: int = CV_FOLDS,
    repeats: int = CV_REPEATS,
    inner_folds: int = 3,
    inner_repeats: int = 1,
    seed: int = DEFAULT_SEED,
    n_jobs: int = 1,
) -> NestedCvResult:
    """Repeated k-fold accuracy with a grid search inside every outer fold.

    Held-out rows of a fold never reach its grid search, so the scores carry no selection bias.
    """
    if not points:
        raise ConfigError("Grid search needs at least one grid point")
    splits = kfold_split(dataset, folds, repeats, seed)
    pairs = Parallel(n_jobs=n_jobs)(
        delayed(_run_nested_fold)(
            points, dataset, train_idx, val_idx, Utils.derive_seed(seed, i), i, folds, inner_folds, inner_repeats
        )
        for i, (train_idx, val_idx) in enumerate(splits)
    )
    selections = [selection for selection, _ in pairs]
    return NestedCvResult(cv=_aggregate(dataset, [result for _, result in pairs]), selections=selections)


@dataclass
class ProbeRow:
    size: int
    seconds: float
    accuracy: float


def scalability_probe(
    config: ModelConfig,
    dataset: Dataset,
    sizes: list[int],
    seed: int = DEFAULT_SEED,
    test_fraction: float = 0.2,
) -> list[ProbeRow]:
    """Train on nested prefixes of one seeded shuffle; score on a fixed held-out tail."""
    order = Utils.rng(seed).permutation(dataset.size)
    n_test = max(1, int(round(test_fraction * dataset.size)))
    pool, test_idx = order[:-n_test], order[-n_test:]
    if any(size < 1 or size > pool.size for size in sizes):
        raise ConfigError(f"Probe sizes must lie in [1, {pool.size}], got {sizes}")

    rows = []
    for size in sizes:
        train = scale_features(dataset.subset(pool[:size]))
        test = scale_features(dataset.subset(test_idx), train.scaling)
        learner = LcnnLearner(config.reseeded(seed))
        start = time.perf_counter()
        learner.fit(train)
        rows.append(ProbeRow(size, time.perf_counter() - start, learner.accuracy(test)))
        logger.info(f"probe size={size}: {rows[-1].seconds:.2f}s, accuracy={rows[-1].accuracy:.4f}")
    return rows


@dataclass
class HoldoutResult:
    best: ModelConfig
    validation_accuracy: float
    test_accuracy: float
    rows: list[dict]
    learner: LcnnLearner | None = field(default=None, repr=False)


def holdout_evaluate(
    points: list[ModelConfig],
    train: Dataset,
    validation: Dataset,
    test: Dataset,
    seed: int = DEFAULT_SEED,
) -> HoldoutResult:
    """Choose the grid point on the validation split, report it on the test split."""
    if not points:
        raise ConfigError("Hold-out evaluation needs at least one grid point")
    train = scale_features(train)
    validation = scale_features(validation, train.scaling)
    test = scale_features(test, train.scaling)

    fitted = []
    for point in points:
        learner = LcnnLearner(point.reseeded(seed))
        try:
            learner.fit(train, validation)
            score = learner.accuracy(validation)
        except DivergenceError as e:
            logger.warning(f"Grid point {point.describe()} diverged ({e})")
            learner, score = None, float("nan")
        fitted.append((point, learner, score))

    fitted.sort(key=lambda item: _selection_key(item[0], item[2]))
    best, learner, score = fitted[0]
    if learner is None:
        raise DivergenceError("Every grid point diverged", report=None)
    return HoldoutResult(
        best=best,
        validation_accuracy=score,
        test_accuracy=learner.accuracy(test),
        rows=[{**p.describe(), "validation_accuracy": s} for p, _, s in fitted],
        learner=learner,
    )
