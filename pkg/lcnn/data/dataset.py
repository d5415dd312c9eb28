from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from sklearn.metrics.pairwise import nan_euclidean_distances
from sklearn.model_selection import RepeatedKFold
from sklearn.preprocessing import MinMaxScaler

from lcnn.config import CV_FOLDS, CV_REPEATS, DEFAULT_SEED, FORMAT_VERSION, IMPUTE_NEIGHBORS, MISSING_TOKEN
from lcnn.errors import ConfigError, DataError, DataFormatError, SpecError
from lcnn.logger import logger
from lcnn.nn.linalg import Matrix
from lcnn.nn.objective import LossKind
from lcnn.utils.utils import Utils

DATASET_FORMAT = "lcnn-dataset"


class CsvSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    label_column: str | int = -1
    missing_token: str = MISSING_TOKEN
    header: bool = True
    delimiter: str = Field(default=",", min_length=1)


@dataclass
class FeatureScaling:
    """Per-feature min-max scaling to `feature_range`; constant features map to the range midpoint."""

    minimum: np.ndarray
    maximum: np.ndarray
    feature_range: tuple[float, float] = (-1.0, 1.0)
    _scaler: MinMaxScaler = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.minimum = np.asarray(self.minimum, dtype=np.float64)
        self.maximum = np.asarray(self.maximum, dtype=np.float64)
        self.feature_range = tuple(float(v) for v in self.feature_range)
        self._scaler = MinMaxScaler(feature_range=self.feature_range).fit(
            np.vstack([self.minimum, self.maximum])
        )

    @classmethod
    def fit(cls, features: Matrix, feature_range: tuple[float, float] = (-1.0, 1.0)) -> "FeatureScaling":
        scaler = MinMaxScaler(feature_range=feature_range).fit(features)
        return cls(minimum=scaler.data_min_, maximum=scaler.data_max_, feature_range=feature_range)

    @property
    def constant(self) -> np.ndarray:
        return self.maximum == self.minimum

    def transform(self, features: Matrix) -> Matrix:
        scaled = self._scaler.transform(np.asarray(features, dtype=np.float64))
        scaled[:, self.constant] = 0.5 * (self.feature_range[0] + self.feature_range[1])
        return scaled

    def inverse_transform(self, features: Matrix) -> Matrix:
        original = self._scaler.inverse_transform(np.asarray(features, dtype=np.float64))
        original[:, self.constant] = self.minimum[self.constant]
        return original

    def to_dict(self) -> dict:
        return {
            "minimum": self.minimum.tolist(),
            "maximum": self.maximum.tolist(),
            "feature_range": list(self.feature_range),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureScaling":
        return cls(
            minimum=np.asarray(data["minimum"]),
            maximum=np.asarray(data["maximum"]),
            feature_range=tuple(data.get("feature_range", (-1.0, 1.0))),
        )


@dataclass
class Dataset:
    features: Matrix
    labels: np.ndarray
    class_names: list[str]
    feature_names: list[str]
    missing_mask: np.ndarray | None = None
    scaling: FeatureScaling | None = None
    name: str = ""

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError("A dataset needs at least one row of features")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError(f"{self.labels.shape[0]} labels for {self.features.shape[0]} rows")
        if self.missing_mask is None:
            self.missing_mask = np.isnan(self.features)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return replace(
            self,
            features=self.features[indices],
            labels=self.labels[indices],
            missing_mask=self.missing_mask[indices],
        )


def load_csv(path: str | Path, schema: CsvSchema | None = None, name: str | None = None) -> Dataset:
    """Numeric features, missing-token cells as NaN, labels indexed in first-appearance order."""
    schema = schema or CsvSchema()
    frame = pd.read_csv(
        path,
        sep=schema.delimiter,
        header=0 if schema.header else None,
        dtype=str,
        keep_default_na=False,
        skipinitialspace=True,
    )
    if frame.empty:
        raise DataError(f"{path} has no data rows")
    frame.columns = [str(c) for c in frame.columns]

    if isinstance(schema.label_column, int):
        try:
            label_column = frame.columns[schema.label_column]
        except IndexError:
            raise ConfigError(f"Label column index {schema.label_column} out of range")
    else:
        label_column = schema.label_column
        if label_column not in frame.columns:
            raise ConfigError(f"Label column {label_column!r} not found")

    feature_columns = [c for c in frame.columns if c != label_column]
    features = np.empty((len(frame), len(feature_columns)))
    for j, column in enumerate(feature_columns):
        cells = frame[column].str.strip()
        missing = cells == schema.missing_token
        values = pd.to_numeric(cells.where(~missing), errors="coerce")
        bad = values.isna() & ~missing
        if bad.any():
            row = int(np.argmax(bad.to_numpy()))
            raise DataFormatError(f"Cannot parse {cells.iloc[row]!r} as a number", row=row, column=column)
        features[:, j] = values.to_numpy(dtype=np.float64)

    codes, classes = pd.factorize(frame[label_column].str.strip())
    return Dataset(
        features=features,
        labels=codes,
        class_names=[str(c) for c in classes],
        feature_names=feature_columns,
        name=name or Path(path).stem,
    )


def knn_impute(ds: Dataset, k: int = IMPUTE_NEIGHBORS) -> Dataset:
    """Fill each missing cell with the mean of that feature over its k nearest donor rows.

    Distances are nan-Euclidean (shared observed coordinates, rescaled by their count);
    equal distances resolve to the lower row index.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    mask = np.isnan(ds.features)
    if not mask.any():
        return ds
    empty_features = np.flatnonzero(mask.all(axis=0))
    if empty_features.size:
        names = [ds.feature_names[j] for j in empty_features]
        raise DataError(f"Features missing in every row: {names}")
    if np.any(mask.all(axis=1)):
        raise DataError("Rows with no observed feature cannot be imputed")

    distances = nan_euclidean_distances(ds.features, ds.features)
    distances = np.where(np.isnan(distances), np.inf, distances)
    rows = np.arange(ds.size)
    filled = ds.features.copy()
    for i, j in zip(*np.nonzero(mask)):
        donors = rows[~mask[:, j] & (rows != i) & np.isfinite(distances[i])]
        if donors.size == 0:
            logger.warning(f"Row {i}: no donor shares observed features; using the column mean of {ds.feature_names[j]}")
            filled[i, j] = np.nanmean(ds.features[:, j])
            continue
        order = np.lexsort((donors, distances[i, donors]))
        filled[i, j] = ds.features[donors[order[:k]], j].mean()

    return replace(ds, features=filled, missing_mask=np.zeros_like(mask))


def scale_features(
    ds: Dataset,
    scaling: FeatureScaling | None = None,
    feature_range: tuple[float, float] = (-1.0, 1.0),
) -> Dataset:
    """Fit scaling on `ds` (the training portion) or apply a given one; no clamping."""
    if ds.has_missing:
        raise DataError("Impute missing cells before scaling")
    if scaling is None:
        scaling = FeatureScaling.fit(ds.features, feature_range)
    elif scaling.minimum.shape[0] != ds.n_features:
        raise DataError(f"Scaling fitted on {scaling.minimum.shape[0]} features, got {ds.n_features}")
    return replace(ds, features=scaling.transform(ds.features), scaling=scaling)


def encode_targets(labels: np.ndarray, n_classes: int, loss: LossKind, magnitude: float = 1.0) -> np.ndarray:
    """Loss-specific targets: class indices for softmax, +-magnitude columns otherwise."""
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes < 2:
        raise DataError(f"Need at least two classes, got {n_classes}")
    match LossKind(loss):
        case LossKind.SOFTMAX_CROSS_ENTROPY:
            return labels
        case LossKind.SQUARED_ERROR:
            if n_classes == 2:
                return np.where(labels == 1, magnitude, -magnitude).reshape(-1, 1)
            targets = np.full((labels.shape[0], n_classes), -magnitude)
            targets[np.arange(labels.shape[0]), labels] = magnitude
            return targets
        case _:
            raise SpecError(f"{loss} targets are the inputs themselves")


def kfold_split(
    ds: Dataset | int,
    folds: int = CV_FOLDS,
    repeats: int = CV_REPEATS,
    seed: int = DEFAULT_SEED,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled, unstratified (train, validation) index pairs, `folds` per repeat."""
    m = ds if isinstance(ds, int) else ds.size
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    if m < folds:
        raise ConfigError(f"{m} samples cannot fill {folds} folds")
    splitter = RepeatedKFold(n_splits=folds, n_repeats=repeats, random_state=seed)
    return list(splitter.split(np.zeros((m, 1))))


def input_radius(ds: Dataset | Matrix) -> float:
    features = ds.features if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    if np.isnan(features).any():
        raise DataError("Radius is undefined with missing cells")
    return float(np.max(np.linalg.norm(features, axis=1)))


def save_processed(ds: Dataset, path: str | Path) -> Path:
    return Utils.dump_json(
        {
            "format": DATASET_FORMAT,
            "version": FORMAT_VERSION,
            "name": ds.name,
            "feature_names": ds.feature_names,
            "class_names": ds.class_names,
            "features": ds.features,
            "labels": ds.labels,
            "scaling": ds.scaling.to_dict() if ds.scaling else None,
        },
        path,
    )


def load_processed(path: str | Path) -> Dataset:
    data = Utils.load_json(path)
    if data.get("format") != DATASET_FORMAT or data.get("version") != FORMAT_VERSION:
        raise ConfigError(f"{path} is not a version {FORMAT_VERSION} dataset document")
    return Dataset(
        features=np.asarray(data["features"], dtype=np.float64),
        labels=np.asarray(data["labels"], dtype=np.int64),
        class_names=data["class_names"],
        feature_names=data["feature_names"],
        scaling=FeatureScaling.from_dict(data["scaling"]) if data["scaling"] else None,
        name=data["name"],
    )
