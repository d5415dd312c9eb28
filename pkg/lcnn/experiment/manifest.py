import itertools
import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from lcnn.config import (
    C_GRID,
    CV_FOLDS,
    CV_REPEATS,
    D_GRID,
    DEFAULT_SEED,
    FNN_LAST_LAYER_D_GRID,
    FNN_WEIGHT_DECAY_GRID,
    HIDDEN_WIDTH_GRID,
    IMPUTE_NEIGHBORS,
)
from lcnn.data.dataset import CsvSchema
from lcnn.errors import ConfigError
from lcnn.nn.linalg import ActivationKind
from lcnn.nn.network import NetworkConfig
from lcnn.nn.objective import LossKind, ObjectiveSpec
from lcnn.nn.training import TrainSchedule

_BASE_PRESETS = {
    "SE": {"SE": True},
    "SE+W": {"SE": True, "W": True},
    "SE+LC-L": {"SE": True, "LC-L": True},
    "SE+W+LC-A": {"SE": True, "W": True, "LC-A": True},
    "S": {"S": True},
    "S+W": {"S": True, "W": True},
    "S+LC-L": {"S": True, "LC-L": True},
    "S+W+LC-A": {"S": True, "W": True, "LC-A": True},
}

# Notation blocks with True marking a term whose coefficient comes from the grid
METHOD_PRESETS = {
    **_BASE_PRESETS,
    **{f"{name}+D": {**block, "D": True} for name, block in _BASE_PRESETS.items()},
}


class ModelConfig(BaseModel):
    """A fully specified classifier: architecture, objective coefficients and schedule."""

    model_config = ConfigDict(frozen=True)

    hidden_widths: list[int] = Field(default_factory=lambda: [16])
    hidden_activation: ActivationKind = ActivationKind.TANH
    objective: ObjectiveSpec = Field(default_factory=ObjectiveSpec)
    schedule: TrainSchedule = Field(default_factory=TrainSchedule)
    seed: int = DEFAULT_SEED

    @field_validator("hidden_widths")
    @classmethod
    def _positive_widths(cls, widths: list[int]) -> list[int]:
        if any(w < 1 for w in widths):
            raise ValueError(f"hidden widths must be positive, got {widths}")
        return widths

    @field_validator("hidden_activation")
    @classmethod
    def _elementwise_hidden(cls, kind: ActivationKind) -> ActivationKind:
        if not kind.is_elementwise:
            raise ValueError("softmax is only legal on the output layer")
        return kind

    @property
    def output_activation(self) -> ActivationKind:
        if self.objective.loss == LossKind.SOFTMAX_CROSS_ENTROPY:
            return ActivationKind.SOFTMAX
        return ActivationKind.TANH

    def output_width(self, n_classes: int) -> int:
        if self.objective.loss == LossKind.SQUARED_ERROR and n_classes == 2:
            return 1
        return n_classes

    def network_config(self, n_inputs: int, n_classes: int) -> NetworkConfig:
        return NetworkConfig.classifier(
            n_inputs,
            self.hidden_widths,
            self.output_width(n_classes),
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
            seed=self.seed,
        )

    def reseeded(self, seed: int) -> "ModelConfig":
        schedule = self.schedule.model_copy(update={"shuffle_seed": seed})
        return self.model_copy(update={"seed": seed, "schedule": schedule})

    def grid_key(self) -> tuple:
        """Simpler models sort first: smaller D, then C, then width, then dropout."""
        return (
            self.objective.lcnn_d,
            self.objective.weight_decay,
            tuple(self.hidden_widths),
            self.objective.dropout_rate,
        )

    def describe(self) -> dict:
        return {
            "method": self.objective.method_name,
            "c": self.objective.weight_decay,
            "d": self.objective.lcnn_d,
            "hidden_widths": list(self.hidden_widths),
            "dropout": self.objective.dropout_rate,
        }


class GridSpec(BaseModel):
    """Explicit value lists; each list only matters for methods that grid that term."""

    model_config = ConfigDict(frozen=True)

    c_values: list[float] = Field(default_factory=lambda: list(C_GRID), min_length=1)
    d_values: list[float] = Field(default_factory=lambda: list(D_GRID), min_length=1)
    hidden_widths: list[list[int]] | None = None
    dropout_rates: list[float] = Field(default_factory=lambda: [0.5], min_length=1)

    @field_validator("c_values", "d_values")
    @classmethod
    def _positive(cls, values: list[float]) -> list[float]:
        if any(v <= 0 for v in values):
            raise ValueError(f"grid coefficients must be positive, got {values}")
        return values

    @field_validator("dropout_rates")
    @classmethod
    def _dropout_range(cls, values: list[float]) -> list[float]:
        if any(not 0.0 <= v < 1.0 for v in values):
            raise ValueError(f"dropout rates must lie in [0, 1), got {values}")
        return values

    @field_validator("hidden_widths")
    @classmethod
    def _widths(cls, values: list[list[int]] | None) -> list[list[int]] | None:
        if values is not None and (not values or any(w < 1 for ws in values for w in ws)):
            raise ValueError(f"hidden width options must be non-empty and positive, got {values}")
        return values

    @classmethod
    def uci(cls) -> "GridSpec":
        """Default C and D decades plus a single-hidden-layer width axis."""
        return cls(hidden_widths=[[w] for w in HIDDEN_WIDTH_GRID])

    @classmethod
    def fully_connected(cls) -> "GridSpec":
        """Defaults of the fully connected comparison."""
        return cls(c_values=list(FNN_WEIGHT_DECAY_GRID), d_values=list(FNN_LAST_LAYER_D_GRID))


GRID_PRESETS = {"uci": GridSpec.uci, "fully_connected": GridSpec.fully_connected}


class MethodEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    objective: dict = Field(default_factory=dict)
    preset: str | None = None
    hidden_widths: list[int] = Field(default_factory=lambda: [16])
    hidden_activation: ActivationKind = ActivationKind.TANH
    schedule: TrainSchedule = Field(default_factory=TrainSchedule)

    @model_validator(mode="before")
    @classmethod
    def _expand_preset(cls, data):
        if isinstance(data, dict) and data.get("preset") is not None:
            preset = data["preset"]
            if preset not in METHOD_PRESETS:
                raise ValueError(f"unknown preset {preset!r}; choose from {sorted(METHOD_PRESETS)}")
            data = {**data, "objective": {**METHOD_PRESETS[preset], **data.get("objective", {})}}
        return data

    @model_validator(mode="after")
    def _check_objective(self) -> "MethodEntry":
        if not self.objective:
            raise ValueError(f"method {self.name!r} needs an objective or a preset")
        ObjectiveSpec.from_notation(self.objective)
        return self

    def _axis(self, key: str, values: list[float]) -> list[float]:
        # True: gridded; a number: fixed; absent/False: off
        value = self.objective.get(key)
        if value is True:
            return list(values)
        if value in (None, False):
            return [0.0]
        return [float(value)]

    def grid_points(self, grid: GridSpec, seed: int = DEFAULT_SEED) -> list[ModelConfig]:
        lcnn_key = "LC-A" if self.objective.get("LC-A") else "LC-L"
        widths = grid.hidden_widths or [self.hidden_widths]
        points = []
        for c, d, width, dropout in itertools.product(
            self._axis("W", grid.c_values),
            self._axis(lcnn_key, grid.d_values),
            widths,
            self._axis("D", grid.dropout_rates),
        ):
            block = {**self.objective, "W": c, lcnn_key: d, "D": dropout}
            points.append(
                ModelConfig(
                    hidden_widths=list(width),
                    hidden_activation=self.hidden_activation,
                    objective=ObjectiveSpec.from_notation(block),
                    schedule=self.schedule,
                    seed=seed,
                )
            )
        return points


class DatasetEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    path: str | None = None
    csv: CsvSchema = Field(default_factory=CsvSchema)


class Protocol(BaseModel):
    model_config = ConfigDict(frozen=True)

    folds: int = Field(default=CV_FOLDS, ge=2)
    repeats: int = Field(default=CV_REPEATS, ge=1)
    grid_folds: int = Field(default=3, ge=2)
    grid_repeats: int = Field(default=1, ge=1)
    impute_neighbors: int = Field(default=IMPUTE_NEIGHBORS, ge=1)
    n_jobs: int = 1


class Manifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "experiment"
    master_seed: int = DEFAULT_SEED
    datasets: list[DatasetEntry] = Field(min_length=1)
    methods: list[MethodEntry] = Field(min_length=1)
    grid: GridSpec = Field(default_factory=GridSpec)
    protocol: Protocol = Field(default_factory=Protocol)
    capacity: bool = True

    @field_validator("grid", mode="before")
    @classmethod
    def _grid_preset(cls, value):
        # a bare name selects a preset grid
        if isinstance(value, str):
            if value not in GRID_PRESETS:
                raise ValueError(f"unknown grid {value!r}; choose from {sorted(GRID_PRESETS)}")
            return GRID_PRESETS[value]()
        return value

    @model_validator(mode="after")
    def _unique_names(self) -> "Manifest":
        for kind, names in (
            ("dataset", [d.name for d in self.datasets]),
            ("method", [m.name for m in self.methods]),
        ):
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {kind} names: {names}")
        return self

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        """Parse and validate; relative dataset paths resolve against the manifest's folder."""
        path = Path(path)
        try:
            with path.open("r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read manifest {path}: {e}")
        for entry in data.get("datasets", []) if isinstance(data, dict) else []:
            if isinstance(entry, dict) and entry.get("path"):
                entry["path"] = str((path.parent / entry["path"]).resolve())
        return cls.parse(data)

    @classmethod
    def parse(cls, data: dict) -> "Manifest":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid manifest: {e}")
