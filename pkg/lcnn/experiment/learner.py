from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from lcnn.data.dataset import Dataset, encode_targets
from lcnn.errors import ConfigError
from lcnn.experiment.manifest import ModelConfig
from lcnn.nn.linalg import Matrix
from lcnn.nn.network import ForwardTrace, Network, forward, init_network, predict
from lcnn.nn.training import TrainingData, TrainReport, sgd_train


class Learner(ABC):
    @abstractmethod
    def fit(self, train: Dataset, validation: Dataset | None = None) -> None:
        pass

    @abstractmethod
    def predict(self, features: Matrix) -> np.ndarray:
        pass

    def accuracy(self, ds: Dataset) -> float:
        return float(np.mean(self.predict(ds.features) == ds.labels))


class ConstantLearner(Learner):
    """Always predicts one class: the given one, else the training majority."""

    def __init__(self, label: int | None = None):
        self.label = label

    def fit(self, train: Dataset, validation: Dataset | None = None) -> None:
        if self.label is None:
            self.label = int(np.argmax(np.bincount(train.labels)))

    def predict(self, features: Matrix) -> np.ndarray:
        if self.label is None:
            raise ConfigError("ConstantLearner used before fit")
        return np.full(np.asarray(features).shape[0], self.label, dtype=np.int64)


class LcnnLearner(Learner):
    def __init__(self, config: ModelConfig):
        self.config = config
        self.network: Network | None = None
        self.report: TrainReport | None = None

    def _training_data(self, ds: Dataset, n_classes: int) -> TrainingData:
        objective = self.config.objective
        targets = encode_targets(ds.labels, n_classes, objective.loss, objective.target_magnitude)
        return TrainingData(features=ds.features, targets=targets, labels=ds.labels)

    def fit(self, train: Dataset, validation: Dataset | None = None) -> TrainReport:
        n_classes = train.n_classes
        network = init_network(self.config.network_config(train.n_features, n_classes))
        # folds smaller than the configured batch train full-batch
        schedule = self.config.schedule
        if schedule.batch_size > train.size:
            schedule = schedule.model_copy(update={"batch_size": train.size})
        self.report = sgd_train(
            network,
            self._training_data(train, n_classes),
            self.config.objective,
            schedule,
            validation=self._training_data(validation, n_classes) if validation else None,
            progress=False,
        )
        self.network = self.report.network
        return self.report

    def _fitted(self) -> Network:
        if self.network is None:
            raise ConfigError("LcnnLearner used before fit")
        return self.network

    def predict(self, features: Matrix) -> np.ndarray:
        return predict(self._fitted(), features)

    def trace(self, features: Matrix) -> ForwardTrace:
        return forward(self._fitted(), features)

    def save_weights(self, filename: str | Path) -> Path:
        return self._fitted().save(filename)

    def load_weights(self, filename: str | Path) -> None:
        self.network = Network.load(filename, kind="classifier")
