from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.datasets import fetch_openml, load_breast_cancer, load_iris, load_wine, make_classification
from torchvision.datasets import MNIST

from lcnn.config import DEFAULT_SEED, MNIST_TEST_SIZE, MNIST_TRAIN_SIZE
from lcnn.data.dataset import CsvSchema, Dataset, load_csv
from lcnn.errors import ConfigError
from lcnn.logger import logger
from lcnn.utils.utils import Utils

BUILTIN_LOADERS = {
    "iris": load_iris,
    "wine": load_wine,
    "breast_cancer": load_breast_cancer,
}

# UCI sets not bundled with scikit-learn, fetched once from OpenML (name, version)
OPENML_DATASETS = {
    "pima": ("diabetes", 1),
    "ionosphere": ("ionosphere", 1),
}


def load_builtin(name: str, data_home: str | Path | None = None) -> Dataset:
    if name in OPENML_DATASETS:
        return load_openml(name, data_home)
    if name not in BUILTIN_LOADERS:
        known = sorted([*BUILTIN_LOADERS, *OPENML_DATASETS])
        raise ConfigError(f"Unknown dataset {name!r}; choose from {known}")
    bunch = BUILTIN_LOADERS[name]()
    return Dataset(
        features=bunch.data,
        labels=bunch.target,
        class_names=[str(c) for c in bunch.target_names],
        feature_names=[str(f) for f in bunch.feature_names],
        name=name,
    )


def load_openml(name: str, data_home: str | Path | None = None) -> Dataset:
    """Download (or read the cached copy of) an OpenML UCI set; labels indexed in sorted order."""
    if name not in OPENML_DATASETS:
        raise ConfigError(f"{name!r} is not an OpenML dataset; choose from {sorted(OPENML_DATASETS)}")
    openml_name, version = OPENML_DATASETS[name]
    logger.info(f"Loading {name} from OpenML ({openml_name}, version {version})")
    bunch = fetch_openml(
        openml_name, version=version, as_frame=True, parser="auto", data_home=None if data_home is None else str(data_home)
    )
    frame = bunch.data.apply(pd.to_numeric, errors="coerce")
    labels, classes = pd.factorize(bunch.target.astype(str), sort=True)
    return Dataset(
        features=frame.to_numpy(dtype=np.float64),
        labels=labels,
        class_names=[str(c) for c in classes],
        feature_names=[str(c) for c in frame.columns],
        name=name,
    )


def make_synthetic(
    n_samples: int = 400,
    n_features: int = 8,
    n_classes: int = 2,
    seed: int = DEFAULT_SEED,
    class_sep: float = 1.0,
) -> Dataset:
    features, labels = make_classification(
        n_samples=n_samples,
        n_features=n_features,
        n_informative=max(2, n_features // 2),
        n_redundant=0,
        n_classes=n_classes,
        class_sep=class_sep,
        random_state=seed,
    )
    return Dataset(
        features=features,
        labels=labels,
        class_names=[str(c) for c in range(n_classes)],
        feature_names=[f"x{j}" for j in range(n_features)],
        name="synthetic",
    )


def _mnist_split(root: Path, train: bool, size: int, seed: int) -> Dataset:
    source = MNIST(root=str(root), train=train, download=True)
    images = source.data.numpy().reshape(len(source), -1).astype(np.float64) / 255.0
    labels = source.targets.numpy()
    if size < len(source):
        chosen = np.sort(Utils.rng(seed).choice(len(source), size=size, replace=False))
        images, labels = images[chosen], labels[chosen]
    return Dataset(
        features=images,
        labels=labels,
        class_names=[str(c) for c in range(10)],
        feature_names=[f"px{j}" for j in range(images.shape[1])],
        name="mnist_train" if train else "mnist_test",
    )


def load_mnist_subset(
    root: str | Path = "data/mnist",
    train_size: int = MNIST_TRAIN_SIZE,
    test_size: int = MNIST_TEST_SIZE,
    seed: int = DEFAULT_SEED,
) -> tuple[Dataset, Dataset]:
    """Seeded train/test subsets with pixels scaled to [0, 1]."""
    logger.info(f"Loading MNIST subset ({train_size} train / {test_size} test) from {root}")
    root = Path(root)
    return (
        _mnist_split(root, True, train_size, Utils.derive_seed(seed, 0)),
        _mnist_split(root, False, test_size, Utils.derive_seed(seed, 1)),
    )


def load_dataset(
    name: str | None = None,
    path: str | Path | None = None,
    schema: CsvSchema | None = None,
    seed: int = DEFAULT_SEED,
) -> Dataset:
    """Resolve a dataset reference: a CSV path, a bundled UCI name, or "synthetic"."""
    if path is not None:
        return load_csv(path, schema, name=name)
    if name == "synthetic":
        return make_synthetic(seed=seed)
    if name is None:
        raise ConfigError("A dataset needs a name or a path")
    return load_builtin(name)
