import numpy as np
import pytest

from lcnn.data.dataset import Dataset, kfold_split
from lcnn.errors import ConfigError, DivergenceError
from lcnn.experiment import protocol
from lcnn.experiment.learner import ConstantLearner, LcnnLearner, Learner
from lcnn.experiment.manifest import ModelConfig
from lcnn.experiment.protocol import (
    CvResult,
    GridResult,
    GridRow,
    cross_validate,
    grid_search,
    holdout_evaluate,
    nested_cross_validate,
    scalability_probe,
)
from lcnn.nn.objective import LcnnMode, ObjectiveSpec
from lcnn.nn.training import TrainSchedule

FAST = TrainSchedule(epochs=30, batch_size=8, learning_rate=0.1)


def _config(**objective) -> ModelConfig:
    return ModelConfig(hidden_widths=[3], objective=ObjectiveSpec(**objective), schedule=FAST)


class _DivergesOnOddSeeds(Learner):
    def __init__(self, seed: int):
        self.inner = ConstantLearner(label=1)
        self.seed = seed

    def fit(self, train, validation=None):
        if self.seed % 2:
            raise DivergenceError("exploded")
        self.inner.fit(train)

    def predict(self, features):
        return self.inner.predict(features)


def test_constant_learner_scores_the_class_share(blobs):
    result = cross_validate(lambda seed: ConstantLearner(label=0), blobs, folds=4, repeats=2, seed=3)
    assert result.mean == pytest.approx(0.5)
    assert len(result.scores) == 8
    assert result.n_failed == 0


def test_constant_learner_defaults_to_the_majority(blobs):
    mostly_negative = ConstantLearner()
    mostly_negative.fit(blobs.subset(np.r_[0:10, 40:45]))
    assert mostly_negative.label == 0
    mostly_positive = ConstantLearner()
    mostly_positive.fit(blobs.subset(np.r_[0:5, 40:60]))
    assert mostly_positive.label == 1


def test_cross_validation_is_reproducible(blobs):
    first = cross_validate(_config(), blobs, folds=3, repeats=2, seed=5)
    second = cross_validate(_config(), blobs, folds=3, repeats=2, seed=5)
    assert first.scores == second.scores
    assert first.mean >= 0.9
    assert 0.0 <= first.std <= 0.5
    document = first.to_dict(include_timing=False)
    assert "mean_seconds" not in document
    assert "std_seconds" not in document
    assert first.std_seconds >= 0.0
    assert all("seconds" not in fold for fold in document["folds"])


def test_diverged_folds_are_left_out(blobs):
    result = cross_validate(_DivergesOnOddSeeds, blobs, folds=4, repeats=1, seed=0)
    failed = [f for f in result.folds if f.failed]
    assert result.n_failed == len(failed)
    assert len(result.scores) == 4 - len(failed)
    assert result.warning == bool(failed)


def test_grid_search_ties_prefer_the_simpler_model(monkeypatch, blobs):
    def _flat(config, *args, **kwargs):
        return CvResult(mean=0.9, std=0.0, scores=[0.9], mean_seconds=0.0)

    monkeypatch.setattr(protocol, "cross_validate", _flat)
    points = [
        _config(lcnn_mode=LcnnMode.LAST_LAYER, lcnn_d=d, weight_decay=c)
        for d in (1e-3, 1e-5)
        for c in (0.1, 0.01)
    ]
    result = grid_search(points, blobs)
    assert result.best.objective.lcnn_d == pytest.approx(1e-5)
    assert result.best.objective.weight_decay == pytest.approx(0.01)
    assert len(result.to_frame(include_timing=False)) == 4


def test_grid_search_prefers_the_higher_mean(monkeypatch, blobs):
    def _scored(config, *args, **kwargs):
        mean = 0.95 if config.objective.weight_decay == 0.1 else 0.8
        return CvResult(mean=mean, std=0.0, scores=[mean], mean_seconds=0.0)

    monkeypatch.setattr(protocol, "cross_validate", _scored)
    result = grid_search([_config(weight_decay=0.01), _config(weight_decay=0.1)], blobs)
    assert result.best.objective.weight_decay == pytest.approx(0.1)
    assert result.best_row.result.mean == pytest.approx(0.95)


def test_grid_search_needs_points(blobs):
    with pytest.raises(ConfigError):
        grid_search([], blobs)


def test_grid_csv(tmp_path, monkeypatch, blobs):
    monkeypatch.setattr(
        protocol, "cross_validate", lambda *a, **k: CvResult(mean=0.5, std=0.1, scores=[0.5], mean_seconds=1.0)
    )
    path = grid_search([_config()], blobs).to_csv(tmp_path / "grid.csv", include_timing=False)
    header = path.read_text().splitlines()[0]
    assert "mean_seconds" not in header
    assert header.startswith("method,")


def test_learner_trains_and_round_trips_weights(tmp_path, blobs):
    learner = LcnnLearner(_config())
    report = learner.fit(blobs)
    assert len(report.epochs) == FAST.epochs
    assert learner.accuracy(blobs) >= 0.9
    path = learner.save_weights(tmp_path / "net.json")
    other = LcnnLearner(_config())
    other.load_weights(path)
    assert np.array_equal(other.predict(blobs.features), learner.predict(blobs.features))


def test_unfitted_learner_refuses_to_predict(blobs):
    with pytest.raises(ConfigError):
        LcnnLearner(_config()).predict(blobs.features)


def test_scalability_probe(blobs):
    rows = scalability_probe(_config(), blobs, sizes=[16, 48], seed=1)
    assert [r.size for r in rows] == [16, 48]
    assert all(0.0 <= r.accuracy <= 1.0 and r.seconds >= 0.0 for r in rows)
    with pytest.raises(ConfigError):
        scalability_probe(_config(), blobs, sizes=[1000])


def test_holdout_evaluate(blobs):
    order = np.random.default_rng(2).permutation(blobs.size)
    train, validation, test = (blobs.subset(order[:40]), blobs.subset(order[40:60]), blobs.subset(order[60:]))
    result = holdout_evaluate([_config(weight_decay=0.01), _config(weight_decay=0.1)], train, validation, test)
    assert len(result.rows) == 2
    assert result.validation_accuracy >= 0.9
    assert 0.0 <= result.test_accuracy <= 1.0


def _tagged(ds: Dataset) -> Dataset:
    """Append the row number as a feature so a subset reveals which rows it holds."""
    return Dataset(
        features=np.column_stack([ds.features, np.arange(ds.size, dtype=np.float64)]),
        labels=ds.labels,
        class_names=ds.class_names,
        feature_names=[*ds.feature_names, "row"],
        name=ds.name,
    )


def test_nested_selection_never_sees_held_out_rows(monkeypatch, blobs):
    tagged = _tagged(blobs)
    seen = []

    def recording_grid_search(points, dataset, *args, **kwargs):
        seen.append(set(dataset.features[:, -1].astype(int)))
        return GridResult(best=points[0], rows=[GridRow(points[0], CvResult(0.9, 0.0, [0.9], 0.0))])

    monkeypatch.setattr(protocol, "grid_search", recording_grid_search)
    result = nested_cross_validate([_config()], tagged, folds=4, repeats=2, seed=6)

    splits = kfold_split(tagged, 4, 2, 6)
    assert len(seen) == len(splits) == len(result.cv.folds)
    for rows, (train_idx, validation_idx) in zip(seen, splits):
        assert rows == set(train_idx.tolist())
        assert rows.isdisjoint(validation_idx.tolist())
    assert [s.train_rows for s in result.selections] == [len(t) for t, _ in splits]


def test_nested_cross_validation_selects_per_fold(blobs):
    points = [_config(weight_decay=0.01), _config(weight_decay=0.1)]
    result = nested_cross_validate(points, blobs, folds=3, repeats=1, inner_folds=2, seed=2)
    assert len(result.cv.scores) == 3
    assert result.cv.mean >= 0.9
    assert all(s.config in points for s in result.selections)
    assert result.consensus in points
    frame = result.to_frame()
    assert list(frame[["repeat", "fold"]].itertuples(index=False, name=None)) == [(0, 0), (0, 1), (0, 2)]
    again = nested_cross_validate(points, blobs, folds=3, repeats=1, inner_folds=2, seed=2)
    assert again.cv.scores == result.cv.scores


def test_consensus_prefers_the_most_frequent_then_the_simpler_point(monkeypatch, blobs):
    simple, heavy = _config(weight_decay=0.01), _config(weight_decay=0.1)
    picks = iter([heavy, simple, heavy, simple])

    def alternating(points, dataset, *args, **kwargs):
        best = next(picks)
        return GridResult(best=best, rows=[GridRow(best, CvResult(0.9, 0.0, [0.9], 0.0))])

    monkeypatch.setattr(protocol, "grid_search", alternating)
    result = nested_cross_validate([simple, heavy], blobs, folds=4, repeats=1, seed=0)
    assert result.consensus is simple


def test_nested_cross_validation_needs_points(blobs):
    with pytest.raises(ConfigError):
        nested_cross_validate([], blobs)
