import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from lcnn.data.dataset import (
    CsvSchema,
    Dataset,
    FeatureScaling,
    encode_targets,
    input_radius,
    kfold_split,
    knn_impute,
    load_csv,
    load_processed,
    save_processed,
    scale_features,
)
from lcnn.errors import ConfigError, DataError, DataFormatError, SpecError
from lcnn.nn.objective import LossKind


def _dataset(features, labels=None) -> Dataset:
    features = np.asarray(features, dtype=np.float64)
    labels = np.zeros(features.shape[0], dtype=int) if labels is None else labels
    return Dataset(
        features=features,
        labels=labels,
        class_names=["a", "b"],
        feature_names=[f"f{j}" for j in range(features.shape[1])],
        name="toy",
    )


def test_load_csv_marks_missing_cells(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("x,y,class\n1.0,?,yes\n2.0,3.5,no\n?,1.0,yes\n")
    ds = load_csv(path)
    assert ds.name == "toy"
    assert ds.class_names == ["yes", "no"]
    assert_array_equal(ds.labels, [0, 1, 0])
    assert ds.has_missing
    assert_array_equal(ds.missing_mask, [[False, True], [False, False], [True, False]])
    assert ds.features[1, 1] == pytest.approx(3.5)


def test_load_csv_with_named_label_and_custom_token(tmp_path):
    path = tmp_path / "semi.csv"
    path.write_text("class;x\nb;NA\na;2\n")
    ds = load_csv(path, CsvSchema(label_column="class", missing_token="NA", delimiter=";"))
    assert ds.feature_names == ["x"]
    assert np.isnan(ds.features[0, 0])


def test_load_csv_reports_the_bad_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,class\n1,2,a\n3,oops,b\n")
    with pytest.raises(DataFormatError) as info:
        load_csv(path)
    assert info.value.row == 1
    assert info.value.column == "y"


def test_load_csv_rejects_unknown_label_column(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("x,class\n1,a\n")
    with pytest.raises(ConfigError):
        load_csv(path, CsvSchema(label_column="target"))


def test_knn_impute_averages_nearest_donors():
    ds = _dataset([[0.0, np.nan], [1.0, 2.0], [-1.0, 4.0], [10.0, 100.0]])
    assert knn_impute(ds, k=2).features[0, 1] == pytest.approx(3.0)
    # equidistant donors resolve to the lower row index
    assert knn_impute(ds, k=1).features[0, 1] == pytest.approx(2.0)
    filled = knn_impute(ds, k=2)
    assert not filled.has_missing
    assert ds.has_missing


def test_knn_impute_without_missing_cells_is_a_no_op():
    ds = _dataset([[0.0, 1.0]])
    assert knn_impute(ds) is ds


def test_knn_impute_rejects_hopeless_inputs():
    with pytest.raises(DataError):
        knn_impute(_dataset([[np.nan, 1.0], [np.nan, 2.0]]))
    with pytest.raises(DataError):
        knn_impute(_dataset([[np.nan, np.nan], [1.0, 2.0]]))
    with pytest.raises(ConfigError):
        knn_impute(_dataset([[np.nan, 1.0], [1.0, 2.0]]), k=0)


def test_scaling_maps_training_range_to_minus_one_one():
    ds = _dataset([[0.0, 5.0, 3.0], [10.0, 5.0, 1.0], [5.0, 5.0, 2.0]])
    scaled = scale_features(ds)
    assert_allclose(scaled.features[:, 0], [-1.0, 1.0, 0.0])
    # constant feature sits at the midpoint
    assert_allclose(scaled.features[:, 1], 0.0)
    assert_allclose(scaled.scaling.inverse_transform(scaled.features), ds.features)


def test_scaling_reuses_training_parameters_without_clamping():
    train = _dataset([[0.0], [10.0]])
    scaled = scale_features(train)
    test = scale_features(_dataset([[20.0]]), scaled.scaling)
    assert test.features[0, 0] == pytest.approx(3.0)
    with pytest.raises(DataError):
        scale_features(_dataset([[1.0, 2.0]]), scaled.scaling)
    with pytest.raises(DataError):
        scale_features(_dataset([[np.nan]]))


def test_scaling_document():
    scaling = FeatureScaling.fit(np.array([[0.0, 1.0], [2.0, 1.0]]), feature_range=(0.0, 1.0))
    restored = FeatureScaling.from_dict(scaling.to_dict())
    assert_allclose(restored.transform([[1.0, 1.0]]), [[0.5, 0.5]])


def test_encode_targets():
    assert_array_equal(encode_targets([0, 1], 2, LossKind.SOFTMAX_CROSS_ENTROPY), [0, 1])
    assert_array_equal(encode_targets([0, 1], 2, LossKind.SQUARED_ERROR, 0.9), [[-0.9], [0.9]])
    assert_array_equal(encode_targets([2], 3, LossKind.SQUARED_ERROR), [[-1.0, -1.0, 1.0]])
    with pytest.raises(SpecError):
        encode_targets([0, 1], 2, LossKind.RECONSTRUCTION)
    with pytest.raises(DataError):
        encode_targets([0], 1, LossKind.SQUARED_ERROR)


def test_kfold_split_partitions_each_repeat():
    splits = kfold_split(23, folds=5, repeats=2, seed=1)
    assert len(splits) == 10
    for repeat in range(2):
        validation = np.concatenate([v for _, v in splits[repeat * 5 : (repeat + 1) * 5]])
        assert_array_equal(np.sort(validation), np.arange(23))
    train, validation = splits[0]
    assert np.intersect1d(train, validation).size == 0
    again = kfold_split(23, folds=5, repeats=2, seed=1)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(splits, again))


@pytest.mark.parametrize("m, folds, repeats", [(3, 5, 1), (10, 1, 1), (10, 2, 0)])
def test_kfold_split_rejects_bad_arguments(m, folds, repeats):
    with pytest.raises(ConfigError):
        kfold_split(m, folds=folds, repeats=repeats)


def test_input_radius():
    assert input_radius(np.array([[3.0, 4.0], [0.0, 1.0]])) == pytest.approx(5.0)
    with pytest.raises(DataError):
        input_radius(np.array([[np.nan]]))


def test_processed_document_round_trip(tmp_path):
    ds = scale_features(_dataset([[0.0, 1.0], [2.0, 3.0]], labels=[0, 1]))
    loaded = load_processed(save_processed(ds, tmp_path / "toy.json"))
    assert_allclose(loaded.features, ds.features)
    assert_array_equal(loaded.labels, ds.labels)
    assert_allclose(loaded.scaling.maximum, ds.scaling.maximum)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(features=np.zeros((2, 1)), labels=[0], class_names=["a"], feature_names=["x"])
    with pytest.raises(DataError):
        Dataset(features=np.zeros((0, 1)), labels=[], class_names=["a"], feature_names=["x"])


def test_five_folds_of_ten():
    splits = kfold_split(10, folds=5, repeats=1, seed=0)
    assert [(len(t), len(v)) for t, v in splits] == [(8, 2)] * 5


def test_knn_impute_is_idempotent():
    ds = knn_impute(_dataset([[0.0, np.nan], [1.0, 2.0], [-1.0, 4.0]]), k=1)
    again = knn_impute(ds, k=1)
    assert_array_equal(again.features, ds.features)
    assert not again.missing_mask.any()
