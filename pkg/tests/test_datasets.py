import numpy as np
import pytest

from axom.datasets import (
    BUILTIN_SCHEMAS,
    ConstantFeatureError,
    CsvParseError,
    Dataset,
    DatasetError,
    EmptyDatasetError,
    Split,
    denormalize,
    load_csv,
    load_dataset,
    normalize,
    split,
)


def manual_split(train, test):
    return Split(
        train_indices=np.asarray(train, dtype=np.int64),
        test_indices=np.asarray(test, dtype=np.int64),
        seed=0,
    )


def make_dataset(features, labels, n_classes, name="toy"):
    features = np.asarray(features, dtype=np.float64)
    return Dataset(
        name=name,
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        feature_names=tuple(f"f{i}" for i in range(features.shape[1])),
        n_classes=n_classes,
    )


class TestLoadCsv:
    def test_wine_shape(self, data_dir):
        ds = load_csv(f"{data_dir}/wine.csv", BUILTIN_SCHEMAS["wine"])
        assert ds.n_samples == 178
        assert ds.n_features == 13
        assert ds.n_classes == 3
        assert sorted(np.bincount(ds.labels)) == [48, 59, 71]

    def test_banknote_schema(self, data_dir):
        ds = load_csv(f"{data_dir}/banknote.csv", BUILTIN_SCHEMAS["banknote"])
        assert ds.n_features == 4
        assert ds.n_classes == 2
        # the alternative 5-column reading (class included) is documented
        assert "5" in BUILTIN_SCHEMAS["banknote"].notes

    def test_glass_drops_id_column(self, data_dir):
        ds = load_csv(f"{data_dir}/glass.csv", BUILTIN_SCHEMAS["glass"])
        assert ds.n_features == 9
        assert ds.n_samples == 214
        assert "id" not in ds.feature_names

    def test_labels_first_appearance_order(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("1.0,2.0,7\n1.5,2.5,3\n2.0,3.0,7\n")
        from axom.datasets import DatasetSchema

        ds = load_csv(path, DatasetSchema(name="t", n_features=2, n_classes=2))
        assert ds.labels.tolist() == [0, 1, 0]

    def test_empty_file_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyDatasetError):
            load_csv(path, BUILTIN_SCHEMAS["wine"])

    def test_malformed_row_reports_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0,0\n1.0,oops,1\n")
        from axom.datasets import DatasetSchema

        with pytest.raises(CsvParseError) as err:
            load_csv(path, DatasetSchema(name="t", n_features=2, n_classes=2))
        assert err.value.row_number == 2

    def test_wrong_arity_reports_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0,0\n1.0,1\n")
        from axom.datasets import DatasetSchema

        with pytest.raises(CsvParseError) as err:
            load_csv(path, DatasetSchema(name="t", n_features=2, n_classes=2))
        assert err.value.row_number == 2


class TestNormalize:
    def test_affine_endpoints(self):
        ds = make_dataset([[2.0], [4.0], [6.0]], [0, 1, 0], 2)
        out = normalize(ds, manual_split([0, 1, 2], []))
        assert out.features[:, 0].tolist() == [0.0, 0.5, 1.0]

    def test_test_rows_extrapolate_unclipped(self):
        ds = make_dataset([[2.0], [6.0], [8.0]], [0, 1, 0], 2)
        out = normalize(ds, manual_split([0, 1], [2]))
        assert out.features[2, 0] == pytest.approx(1.5)

    def test_constant_column_rejected(self):
        ds = make_dataset([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]], [0, 1, 0], 2)
        with pytest.raises(ConstantFeatureError) as err:
            normalize(ds, manual_split([0, 1, 2], []))
        assert err.value.column_name == "f0"

    def test_round_trip(self, data_dir):
        ds, sp = load_dataset("wine", data_dir, 0.1, seed=3)
        raw = load_csv(f"{data_dir}/wine.csv", BUILTIN_SCHEMAS["wine"])
        back = denormalize(ds, ds.features[sp.train_indices])
        np.testing.assert_allclose(back, raw.features[sp.train_indices], atol=1e-12)

    def test_training_rows_in_unit_box(self, data_dir):
        for name in BUILTIN_SCHEMAS:
            ds, sp = load_dataset(name, data_dir, 0.1, seed=1)
            train = ds.features[sp.train_indices]
            assert train.min() >= 0.0 and train.max() <= 1.0


class TestSplit:
    @pytest.mark.parametrize(
        "name,n_train,n_test",
        [("wine", 160, 18), ("seeds", 189, 21), ("glass", 192, 22), ("banknote", 1234, 138)],
    )
    def test_published_sizes(self, data_dir, name, n_train, n_test):
        ds = load_csv(f"{data_dir}/{name}.csv", BUILTIN_SCHEMAS[name])
        sp = split(ds, 0.1, seed=0)
        assert len(sp.train_indices) == n_train
        assert len(sp.test_indices) == n_test

    def test_deterministic(self, data_dir):
        ds = load_csv(f"{data_dir}/wine.csv", BUILTIN_SCHEMAS["wine"])
        a = split(ds, 0.1, seed=42)
        b = split(ds, 0.1, seed=42)
        assert a.train_indices.tolist() == b.train_indices.tolist()
        assert a.test_indices.tolist() == b.test_indices.tolist()

    def test_disjoint_and_covering(self, data_dir):
        ds = load_csv(f"{data_dir}/glass.csv", BUILTIN_SCHEMAS["glass"])
        sp = split(ds, 0.2, seed=5)
        both = np.concatenate([sp.train_indices, sp.test_indices])
        assert len(np.unique(both)) == ds.n_samples

    def test_stratified_within_one_sample(self, data_dir):
        ds = load_csv(f"{data_dir}/wine.csv", BUILTIN_SCHEMAS["wine"])
        frac = 0.1
        sp = split(ds, frac, seed=9)
        n_test_total = len(sp.test_indices)
        for c in range(ds.n_classes):
            n_c = int((ds.labels == c).sum())
            test_c = int((ds.labels[sp.test_indices] == c).sum())
            assert abs(test_c - n_c * n_test_total / ds.n_samples) < 1.0

    def test_empty_side_rejected(self):
        ds = make_dataset([[0.0], [1.0]], [0, 1], 2)
        with pytest.raises(DatasetError):
            split(ds, 0.99, seed=0)  # would empty the training side per class caps
