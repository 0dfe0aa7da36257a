"""Random forest and gradient boosting: invariants, determinism, serialization."""

import json

import numpy as np
import pytest

from itemdiff.evaluation import pearson_r, rmse
from itemdiff.feature_matrix import DesignMatrix
from itemdiff.tree_ensembles import (
    BoostedModel,
    ColumnMismatchError,
    GbmParams,
    fit_gbm,
    fit_random_forest,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
)


def planted_linear(n, seed, n_features=5, noise_sd=0.1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, n_features))
    y = 2.0 * X[:, 0] + rng.normal(0, noise_sd, size=n)
    return X, y


class TestRandomForest:
    def test_single_tree_no_bootstrap_interpolates(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        model = fit_random_forest(
            X, y, n_trees=1, mtry=3, min_node_size=1, seed=0, bootstrap=False
        )
        assert model.predict(X) == pytest.approx(y, abs=1e-12)

    def test_same_seed_bit_identical(self):
        X, y = planted_linear(80, seed=1)
        a = fit_random_forest(X, y, n_trees=12, seed=7)
        b = fit_random_forest(X, y, n_trees=12, seed=7)
        assert a.predict(X).tolist() == b.predict(X).tolist()
        assert model_to_dict(a) == model_to_dict(b)

    def test_different_seed_differs(self):
        X, y = planted_linear(80, seed=1)
        a = fit_random_forest(X, y, n_trees=12, seed=7)
        b = fit_random_forest(X, y, n_trees=12, seed=8)
        assert a.predict(X).tolist() != b.predict(X).tolist()

    def test_planted_linear_signal(self):
        X, y = planted_linear(200, seed=3)
        Xh, yh = planted_linear(150, seed=4)
        model = fit_random_forest(X, y, n_trees=200, min_node_size=5, seed=5)
        r = pearson_r(model.predict(Xh), yh)
        assert r >= 0.9

    def test_predictions_within_target_range(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(100, 4))
        y = rng.uniform(-3, 2, size=100)
        model = fit_random_forest(X, y, n_trees=25, seed=1)
        preds = model.predict(rng.normal(size=(60, 4)))
        assert preds.min() >= y.min() - 1e-12
        assert preds.max() <= y.max() + 1e-12

    def test_target_shift_equivariance(self):
        X, y = planted_linear(150, seed=9)
        for c in (3.5, -2.25):
            a = fit_random_forest(X, y, n_trees=20, seed=11)
            b = fit_random_forest(X, y + c, n_trees=20, seed=11)
            assert np.max(np.abs(b.predict(X) - a.predict(X) - c)) <= 1e-9

    def test_mtry_out_of_range(self):
        X, y = planted_linear(20, seed=2)
        with pytest.raises(ValueError, match="mtry"):
            fit_random_forest(X, y, n_trees=2, mtry=99)


class TestGbm:
    def test_zero_rounds_equals_target_mean(self):
        X, y = planted_linear(50, seed=0)
        model = fit_gbm(X, y, GbmParams(nrounds=0), seed=0)
        assert model.predict(X) == pytest.approx(np.full(50, y.mean()))

    def test_single_round_stump_exact_fit(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        params = GbmParams(nrounds=1, max_depth=1, eta=1.0, gamma=0.0, reg_lambda=0.0)
        model = fit_gbm(X, y, params, seed=0)
        assert model.predict(X) == pytest.approx(y, abs=1e-12)

    def test_eta_zero_stays_at_base(self):
        X, y = planted_linear(40, seed=1)
        model = fit_gbm(X, y, GbmParams(nrounds=30, eta=0.0), seed=0)
        assert model.predict(X) == pytest.approx(np.full(40, y.mean()))

    def test_training_rmse_non_increasing(self):
        X, y = planted_linear(200, seed=5, n_features=6, noise_sd=0.3)
        params = GbmParams(
            nrounds=200, max_depth=4, eta=0.1, gamma=0.0,
            colsample_bytree=1.0, subsample=1.0, min_child_weight=1.0,
        )
        model = fit_gbm(X, y, params, seed=3)
        pred = np.full(len(y), model.base_score)
        last = rmse(pred, y)
        for tree in model.trees:
            pred = pred + params.eta * tree.predict(X)
            current = rmse(pred, y)
            assert current <= last + 1e-12
            last = current

    def test_target_shift_equivariance(self):
        X, y = planted_linear(150, seed=7)
        params = GbmParams(nrounds=60, max_depth=3, eta=0.1,
                           subsample=0.8, colsample_bytree=0.8)
        for c in (4.0, -1.5):
            a = fit_gbm(X, y, params, seed=13)
            b = fit_gbm(X, y + c, params, seed=13)
            assert np.max(np.abs(b.predict(X) - a.predict(X) - c)) <= 1e-9

    def test_same_seed_bit_identical(self):
        X, y = planted_linear(90, seed=8)
        params = GbmParams(nrounds=25, max_depth=3, subsample=0.8)
        a = fit_gbm(X, y, params, seed=2)
        b = fit_gbm(X, y, params, seed=2)
        assert model_to_dict(a) == model_to_dict(b)

    def test_illegal_hyperparameters(self):
        with pytest.raises(ValueError, match="eta"):
            GbmParams(eta=1.5)
        with pytest.raises(ValueError, match="subsample"):
            GbmParams(subsample=0.0)
        with pytest.raises(ValueError, match="nrounds"):
            GbmParams(nrounds=-1)


class TestPredictInterface:
    def test_forest_of_single_leaf_trees(self):
        X = np.full((10, 2), 1.0)
        y = np.full(10, 3.25)
        model = fit_random_forest(X, y, n_trees=5, seed=0)
        assert model.predict(np.zeros((4, 2))).tolist() == [3.25] * 4

    def test_column_name_mismatch(self):
        matrix = DesignMatrix(
            item_ids=("a", "b", "c", "d"),
            column_names=("f1", "f2"),
            values=np.arange(8, dtype=float).reshape(4, 2),
        )
        model = fit_random_forest(matrix, [1.0, 2.0, 3.0, 4.0], n_trees=2, seed=0)
        renamed = DesignMatrix(
            item_ids=matrix.item_ids,
            column_names=("f2", "f1"),
            values=matrix.values,
        )
        with pytest.raises(ColumnMismatchError, match="order"):
            predict(model, renamed)

    def test_column_count_mismatch(self):
        X, y = planted_linear(30, seed=1, n_features=3)
        model = fit_gbm(X, y, GbmParams(nrounds=3, max_depth=2), seed=0)
        with pytest.raises(ColumnMismatchError, match="columns"):
            model.predict(np.zeros((5, 4)))

    def test_unsupported_model_type(self):
        with pytest.raises(TypeError):
            predict(object(), np.zeros((2, 2)))


class TestSerialization:
    def test_round_trip_identical_predictions(self, tmp_path):
        X, y = planted_linear(120, seed=10, n_features=4)
        Xh, _ = planted_linear(50, seed=11, n_features=4)
        gbm = fit_gbm(X, y, GbmParams(nrounds=30, max_depth=3, subsample=0.8), seed=4)
        rf = fit_random_forest(X, y, n_trees=15, seed=4)
        for model in (gbm, rf):
            path = tmp_path / "model.json"
            save_model(model, path)
            loaded = load_model(path)
            assert loaded.predict(Xh).tolist() == model.predict(Xh).tolist()
            assert tuple(loaded.column_names) == tuple(model.column_names)

    def test_serialized_bytes_deterministic(self, tmp_path):
        X, y = planted_linear(60, seed=12)
        for i, path in enumerate([tmp_path / "a.json", tmp_path / "b.json"]):
            save_model(fit_gbm(X, y, GbmParams(nrounds=10), seed=6), path)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_version_mismatch_rejected(self, tmp_path):
        X, y = planted_linear(30, seed=13)
        model = fit_random_forest(X, y, n_trees=2, seed=0)
        blob = model_to_dict(model)
        blob["format_version"] = 99
        with pytest.raises(ValueError, match="format version"):
            model_from_dict(blob)

    def test_inconsistent_columns_rejected(self, tmp_path):
        X, y = planted_linear(30, seed=14, n_features=4)
        model = fit_gbm(X, y, GbmParams(nrounds=5, max_depth=2), seed=0)
        blob = model_to_dict(model)
        blob["column_names"] = []
        with pytest.raises(ValueError, match="inconsistent"):
            model_from_dict(blob)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown model kind"):
            model_from_dict({"format_version": 1, "kind": "svm",
                             "column_names": [], "trees": []})
