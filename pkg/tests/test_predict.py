from __future__ import annotations

from datetime import date, datetime

import numpy as np
import pytest

from railevent.ingest import EventRecord
from railevent.predict import (FeatureEncoder, FeatureRow, ModelSpec, NoSportingEvent, RankDeficient,
                               build_feature_rows, dumps_model, fit_forest, fit_model, fit_linear, fit_lr_rf, fit_tree,
                               loads_model, loocv, metrics, oob_rmse_curve, permutation_importance, targets)
from railevent.predict.features import NO_LOCATION, NONE
from railevent.synthgen import prediction_dataset
from railevent.timeutil import to_seconds

DAY = date(2018, 1, 15)


def event(hh, mm, category, name, attendance, location="Arena"):
    return EventRecord(to_seconds(datetime(2018, 1, 15, hh, mm)), category, name, location, attendance)


def test_single_game_row_has_null_second_event():
    (row,) = build_feature_rows({DAY: [event(19, 30, "Basketball - Hawks", "Hawks", 15000)]},
                                {DAY: {"post_event": 2500.0}})
    assert (row.category2, row.location2, row.attendance2, row.time_difference) == (NONE, NO_LOCATION, 0, 0)
    assert not row.two_event and row.attendance == 15000 and row.target_post_event == 2500.0
    assert row.month == 1 and not row.week


def test_hawks_and_expo():
    rows = build_feature_rows({DAY: [event(10, 0, "Expo", "Boat Show", 8000, "GWCC"),
                                     event(17, 30, "Basketball - Hawks", "Hawks", 15000)]}, {})
    row = rows[0]
    assert row.category == "Basketball - Hawks" and row.category2 == "Expo"
    assert row.time_difference == 450 and row.two_event and row.attendance2 == 8000


def test_later_game_is_event_one():
    rows = build_feature_rows({DAY: [event(19, 0, "Soccer - United", "United", 40000),
                                     event(14, 0, "Basketball - Hawks", "Hawks", 15000)]}, {})
    assert rows[0].category == "Soccer - United" and rows[0].category2 == "Basketball - Hawks"
    assert rows[0].time_difference == 300


def test_no_sporting_event():
    with pytest.raises(NoSportingEvent):
        build_feature_rows({DAY: [event(10, 0, "Expo", "Boat Show", 8000)]}, {})


def test_second_event_fields_must_be_null_alone():
    with pytest.raises(ValueError):
        FeatureRow(DAY, "Soccer", "Dome", 100.0, attendance2=5.0)


def test_encoder_one_hot():
    rows = [FeatureRow(DAY, "a", "x", 1.0, month=3), FeatureRow(DAY, "b", "x", 2.0, month=4)]
    enc = FeatureEncoder.fit(rows)
    X = enc.transform(rows)
    names = enc.names
    assert X[:, names.index("category=a")].tolist() == [1.0, 0.0]
    assert X[:, names.index("month=4")].tolist() == [0.0, 1.0]
    assert FeatureEncoder.from_dict(enc.to_dict()).names == names


def test_linear_exact_line():
    x = np.arange(1.0, 11.0)[:, None]
    m = fit_linear(x, 2 * x[:, 0])
    assert m.intercept == pytest.approx(0, abs=1e-9) and m.coefficients[0] == pytest.approx(2)
    assert np.allclose(m.residuals, 0)


def test_linear_slope_and_orthogonal_residuals():
    rows = prediction_dataset(0)
    X = FeatureEncoder.fit(rows).transform(rows)
    y = targets(rows, "post_event")
    m = fit_linear(X, y, [0])
    assert abs(m.coefficients[0] - 0.174) <= 0.01
    assert abs(m.residuals @ X[:, 0]) <= 1e-6 * np.linalg.norm(m.residuals) * np.linalg.norm(X[:, 0])


def test_linear_rank_deficient():
    with pytest.raises(RankDeficient):
        fit_linear(np.ones((5, 1)), np.arange(5.0))


def test_forest_constant_target():
    X = np.random.default_rng(0).normal(size=(30, 3))
    f = fit_forest(X, np.full(30, 7.0), B=20, seed=1)
    assert np.all(f.predict(X) == 7.0)


def test_single_tree_interpolates():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    tree = fit_tree(X, y, min_leaf=1)
    assert np.allclose(tree.predict(X), y)
    f = fit_forest(X, y, B=1, mtry=3, min_leaf=1, bootstrap=False)
    assert np.allclose(f.predict(X), y)


def test_forest_is_mean_of_trees():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 4))
    f = fit_forest(X, X[:, 0] + rng.normal(size=50), B=15, seed=3)
    assert np.array_equal(f.predict(X), f.tree_predictions(X).mean(axis=0))
    for b, rows in enumerate(f.bootstrap):
        assert not np.any(f.oob_mask(50)[b, rows])


def test_step_target_oob_rmse():
    rng = np.random.default_rng(3)
    X = rng.uniform(0, 1, size=(200, 2))
    y = np.where(X[:, 0] > 0.5, 10.0, 0.0) + rng.normal(0, 0.5, 200)
    f = fit_forest(X, y, B=200, seed=4)
    assert oob_rmse_curve(f, X, y)[-1] < np.std(y)


def test_row_order_invariance_without_bootstrap():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    y = X[:, 1] ** 2 + rng.normal(size=60)
    perm = rng.permutation(60)
    a = fit_forest(X, y, B=5, mtry=3, min_leaf=3, bootstrap=False, seed=2)
    b = fit_forest(X[perm], y[perm], B=5, mtry=3, min_leaf=3, bootstrap=False, seed=2)
    grid = rng.normal(size=(100, 3))
    assert np.allclose(a.predict(grid), b.predict(grid))


def test_combined_is_linear_plus_forest():
    rows = prediction_dataset(1, n=60)
    X = FeatureEncoder.fit(rows).transform(rows)
    y = targets(rows, "post_event")
    m = fit_lr_rf(X, y, B=20, seed=5)
    assert np.array_equal(m.predict(X), m.linear.predict(X) + m.residual_forest.predict(X))


def test_purely_linear_data_leaves_little_residual():
    rng = np.random.default_rng(6)
    X = rng.uniform(0, 100, size=(80, 3))
    y = 5 + 3 * X[:, 0]
    m = fit_lr_rf(X, y, B=20, seed=1)
    assert np.allclose(m.residual_forest.predict(X), 0, atol=1e-8)


def test_loocv_mean_predictor():
    class Mean:
        def __init__(self, y):
            self.v = float(np.mean(y))

        def predict(self, X):
            return np.full(len(X), self.v)

    rep = loocv(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]), ModelSpec("lr"), fit=lambda X, y, s: Mean(y))
    assert rep.predictions.tolist() == [2.5, 2.0, 1.5]
    assert rep.mae == pytest.approx(1.0)


def test_loocv_exact_model_is_zero():
    x = np.arange(1.0, 8.0)[:, None]
    rep = loocv(x, 3 * x[:, 0] + 1, ModelSpec("lr"))
    assert rep.mae == pytest.approx(0, abs=1e-9) and rep.rmse == pytest.approx(0, abs=1e-9)


def test_metrics_definitions():
    assert metrics([100.0], [90.0]).mape == pytest.approx(0.10)
    rep = metrics([0.0, 10.0, 20.0], [1.0, 12.0, 17.0])
    assert rep.mape_excluded == 1
    assert rep.rmse ** 2 == pytest.approx(rep.mse, rel=1e-9)


def test_lr_rf_beats_lr_on_nonlinear_residual():
    rows = prediction_dataset(2, n=80)
    X = FeatureEncoder.fit(rows).transform(rows)
    y = targets(rows, "post_event")
    lr = loocv(X, y, ModelSpec("lr"))
    combo = loocv(X, y, ModelSpec("lr+rf", B=25, seed=3))
    assert combo.mape < lr.mape
    again = loocv(X, y, ModelSpec("lr+rf", B=25, seed=3))
    assert np.array_equal(combo.predictions, again.predictions)


def test_importance_constant_feature_zero_and_signal_first():
    rng = np.random.default_rng(7)
    X = np.column_stack([rng.uniform(size=150), rng.uniform(size=150), np.ones(150)])
    y = 10 * X[:, 0] + rng.normal(0, 0.5, 150)
    f = fit_forest(X, y, B=60, mtry=2, seed=8)
    imp = permutation_importance(f, X, y, seed=9)
    assert imp[2] == 0.0 and imp[0] > imp[1]


def test_attendance_most_important():
    rows = prediction_dataset(3)
    enc = FeatureEncoder.fit(rows)
    X = enc.transform(rows)
    y = targets(rows, "post_event")
    f = fit_forest(X, y, B=100, seed=1)
    imp = permutation_importance(f, X, y, seed=2)
    assert enc.names[int(np.argmax(imp))] == "attendance"


@pytest.mark.parametrize("kind", ["lr", "rf", "lr+rf"])
def test_model_json_round_trip(kind):
    rows = prediction_dataset(4, n=40)
    enc = FeatureEncoder.fit(rows)
    X = enc.transform(rows)
    y = targets(rows, "post_event")
    m = fit_model(ModelSpec(kind, B=5), X, y)
    back = loads_model(dumps_model(m, enc))
    assert np.array_equal(back.predict(X), m.predict(X))
