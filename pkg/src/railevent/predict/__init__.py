"""Event ridership prediction: features, OLS, random forests, LOOCV."""

from .features import (FeatureEncoder, FeatureRow, NoSportingEvent, build_feature_rows, group_by_day,
                       ridership_targets, targets)
from .forest import ForestModel, Tree, fit_forest, fit_tree, oob_predictions, oob_rmse_curve, permutation_importance
from .linear import LinearModel, RankDeficient, fit_linear
from .models import (CombinedModel, MetricsReport, ModelSpec, dumps_model, fit_lr_rf, fit_model, loads_model,
                     loocv, metrics)

__all__ = [
    "FeatureEncoder", "FeatureRow", "NoSportingEvent", "build_feature_rows", "group_by_day", "ridership_targets",
    "targets", "ForestModel", "Tree", "fit_forest", "fit_tree", "oob_predictions", "oob_rmse_curve",
    "permutation_importance", "LinearModel", "RankDeficient", "fit_linear", "CombinedModel", "MetricsReport",
    "ModelSpec", "dumps_model", "fit_lr_rf", "fit_model", "loads_model", "loocv", "metrics",
]
