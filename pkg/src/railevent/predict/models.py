"""Model specs, the linear-plus-residual-forest model, LOOCV metrics and JSON storage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .forest import ForestModel, Tree, fit_forest
from .linear import LinearModel, fit_linear

MODEL_FORMAT = "railevent-model"
MODEL_VERSION = 1


@dataclass
class CombinedModel:
    linear: LinearModel
    residual_forest: ForestModel

    def predict(self, X) -> np.ndarray:
        return self.linear.predict(X) + self.residual_forest.predict(X)


@dataclass
class ModelSpec:
    """What to fit: ``kind`` is "lr", "rf" or "lr+rf".

    ``linear_columns`` are the design columns the linear part uses
    (attendance only by default, column 0).
    """

    kind: str = "lr+rf"
    B: int = 800
    mtry: int | None = None
    min_leaf: int = 5
    seed: int = 0
    linear_columns: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.kind not in ("lr", "rf", "lr+rf"):
            raise ValueError(f"unknown model kind {self.kind!r}")


def fit_lr_rf(X, y, B: int = 800, mtry: int | None = None, min_leaf: int = 5, seed: int = 0,
              linear_columns=(0,), names=None) -> CombinedModel:
    """Linear fit on ``linear_columns``; a forest on every column fits its residuals."""
    lin = fit_linear(X, y, linear_columns, names)
    forest = fit_forest(X, lin.residuals, B, mtry, min_leaf, seed, names=names)
    return CombinedModel(lin, forest)


def fit_model(spec: ModelSpec, X, y, seed: int | None = None, names=None):
    seed = spec.seed if seed is None else seed
    if spec.kind == "lr":
        return fit_linear(X, y, spec.linear_columns, names)
    if spec.kind == "rf":
        return fit_forest(X, y, spec.B, spec.mtry, spec.min_leaf, seed, names=names)
    return fit_lr_rf(X, y, spec.B, spec.mtry, spec.min_leaf, seed, spec.linear_columns, names)


@dataclass
class MetricsReport:
    mae: float
    mape: float
    mse: float
    rmse: float
    n: int
    mape_excluded: int = 0
    failed_folds: list[int] = field(default_factory=list)
    predictions: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def to_dict(self) -> dict:
        return {"MAE": self.mae, "MAPE": self.mape, "MSE": self.mse, "RMSE": self.rmse, "n": self.n,
                "mape_excluded": self.mape_excluded, "failed_folds": list(self.failed_folds)}


def metrics(y, y_hat) -> MetricsReport:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    err = y - y_hat
    nz = y != 0
    mse = float(np.mean(err ** 2))
    mape = float(np.mean(np.abs(err[nz]) / np.abs(y[nz]))) if nz.any() else float("nan")
    return MetricsReport(float(np.mean(np.abs(err))), mape, mse, float(np.sqrt(mse)), len(y),
                         int(np.sum(~nz)), [], y_hat)


def fold_seed(base_seed: int, fold: int) -> int:
    """A 63-bit seed for one fold, derived from (base_seed, fold)."""
    return int(np.random.SeedSequence([base_seed, fold]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def loocv(X, y, spec: ModelSpec, fit=None) -> MetricsReport:
    """Leave-one-out predictions and their metrics; failed folds are reported and excluded.

    ``fit(X, y, seed)`` overrides the model built from ``spec``; it must return
    an object with ``predict``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        raise ValueError("LOOCV needs at least 3 rows")
    fit = fit or (lambda Xt, yt, s: fit_model(spec, Xt, yt, s))
    preds = np.full(n, np.nan)
    failed = []
    for i in range(n):
        keep = np.arange(n) != i
        try:
            model = fit(X[keep], y[keep], fold_seed(spec.seed, i))
        except (ValueError, np.linalg.LinAlgError):
            failed.append(i)
            continue
        preds[i] = float(model.predict(X[i:i + 1])[0])
    ok = ~np.isnan(preds)
    rep = metrics(y[ok], preds[ok])
    rep.failed_folds = failed
    rep.predictions = preds
    return rep


# ---------------------------------------------------------------------------
# storage


def _linear_doc(m: LinearModel) -> dict:
    return {"intercept": m.intercept, "coefficients": [float(c) for c in m.coefficients],
            "columns": [int(c) for c in m.columns], "names": list(m.names)}


def _forest_doc(f: ForestModel) -> dict:
    return {
        "mtry": f.mtry, "min_leaf": f.min_leaf, "seed": f.seed, "names": list(f.names),
        "bootstrap": f.bootstrap.tolist(),
        "trees": [{"feature": t.feature.tolist(), "threshold": t.threshold.tolist(), "left": t.left.tolist(),
                   "right": t.right.tolist(), "value": t.value.tolist()} for t in f.trees],
    }


def model_to_dict(model, encoder=None) -> dict:
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    if isinstance(model, LinearModel):
        doc.update(kind="lr", linear=_linear_doc(model))
    elif isinstance(model, ForestModel):
        doc.update(kind="rf", forest=_forest_doc(model))
    elif isinstance(model, CombinedModel):
        doc.update(kind="lr+rf", linear=_linear_doc(model.linear), forest=_forest_doc(model.residual_forest))
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if encoder is not None:
        doc["encoder"] = encoder.to_dict()
    return doc


def _linear_from(doc: dict) -> LinearModel:
    return LinearModel(doc["intercept"], np.array(doc["coefficients"], dtype=float), list(doc["columns"]),
                       list(doc.get("names", [])))


def _forest_from(doc: dict) -> ForestModel:
    trees = [Tree(np.array(t["feature"], dtype=np.int64), np.array(t["threshold"], dtype=float),
                  np.array(t["left"], dtype=np.int64), np.array(t["right"], dtype=np.int64),
                  np.array(t["value"], dtype=float)) for t in doc["trees"]]
    boot = np.array(doc["bootstrap"], dtype=np.int64).reshape(len(trees), -1)
    return ForestModel(trees, doc["mtry"], doc["min_leaf"], doc["seed"], boot, list(doc.get("names", [])))


def model_from_dict(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    kind = doc["kind"]
    if kind == "lr":
        return _linear_from(doc["linear"])
    if kind == "rf":
        return _forest_from(doc["forest"])
    return CombinedModel(_linear_from(doc["linear"]), _forest_from(doc["forest"]))


def dumps_model(model, encoder=None) -> str:
    return json.dumps(model_to_dict(model, encoder), sort_keys=True, separators=(",", ":"))


def loads_model(text: str):
    return model_from_dict(json.loads(text))
