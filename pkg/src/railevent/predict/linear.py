"""Ordinary least squares."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class RankDeficient(ValueError):
    pass


@dataclass
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    columns: list[int] = field(default_factory=list)  # design-matrix columns used
    names: list[str] = field(default_factory=list)
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.intercept + X[:, self.columns] @ self.coefficients


def fit_linear(X: np.ndarray, y: np.ndarray, columns=None, names=None) -> LinearModel:
    """OLS with an intercept on the chosen columns of ``X`` (all by default)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    cols = list(range(X.shape[1])) if columns is None else list(columns)
    A = np.column_stack([np.ones(len(y)), X[:, cols]])
    if len(y) < 2 or np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankDeficient(f"design matrix of shape {A.shape} is not full column rank")
    beta, *_ = np.linalg.lstsq(A, y, rcond=None)
    if not np.all(np.isfinite(beta)):
        raise RankDeficient("non-finite coefficients")
    return LinearModel(float(beta[0]), beta[1:], cols, list(names or []), y - A @ beta)
