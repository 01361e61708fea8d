"""k-nearest-neighbours with genuine-fraction probabilities.

Distances are Euclidean on the scaled features; distance ties resolve to the
lowest training index (stable sort), which pins behaviour across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KnnModel:
    k: int
    x_train: np.ndarray
    y_train: np.ndarray  # 0/1 labels

    @property
    def n_features(self) -> int:
        return self.x_train.shape[1]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        # squared distances preserve the ordering, so no sqrt needed
        d2 = (
            (x**2).sum(axis=1)[:, None]
            + (self.x_train**2).sum(axis=1)[None, :]
            - 2.0 * x @ self.x_train.T
        )
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            nearest = np.argsort(d2[i], kind="stable")[: self.k]
            out[i] = self.y_train[nearest].mean()
        return out


def fit_knn(k: int, x_scaled: np.ndarray, y: np.ndarray) -> KnnModel:
    return KnnModel(k=int(k), x_train=np.array(x_scaled, dtype=np.float64), y_train=np.array(y, dtype=np.float64))
