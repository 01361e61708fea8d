"""Two-step feature scaling: standardize, then min-max to the unit interval.

Both steps use training statistics only; values seen at predict time may fall
outside [0, 1] and are deliberately not clipped.  Zero-variance features map
to 0 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray
    post_min: np.ndarray  # min/max of the standardized training columns
    post_max: np.ndarray


def fit_scaler(x_train: np.ndarray) -> ScalerParams:
    x_train = np.asarray(x_train, dtype=np.float64)
    if x_train.size == 0:
        raise InputError("cannot fit a scaler on an empty matrix")
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    z = (x_train - mean) / safe
    z[:, std == 0] = 0.0
    return ScalerParams(mean=mean, std=std, post_min=z.min(axis=0), post_max=z.max(axis=0))


def apply_scaler(params: ScalerParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    safe_std = np.where(params.std > 0, params.std, 1.0)
    z = (x - params.mean) / safe_std
    span = params.post_max - params.post_min
    safe_span = np.where(span > 0, span, 1.0)
    out = (z - params.post_min) / safe_span
    out[:, (params.std == 0) | (span == 0)] = 0.0
    return out
