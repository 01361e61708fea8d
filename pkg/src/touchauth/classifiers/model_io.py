"""Versioned model serialization with exact prediction round-trips.

Models are written as .npz archives: fitted arrays stay binary (bit exact)
and scalar metadata travels in an embedded JSON header.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from . import ClassifierSpec, TrainedModel
from .knn import KnnModel
from .scaler import ScalerParams
from .svm import SvmModel
from .trees import ForestModel, GbModel

FORMAT_VERSION = 1


def _meta(model: TrainedModel) -> dict:
    meta = {
        "format": FORMAT_VERSION,
        "family": model.spec.family,
        "params": model.spec.params,
        "seed": model.spec.seed,
        "has_scaler": model.scaler is not None,
    }
    inner = model.model
    if isinstance(inner, KnnModel):
        meta["k"] = inner.k
    elif isinstance(inner, SvmModel):
        meta.update(c=inner.c, gamma=inner.gamma, bias=inner.bias,
                    platt_a=inner.platt_a, platt_b=inner.platt_b, n_iter=inner.n_iter)
    elif isinstance(inner, ForestModel):
        meta["kind"] = inner.kind
        meta["n_features"] = inner.n_features
    elif isinstance(inner, GbModel):
        meta.update(init_score=inner.init_score, learning_rate=inner.learning_rate,
                    n_features=inner.n_features)
    else:  # pragma: no cover
        raise TypeError(type(inner))
    return meta


def dump_model(model: TrainedModel) -> bytes:
    arrays = {"meta": np.frombuffer(json.dumps(_meta(model)).encode("utf-8"), dtype=np.uint8)}
    if model.scaler is not None:
        arrays.update(
            scaler_mean=model.scaler.mean, scaler_std=model.scaler.std,
            scaler_post_min=model.scaler.post_min, scaler_post_max=model.scaler.post_max,
        )
    inner = model.model
    if isinstance(inner, KnnModel):
        arrays.update(x_train=inner.x_train, y_train=inner.y_train)
    elif isinstance(inner, SvmModel):
        arrays.update(support_x=inner.support_x, support_coef=inner.support_coef,
                      alpha=inner.alpha, y_signed=inner.y_signed)
    elif isinstance(inner, (ForestModel, GbModel)):
        arrays.update(
            node_feature=inner.node_feature, node_threshold=inner.node_threshold,
            node_left=inner.node_left, node_right=inner.node_right,
            node_value=inner.node_value, n_nodes=inner.n_nodes,
        )
        if isinstance(inner, GbModel):
            arrays["train_loss"] = inner.train_loss
    # npz layout written by hand so entry timestamps are fixed and identical
    # fits serialize to identical bytes
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            payload = io.BytesIO()
            np.lib.format.write_array(payload, np.asarray(arr))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload.getvalue())
    return buf.getvalue()


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_bytes(dump_model(model))


def load_model_bytes(blob: bytes) -> TrainedModel:
    data = np.load(io.BytesIO(blob))
    meta = json.loads(bytes(data["meta"]).decode("utf-8"))
    if meta["format"] != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {meta['format']}")
    spec = ClassifierSpec(family=meta["family"], params=meta["params"], seed=meta["seed"])
    scaler = None
    if meta["has_scaler"]:
        scaler = ScalerParams(
            mean=data["scaler_mean"], std=data["scaler_std"],
            post_min=data["scaler_post_min"], post_max=data["scaler_post_max"],
        )
    family = meta["family"]
    if family == "knn":
        inner = KnnModel(k=meta["k"], x_train=data["x_train"], y_train=data["y_train"])
    elif family == "svm":
        inner = SvmModel(
            c=meta["c"], gamma=meta["gamma"], support_x=data["support_x"],
            support_coef=data["support_coef"], bias=meta["bias"],
            platt_a=meta["platt_a"], platt_b=meta["platt_b"],
            alpha=data["alpha"], y_signed=data["y_signed"], n_iter=meta["n_iter"],
        )
    elif family in ("rf", "et"):
        inner = ForestModel(
            kind=meta["kind"], node_feature=data["node_feature"],
            node_threshold=data["node_threshold"], node_left=data["node_left"],
            node_right=data["node_right"], node_value=data["node_value"],
            n_nodes=data["n_nodes"], n_features=meta["n_features"],
        )
    elif family == "gb":
        inner = GbModel(
            node_feature=data["node_feature"], node_threshold=data["node_threshold"],
            node_left=data["node_left"], node_right=data["node_right"],
            node_value=data["node_value"], n_nodes=data["n_nodes"],
            init_score=meta["init_score"], learning_rate=meta["learning_rate"],
            train_loss=data["train_loss"], n_features=meta["n_features"],
        )
    else:  # pragma: no cover
        raise ValueError(family)
    return TrainedModel(spec=spec, scaler=scaler, model=inner)


def load_model(path: str | Path) -> TrainedModel:
    return load_model_bytes(Path(path).read_bytes())
