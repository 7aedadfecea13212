"""Versioned JSON model files for the forward, inverse and trajectory models.

Floats are written as decimal text that round-trips 64-bit values exactly,
so a save/load cycle reproduces inference bit for bit. Loaders reject
unknown format versions and corrupt files outright; no partial models.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ModelLoadError
from .models import ForwardModel, InverseModel, Standardizer
from .tm import TrajectoryModel

FORMAT_VERSION = 1
_KINDS = ("forward_model", "inverse_model", "trajectory_model")


def _kind_of(model) -> str:
    if isinstance(model, ForwardModel):
        return "forward_model"
    if isinstance(model, InverseModel):
        return "inverse_model"
    if isinstance(model, TrajectoryModel):
        return "trajectory_model"
    raise ModelLoadError(f"cannot serialize {type(model).__name__}")


def _params_dict(model) -> dict:
    out = {}
    for li, layer in enumerate(model.layers()):
        for name, p in layer.params():
            out[f"layer{li}.{name}"] = {
                "shape": list(p.shape),
                "data": p.reshape(-1).tolist(),  # row-major
            }
    return out


def _apply_params(model, params: dict) -> None:
    for li, layer in enumerate(model.layers()):
        for name, p in layer.params():
            key = f"layer{li}.{name}"
            if key not in params:
                raise ModelLoadError(f"missing parameter {key!r}")
            entry = params[key]
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if arr.shape != p.shape:
                raise ModelLoadError(
                    f"parameter {key!r} shape {arr.shape} != expected {p.shape}"
                )
            p[:] = arr


def save_model(model, path: str, provenance: dict | None = None) -> None:
    kind = _kind_of(model)
    if kind == "forward_model":
        arch = {"hidden": list(model.hidden)}
    elif kind == "inverse_model":
        arch = {"hidden": list(model.hidden)}
    else:
        arch = model.arch_dict()
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "architecture": arch,
        "standardizer": model.standardizer.to_dict(),
        "params": _params_dict(model),
    }
    if provenance:
        doc["provenance"] = provenance
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"cannot read model file {path!r}: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelLoadError(
            f"unknown format_version {version!r}; supported versions: "
            f"{FORMAT_VERSION}"
        )
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise ModelLoadError(f"unknown model kind {kind!r}")
    try:
        sd = Standardizer.from_dict(doc["standardizer"])
        arch = doc["architecture"]
        if kind == "forward_model":
            model = ForwardModel(sd, hidden=tuple(arch["hidden"]))
        elif kind == "inverse_model":
            model = InverseModel(sd, hidden=tuple(arch["hidden"]))
        else:
            head = arch["heads"][0]
            model = TrajectoryModel(
                sd,
                horizon=arch["T"],
                n_r=arch["n_r"],
                d_r=arch["d_r"],
                d_h=arch["d_h"],
                d_hy=head["d_hy"],
            )
        _apply_params(model, doc["params"])
    except ModelLoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"corrupt model file {path!r}: {exc}") from exc
    return model
