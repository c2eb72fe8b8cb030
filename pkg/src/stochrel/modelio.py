"""Versioned model files.

JSON with a format tag and version; coefficient blocks round-trip bit-exactly
(shortest-repr float serialization is lossless for IEEE doubles).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .glam import GlamModel
from .spce import SpceModel

__all__ = ["save_model", "load_model"]

_FORMATS = {"glam-model": GlamModel, "spce-model": SpceModel}
_VERSION = 1


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def save_model(model, path) -> None:
    if isinstance(model, GlamModel):
        fmt = "glam-model"
    elif isinstance(model, SpceModel):
        fmt = "spce-model"
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    doc = {"format": fmt, "version": _VERSION, **model.to_dict()}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, default=_json_default)


def load_model(path):
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    fmt = doc.get("format")
    if fmt not in _FORMATS:
        raise ValueError(f"{path}: unknown model format {fmt!r}")
    version = doc.get("version")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported model version {version!r}")
    return _FORMATS[fmt].from_dict(doc)
