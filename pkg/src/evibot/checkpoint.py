"""Exact JSON round-tripping of named parameter tensors.

Floats are serialized through Python's shortest-repr text form, which
reparses to the identical double, so save followed by load reproduces
every parameter bit-for-bit.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .errors import DataError, ValidationError


def params_to_payload(params: dict[str, ad.Tensor]) -> dict:
    return {
        name: {"shape": list(t.data.shape), "data": [float(v) for v in t.data.reshape(-1)]}
        for name, t in params.items()
    }


def params_from_payload(payload: dict) -> dict[str, ad.Tensor]:
    out = {}
    for name, entry in payload.items():
        shape = tuple(entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ValidationError(f"checkpoint entry '{name}': data does not fill shape {shape}")
        out[name] = ad.Tensor(data.reshape(shape))
    return out


def save_checkpoint(path, kind: str, meta: dict, params: dict[str, ad.Tensor]) -> None:
    doc = {"format": f"evibot-{kind}-v1", "meta": meta, "params": params_to_payload(params)}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_checkpoint(path, kind: str) -> tuple[dict, dict[str, ad.Tensor]]:
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"checkpoint {path} is not valid JSON") from e
    expected = f"evibot-{kind}-v1"
    if doc.get("format") != expected:
        raise ValidationError(
            f"checkpoint {path}: format {doc.get('format')!r}, expected {expected!r}"
        )
    return doc["meta"], params_from_payload(doc["params"])
