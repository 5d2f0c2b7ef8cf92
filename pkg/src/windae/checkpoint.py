"""Checkpoint files: a JSON header plus base64 little-endian float64 arrays."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    kind: str
    architecture: dict
    params: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def to_json(self) -> str:
        arrays = []
        for name, arr in self.params.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            arrays.append({
                "name": name,
                "shape": list(arr.shape),
                "data": base64.b64encode(arr.tobytes()).decode("ascii"),
            })
        doc = {
            "format_version": self.format_version,
            "kind": self.kind,
            "architecture": self.architecture,
            "metadata": self.metadata,
            "params": arrays,
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelCheckpoint":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('format_version')!r}")
        params = {}
        for entry in doc["params"]:
            raw = base64.b64decode(entry["data"])
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            shape = tuple(entry["shape"])
            if arr.size != int(np.prod(shape, dtype=int)):
                raise CheckpointError(f"array {entry['name']} has {arr.size} values for shape {shape}")
            params[entry["name"]] = arr.reshape(shape)
        return cls(kind=doc["kind"], architecture=doc["architecture"], params=params,
                   metadata=doc["metadata"], format_version=doc["format_version"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def params_to_dict(params) -> dict[str, np.ndarray]:
    return {p.name: p.value.copy() for p in params}


def load_into(params, arrays: dict[str, np.ndarray]) -> None:
    names = [p.name for p in params]
    if sorted(names) != sorted(arrays):
        raise CheckpointError(f"parameter names differ: model {names}, checkpoint {list(arrays)}")
    for p in params:
        if arrays[p.name].shape != p.value.shape:
            raise CheckpointError(f"{p.name}: shape {arrays[p.name].shape} != model {p.value.shape}")
        p.value[...] = arrays[p.name]
