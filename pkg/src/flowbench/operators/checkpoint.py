"""Model checkpoints: spec.json, weights.bin (<f4, declaration order) and manifest.json."""
from __future__ import annotations

import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from ..errors import ContainerError
from .models import Model, build_model
from .spec import ModelSpec

SPEC, WEIGHTS, MANIFEST = "spec.json", "weights.bin", "manifest.json"


def save_checkpoint(model: Model, directory) -> Path:
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, arr in model.state_arrays().items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append(dict(name=name, offset=offset, shape=list(arr.shape)))
        chunks.append(data)
        offset += len(data)
    spec = dict(model.spec.to_json(), seed=int(model.seed))
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        (tmp / SPEC).write_text(json.dumps(spec, indent=1))
        (tmp / WEIGHTS).write_bytes(b"".join(chunks))
        (tmp / MANIFEST).write_text(json.dumps(dict(dtype="<f4", total_bytes=offset, tensors=entries), indent=1))
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def load_checkpoint(directory, dtype=np.float32) -> Model:
    directory = Path(directory)
    try:
        spec_raw = json.loads((directory / SPEC).read_text())
        manifest = json.loads((directory / MANIFEST).read_text())
        blob = (directory / WEIGHTS).read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise ContainerError(f"unreadable checkpoint {directory}: {exc}") from exc
    if len(blob) != manifest["total_bytes"]:
        raise ContainerError(f"{directory / WEIGHTS}: {len(blob)} bytes, manifest says {manifest['total_bytes']}")
    model = build_model(ModelSpec.from_json(spec_raw), seed=int(spec_raw.get("seed", 0)), dtype=dtype)
    expected = {n: a.shape for n, a in model.state_arrays().items()}
    arrays = {}
    for e in manifest["tensors"]:
        shape = tuple(e["shape"])
        if expected.get(e["name"]) != shape:
            raise ContainerError(f"checkpoint tensor {e['name']} {shape} does not fit the model")
        n = int(np.prod(shape)) * 4
        arrays[e["name"]] = np.frombuffer(blob, dtype="<f4", count=n // 4, offset=e["offset"]).reshape(shape)
    missing = set(expected) - set(arrays)
    if missing:
        raise ContainerError(f"checkpoint lacks tensors {sorted(missing)}")
    model.load_state_arrays(arrays)
    return model
