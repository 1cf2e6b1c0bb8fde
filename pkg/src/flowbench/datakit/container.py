"""On-disk case directory: meta.json, frames.bin (<f4 [T][C][H][W]) and mask.bin (u1 [H][W])."""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from ..errors import (ContainerError, MetaParseError, SchemaVersionError, ShapeMismatchError,
                      TruncatedFrameError)
from .record import SCHEMA_VERSION, CaseMeta, CaseRecord

META, FRAMES, MASK = "meta.json", "frames.bin", "mask.bin"


class ChecksumError(ContainerError):
    pass


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _meta_body(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(record: CaseRecord, directory) -> Path:
    """Write atomically: build in a sibling temp dir, then rename into place."""
    record.validate()
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    frames = record.frames.astype("<f4", copy=False).tobytes()
    mask = record.mask.astype("u1", copy=False).tobytes()
    meta = record.meta.to_json()
    meta["frames_sha256"] = _digest(frames)
    meta["mask_sha256"] = _digest(mask)
    meta["meta_sha256"] = _digest(_meta_body(meta))

    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        (tmp / FRAMES).write_bytes(frames)
        (tmp / MASK).write_bytes(mask)
        (tmp / META).write_text(json.dumps(meta, indent=1), encoding="utf-8")
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def read_meta(directory) -> CaseMeta:
    path = Path(directory) / META
    if not path.exists():
        raise ContainerError(f"{path} not found")
    try:
        raw = json.loads(path.read_bytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MetaParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise MetaParseError(f"{path}: top level is not an object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema_version {version!r}, reader supports {SCHEMA_VERSION}")
    stored = raw.pop("meta_sha256", None)
    if stored != _digest(_meta_body(raw)):
        raise MetaParseError(f"{path}: metadata checksum mismatch (file edited or corrupted)")
    try:
        meta = CaseMeta.from_json(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise MetaParseError(f"{path}: missing or malformed field: {exc}") from exc
    meta.flags = dict(meta.flags)
    meta.flags["_checksums"] = {"frames": raw.get("frames_sha256"), "mask": raw.get("mask_sha256")}
    return meta


def read_container(directory, verify: bool = True) -> CaseRecord:
    directory = Path(directory)
    meta = read_meta(directory)
    sums = meta.flags.pop("_checksums")
    t, c = meta.n_frames, len(meta.channels)
    h, w = meta.resolution
    expected = t * c * h * w * 4
    fpath, mpath = directory / FRAMES, directory / MASK
    if not fpath.exists() or not mpath.exists():
        raise TruncatedFrameError(f"{directory}: frames.bin or mask.bin missing")
    frames_raw = fpath.read_bytes()
    if len(frames_raw) < expected:
        raise TruncatedFrameError(f"{fpath}: {len(frames_raw)} bytes, expected {expected} for [{t},{c},{h},{w}]")
    if len(frames_raw) != expected:
        raise ShapeMismatchError(f"{fpath}: {len(frames_raw)} bytes, meta implies {expected}")
    mask_raw = mpath.read_bytes()
    if len(mask_raw) != h * w:
        raise ShapeMismatchError(f"{mpath}: {len(mask_raw)} bytes, meta implies {h * w}")
    if verify and (_digest(frames_raw) != sums["frames"] or _digest(mask_raw) != sums["mask"]):
        raise ChecksumError(f"{directory}: frame or mask checksum mismatch")
    frames = np.frombuffer(frames_raw, dtype="<f4").reshape(t, c, h, w).astype(np.float32)
    mask = np.frombuffer(mask_raw, dtype="u1").reshape(h, w).copy()
    return CaseRecord(meta=meta, frames=frames, mask=mask)


def list_cases(root) -> list[Path]:
    """Case directories directly under ``root``, sorted by name."""
    root = Path(root)
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / META).exists() and not p.name.startswith("."))
