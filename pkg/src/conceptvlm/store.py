"""Versioned binary container: JSON manifest header + named little-endian float32 arrays.

Used for the frozen language model, training checkpoints, and feature banks.
Writes are atomic (tmp file + rename) and byte-deterministic for identical inputs.
"""

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

MAGIC = b"CVLM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sII")  # magic, format version, manifest length


@dataclass
class Bundle:
    kind: str
    meta: dict
    arrays: dict[str, np.ndarray]  # float32, C-order


def save_bundle(path: str, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a bundle; arrays are cast to little-endian float32, row-major."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps(
        {"kind": kind, "meta": meta, "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_bundle(path: str, expect_kind: str | None = None) -> Bundle:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValidationError(f"{path}: truncated header")
        magic, version, mlen = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported format version {version}")
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        data = fh.read()
    arrays = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).copy()
    kind = manifest["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise ValidationError(f"{path}: expected kind {expect_kind!r}, found {kind!r}")
    return Bundle(kind=kind, meta=manifest["meta"], arrays=arrays)
