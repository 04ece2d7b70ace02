"""Checkpoint persistence: versioned header, JSON manifest, flat payload.

Layout:

    b"MRGRP-CKPT-v1\\n"
    8-byte little-endian manifest length
    manifest JSON (utf-8): {"tensors": [{"name","shape","offset"}...], "meta": {...}}
    payload: concatenated little-endian float64 values, offsets in bytes

Tensors load back in manifest order, bit-identical to what was saved.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

HEADER = b"MRGRP-CKPT-v1\n"


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(path: str | Path, params: dict[str, Tensor],
                    meta: dict | None = None) -> None:
    entries = []
    chunks = []
    offset = 0
    for name, t in params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(t.data.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"tensors": entries, "meta": meta or {}}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(HEADER)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for c in chunks:
            fh.write(c)


def load_checkpoint(path: str | Path) -> tuple[dict[str, Tensor], dict]:
    with open(path, "rb") as fh:
        head = fh.read(len(HEADER))
        if head != HEADER:
            raise CheckpointError(f"{path}: bad checkpoint header {head!r}")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        try:
            manifest = json.loads(fh.read(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable manifest: {exc}") from exc
        payload = fh.read()
    params: dict[str, Tensor] = {}
    for entry in manifest.get("tensors", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(payload):
            raise CheckpointError(
                f"{path}: tensor '{entry['name']}' extends past end of payload")
        data = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape)
        params[entry["name"]] = Tensor(data.copy(), requires_grad=True)
    return params, manifest.get("meta", {})
