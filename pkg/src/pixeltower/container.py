"""Named-tensor container: JSON manifest plus a raw little-endian buffer.

A container is a pair of files sharing a base path: ``<base>.json`` lists
each tensor's name, shape, dtype, and byte offset into ``<base>.bin``,
which holds the concatenated row-major little-endian data. The manifest
carries an optional free-form ``meta`` dict (model configs, modality
tags, run digests).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DataError

_DTYPES = {"float64": "<f8", "float32": "<f4", "int64": "<i8", "uint8": "|u1"}


def save_container(base_path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    """Write tensors (name -> array) as <base>.json + <base>.bin."""
    base = os.fspath(base_path)
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        shape = list(arr.shape)  # before ascontiguousarray, which promotes 0-d to 1-d
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.name
        if dtype not in _DTYPES:
            raise DataError(f"unsupported dtype {dtype} for tensor {name!r}")
        raw = arr.astype(_DTYPES[dtype]).tobytes()
        entries.append(
            {
                "name": name,
                "shape": shape,
                "dtype": dtype,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = {"tensors": entries, "meta": meta or {}}
    with open(base + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(base + ".bin", "wb") as fh:
        fh.write(b"".join(blobs))


def load_container(base_path):
    """Read a container back; returns (tensors dict, meta dict)."""
    base = os.fspath(base_path)
    try:
        with open(base + ".json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        with open(base + ".bin", "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read container {base!r}: {exc}") from exc
    tensors = {}
    for entry in manifest["tensors"]:
        dtype = entry["dtype"]
        if dtype not in _DTYPES:
            raise DataError(f"unsupported dtype {dtype} in manifest")
        start, n = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(blob[start : start + n], dtype=_DTYPES[dtype])
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(dtype)
    return tensors, manifest.get("meta", {})
