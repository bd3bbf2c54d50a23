"""Tensor and parameter-bundle serialization.

GSAT file layout (normative, little-endian throughout):

    bytes 0-3   magic ``GSAT``
    byte  4     format version, currently 1
    byte  5     dtype tag: 0 = float64, 1 = float32
    byte  6     rank
    next 8*rank unsigned 64-bit extents
    rest        raw row-major element data

Parameter bundles are directories holding one GSAT file per tensor plus a
``manifest.json`` mapping dotted parameter names to file names:

    {"format": "gsa-params", "version": 1,
     "tensors": {"group2.block1.gsa.w_q": "group2.block1.gsa.w_q.gsat", ...}}
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GSAT"
VERSION = 1
_DTYPE_TAGS = {np.dtype("<f8"): 0, np.dtype("<f4"): 1}
_TAG_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "gsa-params"


class TensorFileError(ValueError):
    """A GSAT file or parameter bundle is malformed."""


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    key = np.dtype(arr.dtype.str.replace(">", "<"))
    if key not in _DTYPE_TAGS:
        raise TensorFileError(f"unsupported dtype {arr.dtype}; use float64 or float32")
    if arr.ndim > 255:
        raise TensorFileError("rank exceeds the 1-byte rank field")
    header = MAGIC + struct.pack("<BBB", VERSION, _DTYPE_TAGS[key], arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=key).tobytes(order="C")


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != MAGIC:
        raise TensorFileError("not a GSAT file (bad magic)")
    if len(blob) < 7:
        raise TensorFileError("truncated GSAT header")
    version, tag, rank = struct.unpack("<BBB", blob[4:7])
    if version != VERSION:
        raise TensorFileError(f"unsupported GSAT version {version}")
    if tag not in _TAG_DTYPES:
        raise TensorFileError(f"unknown dtype tag {tag}")
    offset = 7 + 8 * rank
    if len(blob) < offset:
        raise TensorFileError("truncated GSAT extents")
    shape = struct.unpack(f"<{rank}Q", blob[7:offset]) if rank else ()
    dtype = _TAG_DTYPES[tag]
    count = int(np.prod(shape)) if shape else 1
    expected = offset + count * dtype.itemsize
    if len(blob) != expected:
        raise TensorFileError(
            f"payload size {len(blob) - offset} does not match shape {shape}"
        )
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).copy()


def save_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(arr))


def load_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def save_bundle(dirpath, params: dict[str, np.ndarray]) -> None:
    """Write a directory of GSAT files plus the manifest."""
    root = Path(dirpath)
    root.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name in sorted(params):
        fname = f"{name}.gsat"
        save_tensor(root / fname, params[name])
        entries[name] = fname
    manifest = {"format": MANIFEST_FORMAT, "version": VERSION, "tensors": entries}
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_bundle(dirpath) -> dict[str, np.ndarray]:
    root = Path(dirpath)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise TensorFileError(f"no {MANIFEST_NAME} in {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != MANIFEST_FORMAT:
        raise TensorFileError(f"unexpected manifest format {manifest.get('format')!r}")
    if manifest.get("version") != VERSION:
        raise TensorFileError(f"unsupported bundle version {manifest.get('version')!r}")
    tensors = manifest.get("tensors")
    if not isinstance(tensors, dict):
        raise TensorFileError("manifest 'tensors' must be an object")
    return {name: load_tensor(root / fname) for name, fname in tensors.items()}
