"""Binary containers: model checkpoints and windowed-feature dumps.

Both formats are deliberately timestamp-free so identical runs produce
identical bytes; run metadata with wall-clock content belongs in the
sidecar JSON the CLI writes next to its outputs.

Checkpoint layout (little-endian):

    8 bytes   magic  b"SWPSLRU\\x01"
    4 bytes   u32 header length
    N bytes   UTF-8 JSON header: format_version, model dims, metadata,
              array manifest (name, dtype, shape, offset, nbytes)
    payload   raw array bytes at the manifest offsets

Feature-dump record layout (one record per sample, back to back, offsets
kept in a CSV index):

    4 bytes   magic  b"SWPF"
    2 bytes   u16 format version
    2 bytes   reserved (zero)
    4 bytes   u32 n_windows (K)
    4 bytes   u32 dim
    K*dim*8   float64 row-major data
"""

from __future__ import annotations

import csv
import json
import os
import struct

import numpy as np

from . import lru
from .errors import StructuralError

CKPT_MAGIC = b"SWPSLRU\x01"
FEAT_MAGIC = b"SWPF"
FORMAT_VERSION = 1


def _model_arrays(model: lru.LruModel) -> dict:
    out = dict(lru.parameters(model))
    for i, blk in enumerate(model.blocks):
        out[f"blocks.{i}.norm.running_mean"] = blk.norm.running_mean
        out[f"blocks.{i}.norm.running_var"] = blk.norm.running_var
    return out


def _atomic_write(path: str, data: bytes):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_model(path, model: lru.LruModel, meta: dict | None = None):
    """Serialise the model (parameters plus running stats) atomically."""
    arrays = _model_arrays(model)
    manifest = []
    payload = bytearray()
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append(
            {
                "name": name,
                "dtype": "<f8",
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "model": {
            "in_dim": model.in_dim,
            "hidden": model.hidden,
            "state_dim": model.state_dim,
            "n_blocks": len(model.blocks),
            "n_classes": model.n_classes,
            "dropout": model.dropout,
        },
        "meta": meta or {},
        "arrays": manifest,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = CKPT_MAGIC + struct.pack("<I", len(head)) + head + bytes(payload)
    _atomic_write(str(path), blob)


def load_model(path):
    """Rebuild a model from a checkpoint; returns (model, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CKPT_MAGIC:
        raise StructuralError(f"not a checkpoint file (bad magic): {path}")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    start = 12
    if start + hlen > len(blob):
        raise StructuralError(f"checkpoint header truncated: {path}")
    header = json.loads(blob[start : start + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise StructuralError(f"unsupported checkpoint version {header.get('format_version')}")
    dims = header["model"]
    model = lru.build_model(
        np.random.default_rng(0),
        in_dim=dims["in_dim"],
        hidden=dims["hidden"],
        state_dim=dims["state_dim"],
        n_blocks=dims["n_blocks"],
        n_classes=dims["n_classes"],
        dropout=dims["dropout"],
    )
    arrays = _model_arrays(model)
    payload = blob[start + hlen :]
    seen = set()
    for entry in header["arrays"]:
        name = entry["name"]
        if name not in arrays:
            raise StructuralError(f"checkpoint contains unknown array {name!r}")
        target = arrays[name]
        if list(target.shape) != entry["shape"]:
            raise StructuralError(
                f"shape mismatch for {name!r}: checkpoint {entry['shape']} vs model {list(target.shape)}"
            )
        off, nb = entry["offset"], entry["nbytes"]
        if off + nb > len(payload):
            raise StructuralError(f"checkpoint payload truncated at array {name!r}")
        target[...] = np.frombuffer(payload[off : off + nb], dtype="<f8").reshape(target.shape)
        seen.add(name)
    missing = set(arrays) - seen
    if missing:
        raise StructuralError(f"checkpoint missing arrays: {sorted(missing)}")
    return model, header["meta"]


def write_features(path, index_path, windows, tags):
    """Dump per-sample window matrices plus a CSV offset index."""
    if len(windows) != len(tags):
        raise ValueError("windows and tags must have equal length")
    blob = bytearray()
    rows = []
    for i, (w, tag) in enumerate(zip(windows, tags)):
        arr = np.ascontiguousarray(w, dtype="<f8")
        if arr.ndim != 2:
            raise ValueError(f"record {i} is not a 2-D matrix")
        rows.append([i, tag, len(blob), arr.shape[0], arr.shape[1]])
        blob.extend(FEAT_MAGIC)
        blob.extend(struct.pack("<HHII", FORMAT_VERSION, 0, arr.shape[0], arr.shape[1]))
        blob.extend(arr.tobytes())
    _atomic_write(str(path), bytes(blob))
    with open(index_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "tag", "offset", "n_windows", "dim"])
        writer.writerows(rows)


def read_features(path, index_path):
    """Load a feature dump; returns (list of (K, dim) arrays, list of tags)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    windows = []
    tags = []
    with open(index_path, newline="") as fh:
        for row in csv.DictReader(fh):
            off = int(row["offset"])
            if blob[off : off + 4] != FEAT_MAGIC:
                raise StructuralError(f"bad record magic at offset {off}")
            version, _, k, dim = struct.unpack_from("<HHII", blob, off + 4)
            if version != FORMAT_VERSION:
                raise StructuralError(f"unsupported feature record version {version}")
            start = off + 16
            end = start + k * dim * 8
            if end > len(blob):
                raise StructuralError(f"feature record truncated at offset {off}")
            windows.append(np.frombuffer(blob[start:end], dtype="<f8").reshape(k, dim).copy())
            tags.append(row["tag"])
    return windows, tags
