"""Bit-exact `.ttfr` checkpoint container.

Layout (all integers little-endian, normative regardless of host):

    bytes 0..3    magic "TTFR"
    bytes 4..7    version, u32 (= 1)
    bytes 8..15   header_len, u64
    16..16+hlen   UTF-8 JSON header, space-padded so the payload starts
                  on an 8-byte file boundary
    rest          payload: raw little-endian float32 tensor data

The header is `{"config": ..., "tensors": [...]}` serialized with
lexicographic key order and no whitespace; each tensors entry carries
name, shape, dtype ("f32"), offset, byte_len. Offsets are measured from
the payload start, are 8-byte aligned, strictly increasing, and
non-overlapping. The tensors array lists every tensor the config
requires exactly once, in the normative naming-scheme order; a tied
lm_head is not stored. Unknown header keys are ignored for forward
compatibility; unknown tensor names are rejected. Rewriting the same
model yields a byte-identical file.
"""

import json
import struct
from pathlib import Path

import numpy as np

from ttfr import model
from ttfr.errors import (
    CheckpointDataError,
    CheckpointFormatError,
    CheckpointLayoutError,
    CheckpointSchemaError,
    ParameterError,
)
from ttfr.model import ModelConfig

MAGIC = b"TTFR"
VERSION = 1

_ENTRY_KEYS = ("name", "shape", "dtype", "offset", "byte_len")


def _align8(n):
    return (n + 7) & ~7


def save(path, cfg, w):
    """Write a checkpoint; deterministic byte-for-byte for equal models."""
    cfg.validate()
    model.validate_weights(cfg, w)
    if w.dtype != np.float32:
        raise ParameterError("checkpoints store float32 weights only")

    entries = []
    blobs = []
    offset = 0
    for name, arr in model.named_tensors(cfg, w):
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "f32",
            "offset": offset,
            "byte_len": len(data),
        })
        blobs.append((offset, data))
        offset = _align8(offset + len(data))

    header = json.dumps({"config": cfg.to_dict(), "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    header += b" " * ((-(16 + len(header))) % 8)

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        cursor = 0
        for off, data in blobs:
            fh.write(b"\x00" * (off - cursor))
            fh.write(data)
            cursor = off + len(data)


def _parse_header(raw):
    if len(raw) < 16:
        raise CheckpointFormatError("file too short for a checkpoint header")
    if raw[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {raw[:4]!r}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}")
    header_len = struct.unpack("<Q", raw[8:16])[0]
    if 16 + header_len > len(raw):
        raise CheckpointFormatError("header length runs past end of file")
    try:
        header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unparseable header: {exc}") from exc
    if not isinstance(header, dict) or "config" not in header or "tensors" not in header:
        raise CheckpointFormatError("header must carry config and tensors")
    try:
        cfg = ModelConfig.from_dict(header["config"])
    except (ParameterError, TypeError) as exc:
        raise CheckpointFormatError(f"bad config: {exc}") from exc
    return cfg, header["tensors"], raw[16 + header_len:]


def _validate_entries(cfg, entries, payload_len):
    expected = model.expected_shapes(cfg)
    seen = {}
    prev_end = 0
    prev_offset = -1
    for entry in entries:
        if not isinstance(entry, dict) or any(k not in entry for k in _ENTRY_KEYS):
            raise CheckpointSchemaError(f"tensor entry missing keys: {entry!r}")
        name = entry["name"]
        if name not in expected:
            raise CheckpointSchemaError(f"unknown tensor name {name!r}")
        if name in seen:
            raise CheckpointSchemaError(f"duplicate tensor name {name!r}")
        if entry["dtype"] != "f32":
            raise CheckpointSchemaError(
                f"tensor {name!r}: unsupported dtype {entry['dtype']!r}"
            )
        shape = tuple(entry["shape"])
        if shape != expected[name]:
            raise CheckpointSchemaError(
                f"tensor {name!r}: shape {shape} != expected {expected[name]}"
            )
        offset, byte_len = entry["offset"], entry["byte_len"]
        size = int(np.prod(shape)) * 4
        if byte_len != size:
            raise CheckpointLayoutError(
                f"tensor {name!r}: byte_len {byte_len} != shape size {size}"
            )
        if offset % 8 != 0:
            raise CheckpointLayoutError(f"tensor {name!r}: offset {offset} unaligned")
        if offset <= prev_offset:
            raise CheckpointLayoutError(f"tensor {name!r}: offsets not increasing")
        if offset < prev_end:
            raise CheckpointLayoutError(f"tensor {name!r}: overlapping offsets")
        if offset + byte_len > payload_len:
            raise CheckpointLayoutError(f"tensor {name!r}: payload out of bounds")
        seen[name] = (shape, offset, byte_len)
        prev_offset, prev_end = offset, offset + byte_len
    missing = [name for name in expected if name not in seen]
    if missing:
        raise CheckpointSchemaError(f"missing tensors: {', '.join(missing)}")
    return seen


def load(path):
    """Read and fully validate a checkpoint; returns (config, weights)."""
    raw = Path(path).read_bytes()
    cfg, entries, payload = _parse_header(raw)
    table = _validate_entries(cfg, entries, len(payload))

    arrays = {}
    for name, (shape, offset, byte_len) in table.items():
        flat = np.frombuffer(payload, dtype="<f4", count=byte_len // 4, offset=offset)
        arr = flat.astype(np.float32).reshape(shape)
        if not np.isfinite(arr).all():
            raise CheckpointDataError(f"non-finite tensor {name!r}")
        arrays[name] = arr

    weights = model._build_weights(cfg, lambda name, shape: arrays[name])
    return cfg, weights
