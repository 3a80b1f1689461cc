"""Deterministic named-parameter archive used for model checkpoints.

Layout (little-endian): magic ``CKPT``, version u16, u32 JSON length, JSON
config record (UTF-8, sorted keys), u32 entry count, then entries sorted by
name: u16 name length, name bytes, u8 dtype code, u8 ndim, ndim * u32 dims,
raw array bytes. Saving the same content always produces identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8", 3: "<u1", 4: "<i4"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def save_archive(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<H", CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name])
            dtype = arr.dtype.newbyteorder("<")
            if dtype not in _DTYPE_CODES:
                raise FormatError(f"unsupported checkpoint dtype {arr.dtype} for {name}")
            data = np.asarray(arr, dtype=dtype)  # tobytes() always emits C order
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", _DTYPE_CODES[dtype], data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_archive(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()

    def take(n, offset):
        if offset + n > len(raw):
            raise FormatError(f"{path}: truncated archive")
        return raw[offset : offset + n], offset + n

    chunk, pos = take(4, 0)
    if chunk != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {chunk!r}")
    chunk, pos = take(2, pos)
    (version,) = struct.unpack("<H", chunk)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    chunk, pos = take(4, pos)
    (json_len,) = struct.unpack("<I", chunk)
    chunk, pos = take(json_len, pos)
    config = json.loads(chunk.decode("utf-8"))
    chunk, pos = take(4, pos)
    (n_entries,) = struct.unpack("<I", chunk)

    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        chunk, pos = take(2, pos)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, pos = take(name_len, pos)
        name = chunk.decode("utf-8")
        chunk, pos = take(2, pos)
        code, ndim = struct.unpack("<BB", chunk)
        if code not in _DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        chunk, pos = take(4 * ndim, pos)
        shape = struct.unpack(f"<{ndim}I", chunk)
        dtype = np.dtype(_DTYPES[code])
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        chunk, pos = take(dtype.itemsize * count, pos)
        tensors[name] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
    return config, tensors
