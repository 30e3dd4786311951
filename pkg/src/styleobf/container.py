"""Versioned binary container for named arrays plus a JSON header.

Layout (all integers little-endian)::

    magic        8 bytes   b"STYOBF\\x00\\x01"
    version      uint32
    header_len   uint64
    header       UTF-8 JSON, header_len bytes
    payload      concatenated raw array bytes

The header carries a ``"meta"`` object (caller-defined) and a ``"tensors"``
list of ``{name, dtype, shape, offset, nbytes}`` entries where ``offset`` is
relative to the start of the payload. Arrays are stored C-contiguous in
little-endian byte order, so a round trip is bitwise exact.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = b"STYOBF\x00\x01"
FORMAT_VERSION = 1


class ContainerError(IOError):
    """The file is not a readable container."""


def save(path, meta: dict, arrays: Dict[str, np.ndarray], kind: str) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "meta": meta, "tensors": entries},
                        sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)
    tmp.replace(path)


def load(path, kind: str | None = None) -> Tuple[dict, Dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) + 12 or buf[:len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: not a styleobf container (bad magic)")
    version, hlen = struct.unpack_from("<IQ", buf, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
    start = len(MAGIC) + 12
    if len(buf) < start + hlen:
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(buf[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: corrupt header ({exc})") from None
    if kind is not None and header.get("kind") != kind:
        raise ContainerError(f"{path}: expected a {kind!r} container, found {header.get('kind')!r}")
    base = start + hlen
    arrays = {}
    for e in header["tensors"]:
        lo = base + e["offset"]
        hi = lo + e["nbytes"]
        if hi > len(buf):
            raise ContainerError(f"{path}: truncated payload at tensor {e['name']!r}")
        arr = np.frombuffer(buf[lo:hi], dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return header["meta"], arrays
