"""Binary container shared by parameter, trajectory and cluster files.

Layout::

    b"PSHAPE01"                      8-byte magic
    uint64 little-endian             header length in bytes
    UTF-8 JSON header                sorted keys, compact separators
    float64 little-endian payload    arrays back to back, offsets in header

The header always carries ``kind`` and ``arrays`` (a list of
``{"name", "shape", "offset"}`` entries, offsets in bytes from the payload
start). Everything else in the header is caller metadata.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"PSHAPE01"


class ContainerError(ValueError):
    pass


def dumps(kind: str, arrays: dict, meta: dict | None = None) -> bytes:
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype="<f8", order="C")  # keeps 0-d shapes
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blob = a.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = dict(meta or {})
    if "kind" in header or "arrays" in header:
        raise ContainerError("meta may not define 'kind' or 'arrays'")
    header["kind"] = kind
    header["arrays"] = entries
    raw = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(raw)) + raw + b"".join(blobs)


def loads(buf: bytes, expect_kind: str | None = None) -> tuple[dict, dict]:
    if buf[:8] != MAGIC:
        raise ContainerError("bad magic: not a PSHAPE01 container")
    (hlen,) = struct.unpack("<Q", buf[8:16])
    header = json.loads(buf[16:16 + hlen].decode("utf-8"))
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise ContainerError(f"expected kind {expect_kind!r}, found {header.get('kind')!r}")
    base = 16 + hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + entry["offset"]
        arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8", count=count, offset=start).reshape(shape).astype(np.float64)
    meta = {k: v for k, v in header.items() if k != "arrays"}
    return meta, arrays


def save(path, kind: str, arrays: dict, meta: dict | None = None) -> None:
    data = dumps(kind, arrays, meta)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path, expect_kind: str | None = None) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        return loads(fh.read(), expect_kind)
