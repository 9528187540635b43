"""BMT1 binary container: named arrays with a JSON header.

Layout: 4-byte magic ``BMT1``, 4-byte little-endian header length, UTF-8 JSON
header, then raw row-major little-endian array payloads in header order.
Supported dtypes are ``u8`` and ``f32``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BMT1"

_DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4")}
_DTYPE_NAMES = {np.dtype("uint8"): "u8", np.dtype("float32"): "f32"}


class ContainerError(ValueError):
    """Malformed BMT1 data; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


def _coerce(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype == np.bool_ or arr.dtype == np.uint8:
        return arr.astype(np.uint8)
    return np.ascontiguousarray(arr, dtype=np.float32)


def write_container(path, arrays: dict[str, np.ndarray],
                    units: dict[str, str] | None = None,
                    horizon_seconds: float | None = None,
                    meta: dict | None = None) -> None:
    """Write named arrays plus optional metadata to a BMT1 file.

    ``units`` maps array names to a unit string (default ``"none"``).
    The output is byte-deterministic for identical inputs.
    """
    units = units or {}
    entries = []
    payloads = []
    for name, arr in arrays.items():
        arr = _coerce(arr)
        entries.append({
            "name": name,
            "dtype": _DTYPE_NAMES[np.dtype(arr.dtype.name)],
            "shape": list(arr.shape),
            "units": units.get(name, "none"),
            "horizon_seconds": horizon_seconds,
        })
        payloads.append(np.ascontiguousarray(arr).tobytes())
    header = {"arrays": entries, "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in payloads:
            fh.write(p)


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a BMT1 file; returns (arrays, header dict).

    Raises ContainerError with the offending byte offset on malformed input.
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ContainerError("bad magic, expected BMT1", 0)
    if len(data) < 8:
        raise ContainerError("truncated header length field", 4)
    (hlen,) = struct.unpack("<I", data[4:8])
    if 8 + hlen > len(data):
        raise ContainerError("header extends past end of file", 8)
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ContainerError("header is not valid UTF-8 JSON", 8) from None
    if not isinstance(header, dict) or "arrays" not in header:
        raise ContainerError("header missing 'arrays' list", 8)
    arrays = {}
    offset = 8 + hlen
    for entry in header["arrays"]:
        try:
            dtype = _DTYPES[entry["dtype"]]
            shape = tuple(int(s) for s in entry["shape"])
            name = entry["name"]
        except (KeyError, TypeError, ValueError):
            raise ContainerError("malformed array entry in header", 8) from None
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(data):
            raise ContainerError(f"payload for '{name}' truncated", offset)
        arrays[name] = np.frombuffer(
            data[offset:offset + nbytes], dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return arrays, header
