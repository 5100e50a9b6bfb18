"""Versioned binary container for named float32 tensors.

Layout (all little-endian)::

    magic    4 bytes  b"NUCV"
    version  uint32   (1)
    kind     uint16 length + utf-8 bytes (e.g. "patch-sampler")
    count    uint32   number of tensors
    table    per tensor: uint16 name length, name bytes, uint8 ndim, ndim x uint32
    payload  concatenated float32 data, in table order, C order
"""

import struct
from collections import OrderedDict

import numpy as np

from .errors import ParseError

MAGIC = b"NUCV"
VERSION = 1


def save_tensors(path, tensors, kind=""):
    tensors = OrderedDict((k, np.asarray(v)) for k, v in tensors.items())
    header = bytearray(MAGIC)
    header += struct.pack("<I", VERSION)
    kb = kind.encode("utf-8")
    header += struct.pack("<H", len(kb)) + kb
    header += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        header += struct.pack("<H", len(nb)) + nb
        header += struct.pack("<B", arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as f:
        f.write(bytes(header))
        for arr in tensors.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_tensors(path, kind=None):
    """Return ``(kind, OrderedDict[name, float64 array])``."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ParseError("bad magic bytes", path)
    off = 4

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise ParseError("truncated header", path)
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", path)
    (klen,) = take("<H")
    file_kind = blob[off:off + klen].decode("utf-8")
    off += klen
    if kind is not None and file_kind != kind:
        raise ParseError(f"expected kind {kind!r}, found {file_kind!r}", path)
    (count,) = take("<I")
    table = []
    for _ in range(count):
        (nlen,) = take("<H")
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        table.append((name, tuple(shape)))
    out = OrderedDict()
    for name, shape in table:
        n = int(np.prod(shape, dtype=np.int64))
        if off + 4 * n > len(blob):
            raise ParseError(f"truncated payload for {name!r}", path)
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape)
        out[name] = arr.astype(np.float64)
        off += 4 * n
    if off != len(blob):
        raise ParseError("trailing bytes after payload", path)
    return file_kind, out
