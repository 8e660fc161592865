"""Reader/writer for the UBEM binary embedding-matrix format.

Layout (all integers little-endian):

    magic   4 bytes  b"UBEM"
    version u16      currently 1
    flags   u16      reserved, written as 0
    dim     u32
    rows    u64
    data    rows*dim float32, row-major
    labels  u8 present flag; if 1, `rows` strings, each a u32 byte length
            followed by UTF-8 bytes

Payload floats round-trip bit-identically: the reader hands back the stored
float32 bytes and the writer emits float32 verbatim.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .serialize import atomic_write_bytes
from .vectors import EmbeddingMatrix

MAGIC = b"UBEM"
VERSION = 1

_HEADER = struct.Struct("<HHIQ")  # version, flags, dim, rows
_U32 = struct.Struct("<I")


def write_ubem_stream(stream, matrix: EmbeddingMatrix) -> None:
    """Serialize one matrix into an open binary stream."""
    data = np.ascontiguousarray(matrix.vectors, dtype="<f4")
    stream.write(MAGIC)
    stream.write(_HEADER.pack(VERSION, 0, matrix.dim, matrix.rows))
    stream.write(data.tobytes())
    if matrix.labels is None:
        stream.write(b"\x00")
    else:
        stream.write(b"\x01")
        for label in matrix.labels:
            raw = label.encode("utf-8")
            stream.write(_U32.pack(len(raw)))
            stream.write(raw)


def read_ubem_stream(stream) -> EmbeddingMatrix:
    """Parse one matrix from an open binary stream, consuming exactly its bytes."""
    magic = stream.read(4)
    if magic != MAGIC:
        raise ValueError(f"not a UBEM payload (magic {magic!r})")
    header = stream.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ValueError("truncated UBEM header")
    version, _flags, dim, rows = _HEADER.unpack(header)
    if version != VERSION:
        raise ValueError(f"unsupported UBEM version {version}")
    want = rows * dim * 4
    payload = stream.read(want)
    if len(payload) != want:
        raise ValueError(f"truncated UBEM payload: {len(payload)} of {want} bytes")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).copy()

    labels: list[str] | None = None
    flag = stream.read(1)
    if flag == b"\x01":
        labels = []
        for _ in range(rows):
            raw_len = stream.read(_U32.size)
            if len(raw_len) != _U32.size:
                raise ValueError("truncated UBEM label block")
            (n,) = _U32.unpack(raw_len)
            raw = stream.read(n)
            if len(raw) != n:
                raise ValueError("truncated UBEM label string")
            labels.append(raw.decode("utf-8"))
    elif flag not in (b"", b"\x00"):
        raise ValueError(f"bad UBEM label flag {flag!r}")
    return EmbeddingMatrix(vectors, labels)


def write_ubem(path, matrix: EmbeddingMatrix) -> None:
    buf = io.BytesIO()
    write_ubem_stream(buf, matrix)
    atomic_write_bytes(Path(path), buf.getvalue())


def read_ubem(path) -> EmbeddingMatrix:
    with open(path, "rb") as f:
        return read_ubem_stream(f)
