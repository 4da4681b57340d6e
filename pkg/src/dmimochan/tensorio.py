"""Binary channel-tensor persistence.

Layout: 4-byte magic ``DMCH``, format version (u16), M, T, F (u32 each),
all little-endian; payload of interleaved 32-bit float (re, im) pairs in
anchor-major, snapshot, tone order; 8-byte CRC-64 trailer over the payload.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np
from numba import njit

MAGIC = b"DMCH"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")

#: CRC-64/XZ parameters (reflected ECMA-182 polynomial)
_CRC64_POLY = 0xC96C5795D7870F42


class TensorFormatError(ValueError):
    """Malformed header or unsupported version."""


class TensorCorruptionError(ValueError):
    """Payload truncated or checksum mismatch."""


def _crc64_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint64)
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table[i] = crc
    return table


_TABLE = _crc64_table()


@njit(cache=True)
def _crc64_kernel(buf, crc, table):  # pragma: no cover - numba kernel
    for i in range(buf.size):
        crc = table[(crc ^ buf[i]) & np.uint64(0xFF)] ^ (crc >> np.uint64(8))
    return crc


def crc64(data: bytes | bytearray | memoryview, crc: int = 0) -> int:
    """CRC-64/XZ of ``data``; pass the previous value to stream."""
    buf = np.frombuffer(data, dtype=np.uint8)
    acc = np.uint64(crc ^ 0xFFFFFFFFFFFFFFFF)
    acc = _crc64_kernel(buf, acc, _TABLE)
    return int(acc ^ np.uint64(0xFFFFFFFFFFFFFFFF))


def write_tensor(path, data: np.ndarray, version: int = VERSION) -> None:
    """Write an (M, T, F) complex tensor; the write is atomic."""
    data = np.ascontiguousarray(np.asarray(data).astype(np.complex64))
    if data.ndim != 3:
        raise TensorFormatError("tensor must be (M, T, F)")
    M, T, F = data.shape
    payload = data.astype("<c8").tobytes()
    header = _HEADER.pack(MAGIC, version, M, T, F)
    trailer = struct.pack("<Q", crc64(payload))
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
            fh.write(trailer)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_tensor(path) -> np.ndarray:
    """Read a tensor file back, verifying dimensions and checksum."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size + 8:
        raise TensorCorruptionError(f"{path}: truncated file")
    magic, version, M, T, F = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    expected = M * T * F * 8
    payload = raw[_HEADER.size:_HEADER.size + expected]
    if len(payload) != expected or len(raw) != _HEADER.size + expected + 8:
        raise TensorCorruptionError(f"{path}: payload length mismatch")
    (stored,) = struct.unpack_from("<Q", raw, _HEADER.size + expected)
    if crc64(payload) != stored:
        raise TensorCorruptionError(f"{path}: checksum mismatch")
    data = np.frombuffer(payload, dtype="<c8").reshape(M, T, F)
    return data.astype(np.complex64)
