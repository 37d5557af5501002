#!/usr/bin/env python
# -*- coding: utf-8 -*-

__license__ = "MIT"

import json
import os
import struct
import tempfile
import zlib

import numpy as np

from rlforge.workflow.scripts.utilities import (
    ChecksumMismatch,
    FormatError,
    FormatVersionMismatch,
    StorageError,
)

# scalar-kind byte of an array block
KIND_CODES = {"float64": 0, "int64": 1, "bool": 2}
KIND_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("bool")}

CRC_SIZE = 4


class BinaryWriter(object):
    """
    Little-endian writer for the versioned container formats (TSBF, TSPL, TSCK).
    """

    def __init__(self, magic, version):
        self.chunks = [magic, struct.pack("<I", version)]

    def u8(self, value):
        self.chunks.append(struct.pack("<B", value))

    def u32(self, value):
        self.chunks.append(struct.pack("<I", value))

    def u64(self, value):
        self.chunks.append(struct.pack("<Q", value))

    def f64(self, value):
        self.chunks.append(struct.pack("<d", value))

    def raw(self, data):
        self.u64(len(data))
        self.chunks.append(bytes(data))

    def block(self, data):
        """Bytes whose size the reader already knows, without a length prefix."""
        self.chunks.append(bytes(data))

    def text(self, value):
        encoded = value.encode("utf-8")
        self.u32(len(encoded))
        self.chunks.append(encoded)

    def json(self, value):
        self.text(json.dumps(value, sort_keys=True))

    def array(self, values):
        """Write the scalar kind, the shape and the little-endian payload of an array."""
        values = np.ascontiguousarray(values)
        kind = values.dtype.name

        if kind not in KIND_CODES:
            raise FormatError(f"Unsupported array kind '{kind}'")

        self.u8(KIND_CODES[kind])
        self.u8(values.ndim)
        for dim in values.shape:
            self.u64(dim)

        self.chunks.append(values.astype(KIND_DTYPES[KIND_CODES[kind]], copy=False).tobytes())

    def named_array(self, name, values):
        self.text(name)
        self.array(values)

    def getvalue(self):
        body = b"".join(self.chunks)
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class BinaryReader(object):
    """
    Reader for data written by `BinaryWriter`. The CRC32 trailer and the magic are checked up front.
    """

    def __init__(self, data, magic, version):
        if len(data) < len(magic) + 4 + CRC_SIZE:
            raise ChecksumMismatch("File is truncated")

        body, trailer = data[:-CRC_SIZE], data[-CRC_SIZE:]

        if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", trailer)[0]:
            raise ChecksumMismatch("CRC32 of the file contents does not match the stored checksum")

        if body[: len(magic)] != magic:
            raise FormatError(f"Expected magic {magic!r}, found {body[:len(magic)]!r}")

        self.data = body
        self.offset = len(magic)

        found = self.u32()
        if found != version:
            raise FormatVersionMismatch(f"Unsupported {magic.decode()} version {found} (expected {version})")

    def _take(self, size):
        if self.offset + size > len(self.data):
            raise FormatError("Unexpected end of data")

        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u8(self):
        return struct.unpack("<B", self._take(1))[0]

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self):
        return struct.unpack("<d", self._take(8))[0]

    def raw(self):
        return self._take(self.u64())

    def block(self, size):
        return self._take(size)

    def text(self):
        return self._take(self.u32()).decode("utf-8")

    def json(self):
        return json.loads(self.text())

    def array(self):
        code = self.u8()

        if code not in KIND_DTYPES:
            raise FormatError(f"Unknown scalar kind byte {code}")

        dtype = KIND_DTYPES[code]
        shape = tuple(self.u64() for _ in range(self.u8()))
        count = int(np.prod(shape, dtype=np.int64))

        values = np.frombuffer(self._take(count * dtype.itemsize), dtype=dtype).reshape(shape)
        return values.astype(dtype.newbyteorder("="), copy=True)

    def named_array(self):
        return self.text(), self.array()

    def at_end(self):
        return self.offset == len(self.data)


def atomic_write(path, data):
    """
    Write `data` to a temp file next to `path` and rename it into place.
    """
    directory = os.path.dirname(os.path.abspath(path))
    tmp_path = None

    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
        with os.fdopen(fd, "wb") as fout:
            fout.write(data)
            fout.flush()
            os.fsync(fout.fileno())
        os.replace(tmp_path, path)
    except OSError as error:
        if tmp_path is not None and os.path.exists(tmp_path):
            os.remove(tmp_path)

        raise StorageError(f"Unable to write '{path}': {error}")


def read_bytes(path):
    try:
        with open(path, "rb") as fin:
            return fin.read()
    except OSError as error:
        raise StorageError(f"Unable to read '{path}': {error}")
