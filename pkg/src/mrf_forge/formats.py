"""Binary container helpers shared by the dictionary, model and map files.

Every container follows the same envelope: a 4-byte ASCII magic, a u32
format version, a format-specific payload, and a trailing 8-byte FNV-1a
checksum computed over everything before it. All integers and floats are
little-endian. Complex arrays are stored as interleaved (re, im) pairs.
"""

import hashlib
import struct

import numpy as np

from .errors import ChecksumError, FormatError, VersionError

__all__ = [
    "fnv1a64",
    "PayloadWriter",
    "PayloadReader",
    "open_payload",
    "sha256_bytes",
    "sha256_file",
]

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data):
    """64-bit FNV-1a hash of a bytes-like object."""
    h = _FNV_OFFSET
    for b in memoryview(data).cast("B"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


class PayloadWriter:
    """Accumulates a little-endian payload and finalizes it with a checksum."""

    def __init__(self, magic, version):
        if len(magic) != 4:
            raise ValueError("magic must be exactly 4 bytes")
        self._buf = bytearray(magic)
        self.u32(version)

    def u8(self, value):
        self._buf += struct.pack("<B", value)

    def u32(self, value):
        self._buf += struct.pack("<I", value)

    def u64(self, value):
        self._buf += struct.pack("<Q", value)

    def f64(self, value):
        self._buf += struct.pack("<d", value)

    def raw(self, data):
        self._buf += data

    def f64_array(self, values):
        self._buf += np.ascontiguousarray(values, dtype="<f8").tobytes()

    def f32_array(self, values):
        self._buf += np.ascontiguousarray(values, dtype="<f4").tobytes()

    def complex_f32_array(self, values):
        # interleaved (re, im) pairs
        flat = np.ascontiguousarray(values, dtype="<c8")
        self._buf += flat.tobytes()

    def complex_f64_array(self, values):
        flat = np.ascontiguousarray(values, dtype="<c16")
        self._buf += flat.tobytes()

    def json_block(self, obj):
        """Length-prefixed UTF-8 JSON blob."""
        import json

        raw = json.dumps(obj, sort_keys=True).encode("utf-8")
        self.u32(len(raw))
        self.raw(raw)

    def tobytes(self):
        """Payload plus trailing FNV-1a checksum."""
        return bytes(self._buf) + struct.pack("<Q", fnv1a64(self._buf))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.tobytes())


class PayloadReader:
    """Sequential reader over a checksum-verified payload.

    Running past the end of the payload means the header declared sizes
    inconsistent with the file content, which is a format error (the
    checksum already ruled out plain corruption).
    """

    def __init__(self, payload, name="file"):
        self._buf = payload
        self._pos = 0
        self._name = name

    def _take(self, n):
        end = self._pos + n
        if end > len(self._buf):
            raise FormatError(
                f"{self._name}: payload ended while reading {n} bytes "
                f"at offset {self._pos}"
            )
        out = self._buf[self._pos : end]
        self._pos = end
        return out

    def u8(self):
        return struct.unpack("<B", self._take(1))[0]

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self):
        return struct.unpack("<d", self._take(8))[0]

    def raw(self, n):
        return self._take(n)

    def f64_array(self, count):
        return np.frombuffer(self._take(8 * count), dtype="<f8").copy()

    def f32_array(self, count):
        return np.frombuffer(self._take(4 * count), dtype="<f4").copy()

    def complex_f32_array(self, count):
        return np.frombuffer(self._take(8 * count), dtype="<c8").copy()

    def complex_f64_array(self, count):
        return np.frombuffer(self._take(16 * count), dtype="<c16").copy()

    def json_block(self):
        import json

        n = self.u32()
        return json.loads(self._take(n).decode("utf-8"))

    def expect_end(self):
        if self._pos != len(self._buf):
            raise FormatError(
                f"{self._name}: {len(self._buf) - self._pos} unexpected "
                "trailing bytes in payload"
            )


def open_payload(path, magic, version):
    """Read a container file, verify envelope, return a PayloadReader.

    The reader is positioned just past the magic and version fields.
    Raises FormatError on a wrong magic, ChecksumError on truncation or a
    checksum mismatch, VersionError on an unsupported version.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    name = str(path)
    if len(data) < 4 + 4 + 8:
        raise ChecksumError(f"{name}: file too short ({len(data)} bytes)")
    if data[:4] != magic:
        raise FormatError(
            f"{name}: bad magic {data[:4]!r}, expected {magic!r}"
        )
    payload, trailer = data[:-8], data[-8:]
    want = struct.unpack("<Q", trailer)[0]
    got = fnv1a64(payload)
    if got != want:
        raise ChecksumError(
            f"{name}: checksum mismatch (stored {want:#018x}, "
            f"computed {got:#018x}); file is corrupt or truncated"
        )
    reader = PayloadReader(payload, name=name)
    reader.raw(4)  # past magic
    got_version = reader.u32()
    if got_version != version:
        raise VersionError(
            f"{name}: unsupported format version {got_version}, "
            f"expected {version}"
        )
    return reader


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
