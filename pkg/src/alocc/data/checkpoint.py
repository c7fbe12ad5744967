"""Binary model checkpoints.

Layout (little-endian)::

    b"ALOC" | u8 version
    u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 dtype (0=f32, 1=f64) | u8 rank | rank x u32 dims | raw data
    u32 config length | UTF-8 JSON config
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ChecksumError, FormatError, VersionError

MAGIC = b"ALOC"
VERSION = 1
SUPPORTED_VERSIONS = (1,)
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


@dataclass
class Checkpoint:
    """Named arrays plus a JSON-serializable config block.

    ``config`` conventionally holds ``r_config``, ``d_config``,
    ``train_config`` and ``seed``.
    """

    tensors: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: int = VERSION


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<B", ckpt.version), struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        code = _DTYPE_CODES.get(arr.dtype)
        if code is None:
            raise FormatError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    cfg = json.dumps(ckpt.config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<I", len(cfg)))
    parts.append(cfg)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if len(buf) < len(MAGIC) + 1 + 4 or buf[:4] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version = buf[4]
    if version not in SUPPORTED_VERSIONS:
        raise VersionError(f"checkpoint version {version} unsupported; supported versions: "
                           f"{SUPPORTED_VERSIONS[0]}..{SUPPORTED_VERSIONS[-1]}")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("checkpoint checksum mismatch")
    r = _Reader(body)
    r.take(5)
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, rank = r.unpack("<BB")
        if code not in _DTYPES:
            raise FormatError(f"tensor {name!r}: unknown dtype code {code}")
        dims = r.unpack(f"<{rank}I")
        dtype = _DTYPES[code]
        n = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(n * dtype.itemsize), dtype=dtype).reshape(dims)
        tensors[name] = data.astype(dtype.newbyteorder("="))
    (cfg_len,) = r.unpack("<I")
    config = json.loads(r.take(cfg_len).decode("utf-8"))
    if r.pos != len(body):
        raise FormatError("trailing bytes after config block")
    return Checkpoint(tensors, config, version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
