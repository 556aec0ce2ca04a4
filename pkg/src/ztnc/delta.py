"""XOR delta compression for successive BF16 checkpoints of one tensor.

Nearby training checkpoints share sign, exponent, and high mantissa bits,
so `base XOR next` concentrates mass at zero in both byte streams and
compresses far better than the raw checkpoint. The delta container sets a
header flag and records the CRC32 of the base so apply_delta can refuse a
mispaired base instead of silently reconstructing garbage.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import container, formats
from .errors import ChecksumError, FormatError


def xor_delta(base: bytes, next_: bytes) -> bytes:
    """Positionwise byte XOR; its own inverse."""
    if len(base) != len(next_):
        raise FormatError(
            f"delta requires equal sizes, got {len(base)} vs {len(next_)} bytes"
        )
    return (np.frombuffer(base, np.uint8) ^ np.frombuffer(next_, np.uint8)).tobytes()


def compress_delta(
    base: bytes,
    next_: bytes,
    chunk_size: int = container.DEFAULT_CHUNK_SIZE,
    *,
    threads: int = 1,
) -> tuple[bytes, container.CompressionReport]:
    """Compress `next_` as an XOR residual against `base` (BF16 layout)."""
    residual = xor_delta(base, next_)
    return container.compress_tensor(
        residual,
        formats.BF16,
        chunk_size,
        threads=threads,
        _flags=container.FLAG_DELTA,
        _base_crc=zlib.crc32(base),
    )


def apply_delta(base: bytes, blob: bytes, *, threads: int = 1) -> bytes:
    """Reconstruct the checkpoint that compress_delta encoded against `base`."""
    parsed = container.parse_container(blob)
    if not parsed.flags & container.FLAG_DELTA:
        raise FormatError("container was not produced by compress_delta")
    if parsed.element_count * 2 != len(base):
        raise FormatError(
            f"base of {len(base)} bytes does not match the delta's "
            f"{parsed.element_count} elements"
        )
    if parsed.base_crc != zlib.crc32(base):
        raise ChecksumError("base", -1, "base tensor does not match the recorded checksum")
    residual = container.decompress_tensor(blob, threads=threads)
    return xor_delta(base, residual)
