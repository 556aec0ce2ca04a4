"""Bit layouts of the supported low-precision floats and the lossless
split of raw tensor bytes into an exponent stream and a sign+mantissa
stream (plus the inverse merge).

The split never interprets values; it only moves bits, so any byte input
of valid length round-trips exactly. Stream shapes:

  BF16      exponent: 1 byte/element        sign+mantissa: 1 byte/element
  FP8 E4M3  exponent: 2 elements/byte       sign+mantissa: 2 elements/byte
            (first element of a pair in the high nibble; odd counts pad
             with a zero nibble, recorded in pad_elements)
  FP8 E5M2  exponent: 1 byte/element (5-bit value zero-extended)
            sign+mantissa: 1 byte/element (3-bit value zero-extended)

FP4 payloads are block-scaled and handled by the fp4 module, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError


@dataclass(frozen=True)
class FloatFormat:
    """Static descriptor of one floating-point bit layout."""

    name: str
    sign_bits: int
    exponent_bits: int
    mantissa_bits: int
    bias: int
    element_bits: int

    def __post_init__(self):
        assert self.sign_bits + self.exponent_bits + self.mantissa_bits == self.element_bits

    @property
    def element_bytes(self) -> int:
        return self.element_bits // 8


BF16 = FloatFormat("BF16", 1, 8, 7, 127, 16)
FP8_E4M3 = FloatFormat("FP8_E4M3", 1, 4, 3, 7, 8)
FP8_E5M2 = FloatFormat("FP8_E5M2", 1, 5, 2, 15, 8)
FP4_E2M1 = FloatFormat("FP4_E2M1", 1, 2, 1, 1, 4)

FORMATS = {f.name: f for f in (BF16, FP8_E4M3, FP8_E5M2, FP4_E2M1)}


@dataclass
class BitPlanes:
    """The two separated byte streams for one tensor."""

    format: FloatFormat
    element_count: int
    exponent_stream: bytes
    sign_mantissa_stream: bytes
    pad_elements: int = 0


def _element_count(raw_len: int, fmt: FloatFormat) -> int:
    size = fmt.element_bytes
    if size == 0 or raw_len % size:
        raise FormatError(
            f"input length {raw_len} is not a multiple of the {fmt.name} "
            f"element size ({size} bytes)"
        )
    return raw_len // size


def _pack_nibbles(nibbles: np.ndarray) -> tuple[bytes, int]:
    """Pack 4-bit values two per byte, first value in the high nibble."""
    pad = len(nibbles) & 1
    if pad:
        nibbles = np.concatenate([nibbles, np.zeros(1, np.uint8)])
    packed = (nibbles[0::2] << 4) | nibbles[1::2]
    return packed.astype(np.uint8).tobytes(), pad


def _unpack_nibbles(data: bytes, count: int) -> np.ndarray:
    packed = np.frombuffer(data, np.uint8)
    out = np.empty(len(packed) * 2, np.uint8)
    out[0::2] = packed >> 4
    out[1::2] = packed & 0x0F
    return out[:count]


def split(raw: bytes, fmt: FloatFormat) -> BitPlanes:
    """Separate raw tensor bytes into exponent and sign+mantissa streams."""
    if fmt is FP4_E2M1:
        raise FormatError("FP4 payloads are block-scaled; use the fp4 module")
    n = _element_count(len(raw), fmt)

    if fmt is BF16:
        v = np.frombuffer(raw, dtype="<u2")
        exp = ((v >> 7) & 0xFF).astype(np.uint8)
        sm = (((v >> 8) & 0x80) | (v & 0x7F)).astype(np.uint8)
        return BitPlanes(fmt, n, exp.tobytes(), sm.tobytes())

    b = np.frombuffer(raw, np.uint8)
    if fmt is FP8_E4M3:
        exp_nib = (b >> 3) & 0x0F
        sm_nib = ((b >> 4) & 0x08) | (b & 0x07)
        exp_bytes, pad = _pack_nibbles(exp_nib)
        sm_bytes, _ = _pack_nibbles(sm_nib)
        return BitPlanes(fmt, n, exp_bytes, sm_bytes, pad_elements=pad)
    if fmt is FP8_E5M2:
        exp = ((b >> 2) & 0x1F).astype(np.uint8)
        sm = (((b >> 5) & 0x04) | (b & 0x03)).astype(np.uint8)
        return BitPlanes(fmt, n, exp.tobytes(), sm.tobytes())
    raise FormatError(f"unsupported format {fmt.name}")


def merge(planes: BitPlanes) -> bytes:
    """Exact inverse of split(); drops any pad nibble."""
    fmt = planes.format
    n = planes.element_count

    if fmt is BF16:
        if len(planes.exponent_stream) != n or len(planes.sign_mantissa_stream) != n:
            raise FormatError("BF16 stream lengths do not match element count")
        exp = np.frombuffer(planes.exponent_stream, np.uint8).astype(np.uint16)
        sm = np.frombuffer(planes.sign_mantissa_stream, np.uint8).astype(np.uint16)
        v = ((sm & 0x80) << 8) | (exp << 7) | (sm & 0x7F)
        return v.astype("<u2").tobytes()

    if fmt is FP8_E4M3:
        want = (n + 1) // 2
        if len(planes.exponent_stream) != want or len(planes.sign_mantissa_stream) != want:
            raise FormatError("E4M3 stream lengths do not match element count")
        exp = _unpack_nibbles(planes.exponent_stream, n)
        sm = _unpack_nibbles(planes.sign_mantissa_stream, n)
        b = ((sm & 0x08) << 4) | (exp << 3) | (sm & 0x07)
        return b.astype(np.uint8).tobytes()

    if fmt is FP8_E5M2:
        if len(planes.exponent_stream) != n or len(planes.sign_mantissa_stream) != n:
            raise FormatError("E5M2 stream lengths do not match element count")
        exp = np.frombuffer(planes.exponent_stream, np.uint8)
        sm = np.frombuffer(planes.sign_mantissa_stream, np.uint8)
        b = ((sm & 0x04) << 5) | ((exp & 0x1F) << 2) | (sm & 0x03)
        return b.astype(np.uint8).tobytes()

    raise FormatError(f"unsupported format {fmt.name}")


def decode_value(bits: int, fmt: FloatFormat) -> float:
    """Interpret one element bit pattern as a real number.

    Diagnostics only; the compression pipeline never looks at values.
    E4M3 has no infinities and a single NaN pattern (exp and mantissa all
    ones); E5M2 follows the usual inf/NaN convention.
    """
    if bits >> fmt.element_bits:
        raise FormatError(f"bit pattern 0x{bits:X} wider than {fmt.element_bits} bits")
    m = fmt.mantissa_bits
    mant = bits & ((1 << m) - 1)
    exp = (bits >> m) & ((1 << fmt.exponent_bits) - 1)
    sign = -1.0 if bits >> (fmt.element_bits - 1) else 1.0
    exp_max = (1 << fmt.exponent_bits) - 1

    if fmt is FP8_E4M3:
        if exp == exp_max and mant == (1 << m) - 1:
            return float("nan")
    elif fmt is FP8_E5M2 or fmt is BF16:
        if exp == exp_max:
            if mant == 0:
                return sign * float("inf")
            return float("nan")

    if exp == 0:
        return sign * 2.0 ** (1 - fmt.bias) * (mant / (1 << m))
    return sign * 2.0 ** (exp - fmt.bias) * (1 + mant / (1 << m))
