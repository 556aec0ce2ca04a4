"""Synthetic quantizers for generating test corpora and benchmark inputs.

These produce plausible low-precision bit patterns from float32 data. They
are deliberately simple (round-to-nearest against a value table) and are
not meant for production quantization; the codec itself never calls them.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import formats
from .fp4 import E2M1_MAGNITUDES, Fp4Layout, Fp4Tensor


def quantize_bf16(values) -> bytes:
    """float32 -> BF16 bytes, round-to-nearest-even on the dropped 16 bits."""
    f = np.ascontiguousarray(values, np.float32)
    u = f.view(np.uint32)
    rounded = (u + 0x7FFF + ((u >> 16) & 1)) >> 16
    return rounded.astype("<u2").tobytes()


@lru_cache(maxsize=None)
def _finite_points(fmt_name: str) -> tuple[np.ndarray, np.ndarray]:
    """All finite representable values of an 8-bit format, sorted ascending."""
    fmt = formats.FORMATS[fmt_name]
    vals, codes = [], []
    for b in range(256):
        v = formats.decode_value(b, fmt)
        if math.isfinite(v):
            vals.append(v)
            codes.append(b)
    order = np.argsort(np.asarray(vals), kind="stable")
    return np.asarray(vals, np.float64)[order], np.asarray(codes, np.uint8)[order]


def _nearest(values: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Index of the nearest table entry; ties go to the smaller value."""
    idx = np.searchsorted(table, values)
    lo = np.clip(idx - 1, 0, len(table) - 1)
    hi = np.clip(idx, 0, len(table) - 1)
    pick_hi = (table[hi] - values) < (values - table[lo])
    return np.where(pick_hi, hi, lo)


def quantize_fp8(values, fmt: formats.FloatFormat = formats.FP8_E4M3) -> bytes:
    """float32 -> FP8 bytes, nearest finite value, saturating at the extremes."""
    if fmt.element_bits != 8:
        raise ValueError(f"{fmt.name} is not an 8-bit format")
    f = np.ascontiguousarray(values, np.float64)
    table, codes = _finite_points(fmt.name)
    return codes[_nearest(f, table)].tobytes()


@lru_cache(maxsize=None)
def _code_values(fmt_name: str) -> np.ndarray:
    fmt = formats.FORMATS[fmt_name]
    return np.asarray([formats.decode_value(b, fmt) for b in range(256)], np.float64)


def quantize_fp4(values, layout: Fp4Layout) -> Fp4Tensor:
    """Block quantizer: amax/6 scale per block, nearest E2M1 element codes."""
    f = np.ascontiguousarray(values, np.float64)
    ec = len(f)
    if ec == 0:
        return Fp4Tensor(layout, 0, b"", b"")
    block = layout.block_size
    blocks = (ec + block - 1) // block
    padded = np.zeros(blocks * block, np.float64)
    padded[:ec] = f
    per = padded.reshape(blocks, block)
    amax = np.abs(per).max(axis=1)

    if layout.scale_format == "E8M0":
        e = np.full_like(amax, -127.0)
        np.ceil(np.log2(amax / 6.0, where=amax > 0, out=e), where=amax > 0, out=e)
        e = np.clip(e, -127, 127)
        scale_bytes = (e + 127).astype(np.uint8)
        scale = np.exp2(e)
    else:
        scale_bytes = np.frombuffer(quantize_fp8(amax / 6.0, formats.FP8_E4M3), np.uint8)
        scale = _code_values("FP8_E4M3")[scale_bytes]
        scale = np.where(scale > 0, scale, 1.0)

    q = (per / scale[:, None]).reshape(-1)
    mags = np.asarray(E2M1_MAGNITUDES)
    pattern = _nearest(np.abs(q), mags).astype(np.uint8)
    nib = np.where(q < 0, pattern | 0x08, pattern)
    nib = nib[: 2 * ((ec + 1) // 2)]  # keep one zero pad nibble when ec is odd
    packed = ((nib[0::2] << 4) | nib[1::2]).astype(np.uint8).tobytes()
    return Fp4Tensor(layout, ec, packed, scale_bytes.tobytes())


def kv_step(rng: np.random.Generator, fmt: formats.FloatFormat, elements: int, sigma: float) -> bytes:
    """One synthetic decode-step tensor: N(0, sigma) pushed through a quantizer."""
    vals = rng.normal(0.0, sigma, elements)
    if fmt is formats.BF16:
        return quantize_bf16(vals.astype(np.float32))
    return quantize_fp8(vals, fmt)
