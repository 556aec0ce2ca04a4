"""FP4 block-scaled tensors: scale-factor compression and the regroup probe.

Quantized E2M1 nibbles look uniformly random to a byte coder, so they are
stored untouched; only the per-block scale stream goes through the entropy
coder. The regroup experiment exists to show, with numbers, why the nibble
payload is left alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .errors import CorruptionError, FormatError

E2M1_MAGNITUDES = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0)


@dataclass(frozen=True)
class Fp4Layout:
    scheme: str  # MXFP4 | NVFP4
    block_size: int
    scale_format: str  # E8M0 | FP8_E4M3


MXFP4 = Fp4Layout("MXFP4", 32, "E8M0")
NVFP4 = Fp4Layout("NVFP4", 16, "FP8_E4M3")
LAYOUTS = {"MXFP4": MXFP4, "NVFP4": NVFP4}


@dataclass
class Fp4Tensor:
    """Packed E2M1 payload plus one scale byte per block.

    nibbles: two elements per byte, first element in the high nibble; the
    last byte carries a zero pad nibble when element_count is odd.
    """

    layout: Fp4Layout
    element_count: int
    nibbles: bytes
    scales: bytes

    def __post_init__(self):
        if self.element_count < 0:
            raise FormatError("element_count must be nonnegative")
        if len(self.nibbles) != (self.element_count + 1) // 2:
            raise FormatError(
                f"{self.element_count} elements need "
                f"{(self.element_count + 1) // 2} nibble bytes, got {len(self.nibbles)}"
            )
        blocks = (self.element_count + self.layout.block_size - 1) // self.layout.block_size
        if len(self.scales) != blocks:
            raise FormatError(
                f"{self.element_count} {self.layout.scheme} elements need "
                f"{blocks} scale bytes, got {len(self.scales)}"
            )


def compress_fp4(
    t: Fp4Tensor,
    chunk_size: int = container.DEFAULT_CHUNK_SIZE,
    *,
    threads: int = 1,
) -> tuple[bytes, container.CompressionReport]:
    """Scales are entropy-coded; the nibble payload is stored verbatim."""
    streams = [
        container.StreamSpec(container.KIND_RAW_NIBBLES, t.nibbles, entropy_coded=False),
        container.StreamSpec(container.KIND_SCALE, t.scales),
    ]
    return container.write_container(
        streams,
        container.FORMAT_IDS[t.layout.scheme],
        t.element_count,
        len(t.nibbles) + len(t.scales),
        chunk_size=chunk_size,
        threads=threads,
    )


def decompress_fp4(blob: bytes, *, threads: int = 1) -> Fp4Tensor:
    parsed = container.parse_container(blob)
    if parsed.format_name not in LAYOUTS:
        raise FormatError(f"container holds {parsed.format_name}, not an FP4 scheme")
    layout = LAYOUTS[parsed.format_name]
    nibbles = container.decode_stream(blob, parsed, container.KIND_RAW_NIBBLES, threads)
    scales = container.decode_stream(blob, parsed, container.KIND_SCALE, threads)
    try:
        return Fp4Tensor(layout, parsed.element_count, nibbles, scales)
    except FormatError as e:
        raise CorruptionError(f"stream lengths disagree with element count: {e}") from e


def split_combined(raw: bytes, layout: Fp4Layout) -> Fp4Tensor:
    """Parse the combined file convention: packed nibbles, scales appended.

    With whole blocks the sizes are rigid: a block contributes block_size/2
    nibble bytes plus one scale byte, so NVFP4 files are 9 bytes per block
    and MXFP4 files are 17.
    """
    per_block = layout.block_size // 2 + 1
    if not raw:
        return Fp4Tensor(layout, 0, b"", b"")
    if len(raw) % per_block:
        raise FormatError(
            f"combined {layout.scheme} input must be a multiple of {per_block} bytes"
        )
    blocks = len(raw) // per_block
    nib_len = blocks * layout.block_size // 2
    return Fp4Tensor(layout, blocks * layout.block_size, raw[:nib_len], raw[nib_len:])


def join_combined(t: Fp4Tensor) -> bytes:
    return t.nibbles + t.scales


def unpack_nibbles(nibbles: bytes, element_count: int) -> np.ndarray:
    b = np.frombuffer(nibbles, np.uint8)
    out = np.empty(len(b) * 2, np.uint8)
    out[0::2] = (b >> 4) & 0x0F
    out[1::2] = b & 0x0F
    return out[:element_count]


def regroup_bits_experiment(
    nibbles: bytes, element_count: int | None = None
) -> tuple[bytes, container.CompressionReport]:
    """Rebuild the paper's probe: top 2 bits of 4 consecutive elements per byte.

    The top 2 bits of an E2M1 nibble are the sign and high exponent bit.
    Groups of 4 elements concatenate in element order; a trailing partial
    group is dropped. The report prices the regrouped stream through the
    normal chunk coder, so its ratio is what compression would achieve.
    """
    if element_count is None:
        element_count = len(nibbles) * 2
    if element_count < 4:
        raise FormatError("regrouping needs at least 4 elements")
    elems = unpack_nibbles(nibbles, element_count)
    top2 = (elems >> 2) & 0x03
    groups = len(top2) // 4
    t = top2[: groups * 4].reshape(groups, 4)
    regrouped = ((t[:, 0] << 6) | (t[:, 1] << 4) | (t[:, 2] << 2) | t[:, 3]).astype(np.uint8).tobytes()
    report = container._profile_streams(
        [container.StreamSpec(container.KIND_OPAQUE, regrouped)],
        container.FORMAT_IDS["RAW"],
        groups,
        len(regrouped),
        container.DEFAULT_CHUNK_SIZE,
    )
    return regrouped, report
