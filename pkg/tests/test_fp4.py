"""FP4 block-scaled tensors: scale coding, combined layout, regroup probe."""

import numpy as np
import pytest

import helpers
from ztnc import (
    BF16,
    CorruptionError,
    FormatError,
    Fp4Tensor,
    MXFP4,
    NVFP4,
    compress_fp4,
    compress_tensor,
    decompress_fp4,
    join_combined,
    regroup_bits_experiment,
    split_combined,
    unpack_nibbles,
)


def test_combined_layout_sizes():
    # one block: block_size/2 nibble bytes + 1 scale byte
    raw = bytes(range(9))
    t = split_combined(raw, NVFP4)
    assert t.element_count == 16
    assert t.nibbles == raw[:8]
    assert t.scales == raw[8:]
    assert join_combined(t) == raw
    raw = bytes(range(17 * 3))
    t = split_combined(raw, MXFP4)
    assert t.element_count == 96
    assert len(t.nibbles) == 48 and len(t.scales) == 3
    assert join_combined(t) == raw


def test_combined_layout_rejects_ragged():
    with pytest.raises(FormatError):
        split_combined(bytes(10), NVFP4)
    with pytest.raises(FormatError):
        split_combined(bytes(16), MXFP4)
    empty = split_combined(b"", MXFP4)
    assert empty.element_count == 0


def test_tensor_validation():
    with pytest.raises(FormatError):
        Fp4Tensor(NVFP4, 16, bytes(7), bytes(1))  # short nibbles
    with pytest.raises(FormatError):
        Fp4Tensor(NVFP4, 16, bytes(8), bytes(2))  # extra scale
    with pytest.raises(FormatError):
        Fp4Tensor(NVFP4, -1, b"", b"")
    Fp4Tensor(NVFP4, 17, bytes(9), bytes(2))  # ragged tail is fine


def test_roundtrip_ragged_counts():
    rng = np.random.default_rng(30)
    for scheme in ("MXFP4", "NVFP4"):
        for n in (1, 2, 15, 16, 17, 31, 32, 33, 1000, 4097):
            t = helpers.random_fp4(rng, scheme, n)
            blob, rep = compress_fp4(t)
            back = decompress_fp4(blob)
            assert back == t
            assert rep.format == scheme


def test_nibbles_stored_verbatim():
    rng = np.random.default_rng(31)
    t = helpers.quantized_fp4(rng, "MXFP4", 20000)
    blob, rep = compress_fp4(t)
    nib = rep.stream("raw_nibbles")
    assert nib.chunks_huffman == 0
    assert nib.compressed_bytes == len(t.nibbles)
    assert t.nibbles in blob  # single raw chunk is the payload itself


def test_constant_scales_compress():
    rng = np.random.default_rng(32)
    n = 32 * 4096
    t = helpers.quantized_fp4(rng, "MXFP4", n)
    const = Fp4Tensor(MXFP4, n, t.nibbles, bytes([t.scales[0]]) * len(t.scales))
    blob, rep = compress_fp4(const)
    assert decompress_fp4(blob) == const
    assert rep.stream("scale").ratio < 0.15
    assert rep.stream("raw_nibbles").ratio == 1.0


def test_low_variance_scale_pool():
    # 16 distinct scale bytes keep codewords at 4-ish bits
    rng = np.random.default_rng(33)
    n = 32 * 8192
    t = helpers.quantized_fp4(rng, "MXFP4", n)
    pool = rng.choice(256, 16, replace=False)
    scales = rng.choice(pool, len(t.scales)).astype(np.uint8).tobytes()
    mixed = Fp4Tensor(MXFP4, n, t.nibbles, scales)
    blob, rep = compress_fp4(mixed)
    assert decompress_fp4(blob) == mixed
    assert rep.stream("scale").ratio < 0.55


def test_uniform_scales_bounded():
    rng = np.random.default_rng(34)
    t = helpers.random_fp4(rng, "NVFP4", 16 * 10000)
    blob, rep = compress_fp4(t)
    assert decompress_fp4(blob) == t
    assert rep.stream("scale").ratio <= 1.01


def test_unpack_nibbles():
    assert unpack_nibbles(b"\x12\x34", 4).tolist() == [1, 2, 3, 4]
    assert unpack_nibbles(b"\x12\x30", 3).tolist() == [1, 2, 3]
    assert unpack_nibbles(b"", 0).tolist() == []


def test_regroup_bit_packing():
    # elements with top-2 bits 00,01,10,11 pack to 0b00011011
    nibbles = bytes([(0b00 << 6) | (0b01 << 2), (0b10 << 6) | (0b11 << 2)])
    regrouped, _ = regroup_bits_experiment(nibbles, 4)
    assert regrouped == b"\x1b"
    # partial trailing group is dropped
    regrouped, _ = regroup_bits_experiment(nibbles + b"\x00", 6)
    assert regrouped == b"\x1b"


def test_regroup_on_quantized_data_does_not_help():
    rng = np.random.default_rng(35)
    t = helpers.quantized_fp4(rng, "NVFP4", 16 * 8192)
    _, rep = regroup_bits_experiment(t.nibbles, t.element_count)
    assert rep.total_ratio > 0.90


def test_regroup_on_degenerate_data_helps():
    # all-identical elements regroup into one repeated byte
    nibbles = b"\x44" * 4096
    _, rep = regroup_bits_experiment(nibbles)
    assert rep.total_ratio < 0.15


def test_regroup_needs_four_elements():
    with pytest.raises(FormatError):
        regroup_bits_experiment(b"\x11", 2)


def test_fp4_container_corruption():
    rng = np.random.default_rng(36)
    t = helpers.quantized_fp4(rng, "MXFP4", 5000)
    blob, _ = compress_fp4(t)
    with pytest.raises((CorruptionError, FormatError)):
        decompress_fp4(blob[:-3])
    # a BF16 container is not an FP4 container
    bf_blob, _ = compress_tensor(bytes(64), BF16)
    with pytest.raises(FormatError):
        decompress_fp4(bf_blob)


def test_quantizer_block_scaling():
    rng = np.random.default_rng(37)
    t = helpers.quantized_fp4(rng, "MXFP4", 640)
    assert t.layout is MXFP4
    assert len(t.scales) == 20
    codes = unpack_nibbles(t.nibbles, t.element_count)
    assert codes.max() <= 0x0F
    # E8M0 scales land near 2^ceil(log2(amax/6)) + 127 for sigma-1 data
    assert all(100 <= s <= 140 for s in t.scales)
