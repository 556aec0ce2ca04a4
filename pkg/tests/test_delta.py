"""Checkpoint delta: XOR semantics, compression gains, strict validation."""

import numpy as np
import pytest

import helpers
from ztnc import (
    BF16,
    ChecksumError,
    FormatError,
    apply_delta,
    compress_delta,
    compress_tensor,
    parse_container,
    synth,
    xor_delta,
)
from ztnc import container


def test_xor_examples():
    assert xor_delta(b"\x00\x3f", b"\x00\x3f") == b"\x00\x00"
    assert xor_delta(b"\x01\x3f", b"\x03\x3f") == b"\x02\x00"
    # involution: applying the delta to base recovers next
    base, nxt = b"\xaa\xbb\xcc\xdd", b"\x11\x22\x33\x44"
    d = xor_delta(base, nxt)
    assert xor_delta(base, d) == nxt


def test_xor_length_mismatch():
    with pytest.raises(FormatError):
        xor_delta(b"\x00\x00", b"\x00")


def test_identical_checkpoints():
    rng = np.random.default_rng(20)
    base = helpers.gauss_bf16(rng, 200000)
    blob, rep = compress_delta(base, base)
    assert rep.total_ratio < 0.15
    assert apply_delta(base, blob) == base


def test_sparse_mantissa_perturbation():
    rng = np.random.default_rng(21)
    vals = rng.normal(0.0, 0.02, size=200000).astype(np.float32)
    base = synth.quantize_bf16(vals)
    nxt = helpers.perturbed_bf16(rng, vals, 0.01)
    blob, rep = compress_delta(base, nxt)
    assert rep.total_ratio < 0.30
    assert apply_delta(base, blob) == nxt


def test_ratio_monotone_in_perturbation():
    rng = np.random.default_rng(22)
    vals = rng.normal(0.0, 0.02, size=150000).astype(np.float32)
    base = synth.quantize_bf16(vals)
    ratios = []
    for frac in (0.001, 0.01, 0.1, 0.5):
        nxt = helpers.perturbed_bf16(rng, vals, frac)
        blob, rep = compress_delta(base, nxt)
        assert apply_delta(base, blob) == nxt
        ratios.append(rep.total_ratio)
    assert ratios == sorted(ratios)
    # even fully perturbed LSBs beat direct compression of uncorrelated data
    assert ratios[-1] < 1.0


def test_delta_no_worse_than_direct_on_drift():
    rng = np.random.default_rng(23)
    vals = rng.normal(0.0, 0.02, size=200000).astype(np.float32)
    base = synth.quantize_bf16(vals)
    nxt = helpers.perturbed_bf16(rng, vals, 0.05)
    _, direct = compress_tensor(nxt, BF16)
    _, delta_rep = compress_delta(base, nxt)
    assert delta_rep.total_ratio < direct.total_ratio


def test_delta_flag_set_and_required():
    rng = np.random.default_rng(24)
    base = helpers.gauss_bf16(rng, 5000)
    blob, _ = compress_delta(base, base)
    parsed = parse_container(blob)
    assert parsed.flags & container.FLAG_DELTA
    # a plain container is not a delta
    plain, _ = compress_tensor(base, BF16)
    with pytest.raises(FormatError):
        apply_delta(base, plain)


def test_non_bf16_rejected():
    with pytest.raises(FormatError):
        compress_delta(b"\x01", b"\x02")  # odd length can't be BF16


def test_base_length_mismatch_rejected_before_decode():
    rng = np.random.default_rng(25)
    base = helpers.gauss_bf16(rng, 10000)
    blob, _ = compress_delta(base, base)
    # corrupt every payload byte: a length check must fire before any decode
    parsed = parse_container(blob)
    first = parsed.stream(container.KIND_EXPONENT).chunks[0]
    bad = bytearray(blob)
    for i in range(first.payload_offset, len(bad)):
        bad[i] ^= 0xFF
    with pytest.raises(FormatError):
        apply_delta(base + b"\x00\x00", bytes(bad))


def test_wrong_base_content_rejected():
    rng = np.random.default_rng(26)
    base = helpers.gauss_bf16(rng, 10000)
    other = helpers.gauss_bf16(rng, 10000)
    blob, _ = compress_delta(base, base)
    with pytest.raises(ChecksumError) as ei:
        apply_delta(other, blob)
    assert ei.value.stream == "base"


def test_roundtrip_fuzz():
    rng = np.random.default_rng(27)
    for _ in range(40):
        n = int(rng.integers(1, 4000))
        vals = rng.normal(0.0, float(rng.uniform(0.001, 1.0)), size=n).astype(
            np.float32
        )
        base = synth.quantize_bf16(vals)
        nxt = helpers.perturbed_bf16(rng, vals, float(rng.uniform(0.0, 1.0)))
        blob, _ = compress_delta(base, nxt, chunk_size=4096)
        assert apply_delta(base, blob) == nxt
