"""safetensors ingest and the per-tensor archive."""

import json
import struct

import numpy as np
import pytest

import helpers
from ztnc import (
    BF16,
    HeaderError,
    TruncatedError,
    compress_model,
    compress_tensor,
    decompress_model,
    parse_model,
    read_archive_tensor,
    write_model,
)
from ztnc import ingest


def small_model(rng):
    return write_model(
        [
            ("wq", "BF16", [64, 32], helpers.gauss_bf16(rng, 2048)),
            ("wk", "F8_E4M3", [1024], helpers.gauss_fp8(rng, 1024)),
            ("scales", "U8", [100], helpers.skewed_bytes(rng, 100, 4)),
        ]
    )


def test_parse_model_roundtrip():
    rng = np.random.default_rng(60)
    raw = small_model(rng)
    model = parse_model(raw)
    assert [e.name for e in model.entries] == ["wq", "wk", "scales"]
    assert model.skipped == []
    wq = model.entries[0]
    assert wq.dtype == "BF16" and wq.shape == [64, 32] and wq.nbytes == 4096
    assert model.tensor_bytes(wq) == raw[model.data_start : model.data_start + 4096]


def test_archive_roundtrip_exact_file():
    rng = np.random.default_rng(61)
    raw = small_model(rng)
    archive, rep = compress_model(raw)
    assert decompress_model(archive) == raw
    assert rep.original_size == len(raw)
    assert rep.archive_size == len(archive)
    assert len(rep.tensors) == 3


def test_random_access_by_name():
    rng = np.random.default_rng(62)
    raw = small_model(rng)
    model = parse_model(raw)
    archive, _ = compress_model(raw)
    for e in model.entries:
        assert read_archive_tensor(archive, e.name) == model.tensor_bytes(e)
    with pytest.raises(KeyError):
        read_archive_tensor(archive, "nope")


def test_aggregate_ratio_is_size_weighted_mean():
    rng = np.random.default_rng(63)
    raw = small_model(rng)
    _, rep = compress_model(raw)
    num = sum(r.original_bytes * r.total_ratio for _, r in rep.tensors)
    den = sum(r.original_bytes for _, r in rep.tensors)
    assert rep.aggregate_ratio == pytest.approx(num / den)


def test_per_tensor_ratio_matches_standalone():
    rng = np.random.default_rng(64)
    data = helpers.gauss_bf16(rng, 4096)
    raw = write_model([("only", "BF16", [4096], data)])
    _, rep = compress_model(raw)
    _, standalone = compress_tensor(data, BF16)
    assert rep.tensors[0][1].compressed_bytes == standalone.compressed_bytes


def test_unknown_dtype_skipped_verbatim():
    rng = np.random.default_rng(65)
    f32 = rng.normal(size=256).astype(np.float32).tobytes()
    raw = write_model(
        [
            ("w", "BF16", [512], helpers.gauss_bf16(rng, 512)),
            ("f", "F32", [256], f32),
        ]
    )
    model = parse_model(raw)
    assert [e.name for e in model.skipped] == ["f"]
    archive, rep = compress_model(raw)
    assert rep.skipped == [{"name": "f", "dtype": "F32", "length": 1024}]
    assert rep.verbatim_bytes >= 1024  # skipped tensor plus the header
    assert f32 in archive  # stored untouched
    assert decompress_model(archive) == raw


def test_region_gaps_kept_verbatim():
    # hand-build a header whose tensors leave a hole in the data region
    gap = b"\xdeadbeef hole"
    a, b = bytes(64), bytes(range(32))
    header = {
        "a": {"dtype": "BF16", "shape": [32], "data_offsets": [0, 64]},
        "b": {"dtype": "U8", "shape": [32], "data_offsets": [64 + len(gap), 96 + len(gap)]},
    }
    hjson = json.dumps(header).encode()
    raw = struct.pack("<Q", len(hjson)) + hjson + a + gap + b
    archive, rep = compress_model(raw)
    assert decompress_model(archive) == raw
    assert rep.verbatim_bytes == 8 + len(hjson) + len(gap)


def test_metadata_key_ignored():
    rng = np.random.default_rng(66)
    data = helpers.gauss_bf16(rng, 64)
    header = {
        "__metadata__": {"framework": "pt"},
        "w": {"dtype": "BF16", "shape": [64], "data_offsets": [0, 128]},
    }
    hjson = json.dumps(header).encode()
    raw = struct.pack("<Q", len(hjson)) + hjson + data
    model = parse_model(raw)
    assert [e.name for e in model.entries] == ["w"]
    archive, _ = compress_model(raw)
    assert decompress_model(archive) == raw


def test_malformed_headers_rejected():
    with pytest.raises(TruncatedError):
        parse_model(b"\x01\x02")
    with pytest.raises(TruncatedError):
        parse_model(struct.pack("<Q", 100) + b"{}")
    bad_json = b"not json!!"
    with pytest.raises(HeaderError):
        parse_model(struct.pack("<Q", len(bad_json)) + bad_json)
    arr = json.dumps([1, 2]).encode()
    with pytest.raises(HeaderError):
        parse_model(struct.pack("<Q", len(arr)) + arr)

    def make(header, body=b""):
        hjson = json.dumps(header).encode()
        return struct.pack("<Q", len(hjson)) + hjson + body

    with pytest.raises(HeaderError):  # missing data_offsets
        parse_model(make({"w": {"dtype": "BF16", "shape": [2]}}))
    with pytest.raises(HeaderError):  # offsets past the data region
        parse_model(make({"w": {"dtype": "BF16", "shape": [2], "data_offsets": [0, 4]}}))
    with pytest.raises(HeaderError):  # shape/size mismatch
        parse_model(
            make({"w": {"dtype": "BF16", "shape": [3], "data_offsets": [0, 4]}}, bytes(4))
        )
    with pytest.raises(HeaderError):  # negative dimension
        parse_model(
            make({"w": {"dtype": "BF16", "shape": [-2], "data_offsets": [0, 4]}}, bytes(4))
        )


def test_overlapping_tensors_rejected():
    header = {
        "a": {"dtype": "U8", "shape": [8], "data_offsets": [0, 8]},
        "b": {"dtype": "U8", "shape": [8], "data_offsets": [4, 12]},
    }
    hjson = json.dumps(header).encode()
    with pytest.raises(HeaderError):
        parse_model(struct.pack("<Q", len(hjson)) + hjson + bytes(12))


def test_archive_header_validation():
    rng = np.random.default_rng(67)
    archive, _ = compress_model(small_model(rng))
    with pytest.raises(TruncatedError):
        decompress_model(archive[:4])
    with pytest.raises(HeaderError):
        decompress_model(b"XTNA" + archive[4:])
    bad = bytearray(archive)
    bad[4] = 9  # version
    with pytest.raises(HeaderError):
        decompress_model(bytes(bad))
    with pytest.raises(TruncatedError):
        decompress_model(archive[:10])


def test_empty_model():
    raw = write_model([])
    archive, rep = compress_model(raw)
    assert decompress_model(archive) == raw
    assert rep.aggregate_ratio == 0.0
    assert rep.tensors == []


def test_e5m2_dtype_supported():
    rng = np.random.default_rng(68)
    data = helpers.gauss_fp8(rng, 2048, name="FP8_E5M2")
    raw = write_model([("w", "F8_E5M2", [2048], data)])
    archive, rep = compress_model(raw)
    assert decompress_model(archive) == raw
    assert rep.tensors[0][1].format == "FP8_E5M2"
