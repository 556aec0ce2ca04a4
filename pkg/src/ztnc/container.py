"""Chunked compressed container: the on-disk interchange format.

Layout (little-endian throughout):

  header      magic "ZTNC" | version u16 | format_id u8 | flags u8 |
              chunk_size u32 | stream_count u8 | element_count u64
              [base_crc u32 -- present only when flags bit0 (delta) is set]
  directory   per stream: kind u8 | original_len u64 | per chunk
              {flag u8, codebook_len u16, comp_len u32, orig_len u32, crc32 u32}
              (chunk count = ceil(original_len / chunk_size))
  payloads    per stream, per chunk: [serialized codebook][encoded bits]
              when flag=huffman, or the raw chunk bytes when flag=raw

Chunks are independent: any chunk decodes from its own payload slice and
directory entry alone, which is what makes random access and parallel
decode possible. Every chunk carries the CRC32 of its original bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import entropy, formats
from .errors import (
    ChecksumError,
    CorruptionError,
    FormatError,
    HeaderError,
    TruncatedError,
)

MAGIC = b"ZTNC"
VERSION = 1
DEFAULT_CHUNK_SIZE = 262144

FLAG_DELTA = 0x01

# container format ids
FORMAT_IDS = {
    "BF16": 1,
    "FP8_E4M3": 2,
    "FP8_E5M2": 3,
    "MXFP4": 4,
    "NVFP4": 5,
    "RAW": 6,
    "SCALE": 7,
}
FORMAT_NAMES = {v: k for k, v in FORMAT_IDS.items()}

# stream kinds
KIND_EXPONENT = 0
KIND_SIGN_MANTISSA = 1
KIND_SCALE = 2
KIND_RAW_NIBBLES = 3
KIND_OPAQUE = 4
KIND_NAMES = {
    KIND_EXPONENT: "exponent",
    KIND_SIGN_MANTISSA: "sign_mantissa",
    KIND_SCALE: "scale",
    KIND_RAW_NIBBLES: "raw_nibbles",
    KIND_OPAQUE: "opaque",
}

FLAG_CHUNK_RAW = 0
FLAG_CHUNK_HUFFMAN = 1

_HEADER = struct.Struct("<4sHBBIBQ")
_CHUNK_ENTRY = struct.Struct("<BHIII")
_DIR_HEAD = struct.Struct("<BQ")


@dataclass
class StreamReport:
    kind: str
    original_bytes: int
    compressed_bytes: int  # per-chunk codebooks + payloads
    ratio: float
    entropy_bits_per_symbol: float
    top_symbols: list[tuple[int, int]]  # (symbol, count), top 8 by count
    chunks_raw: int
    chunks_huffman: int

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "original_bytes": self.original_bytes,
            "compressed_bytes": self.compressed_bytes,
            "ratio": self.ratio,
            "entropy_bits_per_symbol": self.entropy_bits_per_symbol,
            "top_symbols": [[s, c] for s, c in self.top_symbols],
            "chunks_raw": self.chunks_raw,
            "chunks_huffman": self.chunks_huffman,
        }


@dataclass
class CompressionReport:
    format: str
    element_count: int
    original_bytes: int
    compressed_bytes: int  # total container size, headers included
    overhead_bytes: int  # header + directory bytes
    total_ratio: float
    streams: list[StreamReport] = field(default_factory=list)

    def stream(self, kind: str) -> StreamReport:
        for s in self.streams:
            if s.kind == kind:
                return s
        raise KeyError(kind)

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "element_count": self.element_count,
            "original_bytes": self.original_bytes,
            "compressed_bytes": self.compressed_bytes,
            "overhead_bytes": self.overhead_bytes,
            "total_ratio": self.total_ratio,
            "streams": [s.to_dict() for s in self.streams],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class StreamSpec:
    """One stream handed to the container writer."""

    kind: int
    data: bytes
    entropy_coded: bool = True  # False: every chunk stored raw by policy


def _chunk_ranges(total: int, chunk_size: int):
    for start in range(0, total, chunk_size):
        yield start, min(start + chunk_size, total)


def _top_symbols(h: entropy.Histogram, k: int = 8) -> list[tuple[int, int]]:
    ranked = sorted(
        ((s, c) for s, c in enumerate(h.counts) if c), key=lambda sc: (-sc[1], sc[0])
    )
    return ranked[:k]


def _encode_chunk(chunk: bytes, entropy_coded: bool):
    """Returns (flag, codebook bytes, payload bytes, crc)."""
    crc = zlib.crc32(chunk)
    if entropy_coded:
        h = entropy.histogram(chunk)
        cb = entropy.build_codebook(h)
        ser = entropy.serialize_codebook(cb)
        if entropy.should_compress(h, cb, len(ser)) == "huffman":
            enc = entropy.encode(chunk, cb)
            return FLAG_CHUNK_HUFFMAN, ser, enc.payload, crc
    return FLAG_CHUNK_RAW, b"", chunk, crc


def _measure_stream(spec: StreamSpec, chunk_size: int) -> StreamReport:
    """Exact per-stream report without materializing any bitstream.

    Huffman payload size is fully determined by the chunk histogram, so
    predicted sizes equal the sizes compress would write.
    """
    compressed = 0
    raw_chunks = 0
    huff_chunks = 0
    total_hist = entropy.Histogram([0] * 256, 0)
    for start, end in _chunk_ranges(len(spec.data), chunk_size):
        chunk = spec.data[start:end]
        h = entropy.histogram(chunk)
        total_hist = total_hist + h
        if spec.entropy_coded:
            cb = entropy.build_codebook(h)
            ser_len = len(entropy.serialize_codebook(cb))
            if entropy.should_compress(h, cb, ser_len) == "huffman":
                compressed += ser_len + (cb.expected_bits(h) + 7) // 8
                huff_chunks += 1
                continue
        compressed += end - start
        raw_chunks += 1
    n = len(spec.data)
    ent = entropy.entropy_bits_per_symbol(total_hist) if n else 0.0
    return StreamReport(
        kind=KIND_NAMES[spec.kind],
        original_bytes=n,
        compressed_bytes=compressed,
        ratio=compressed / n if n else 0.0,
        entropy_bits_per_symbol=ent,
        top_symbols=_top_symbols(total_hist),
        chunks_raw=raw_chunks,
        chunks_huffman=huff_chunks,
    )


def write_container(
    streams: list[StreamSpec],
    format_id: int,
    element_count: int,
    original_bytes: int,
    *,
    flags: int = 0,
    base_crc: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    threads: int = 1,
) -> tuple[bytes, CompressionReport]:
    """Assemble a container from already-separated streams."""
    if chunk_size <= 0:
        raise FormatError("chunk_size must be positive")
    if (flags & FLAG_DELTA) != (base_crc is not None):
        raise FormatError("delta flag and base_crc must be set together")

    header = _HEADER.pack(
        MAGIC, VERSION, format_id, flags, chunk_size, len(streams), element_count
    )
    if base_crc is not None:
        header += struct.pack("<I", base_crc)

    directory = bytearray()
    payloads = bytearray()
    stream_reports = []
    for spec in streams:
        ranges = list(_chunk_ranges(len(spec.data), chunk_size))
        chunks = [spec.data[a:b] for a, b in ranges]
        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                encoded = list(pool.map(lambda c: _encode_chunk(c, spec.entropy_coded), chunks))
        else:
            encoded = [_encode_chunk(c, spec.entropy_coded) for c in chunks]

        directory += _DIR_HEAD.pack(spec.kind, len(spec.data))
        compressed = 0
        raw_chunks = 0
        huff_chunks = 0
        total_hist = entropy.Histogram([0] * 256, 0)
        for chunk, (flag, ser, payload, crc) in zip(chunks, encoded):
            directory += _CHUNK_ENTRY.pack(flag, len(ser), len(payload), len(chunk), crc)
            payloads += ser
            payloads += payload
            compressed += len(ser) + len(payload)
            if flag == FLAG_CHUNK_HUFFMAN:
                huff_chunks += 1
            else:
                raw_chunks += 1
            total_hist = total_hist + entropy.histogram(chunk)
        n = len(spec.data)
        stream_reports.append(
            StreamReport(
                kind=KIND_NAMES[spec.kind],
                original_bytes=n,
                compressed_bytes=compressed,
                ratio=compressed / n if n else 0.0,
                entropy_bits_per_symbol=(
                    entropy.entropy_bits_per_symbol(total_hist) if n else 0.0
                ),
                top_symbols=_top_symbols(total_hist),
                chunks_raw=raw_chunks,
                chunks_huffman=huff_chunks,
            )
        )

    blob = header + bytes(directory) + bytes(payloads)
    report = CompressionReport(
        format=FORMAT_NAMES[format_id],
        element_count=element_count,
        original_bytes=original_bytes,
        compressed_bytes=len(blob),
        overhead_bytes=len(header) + len(directory),
        total_ratio=len(blob) / original_bytes if original_bytes else 0.0,
        streams=stream_reports,
    )
    return blob, report


@dataclass
class ChunkEntry:
    flag: int
    codebook_len: int
    comp_len: int
    orig_len: int
    crc32: int
    payload_offset: int  # absolute offset of [codebook][payload] in the blob


@dataclass
class StreamDirectory:
    kind: int
    original_len: int
    chunks: list[ChunkEntry]


@dataclass
class ParsedContainer:
    format_id: int
    flags: int
    chunk_size: int
    element_count: int
    base_crc: int | None
    streams: list[StreamDirectory]
    size: int

    @property
    def format_name(self) -> str:
        return FORMAT_NAMES[self.format_id]

    def stream(self, kind: int) -> StreamDirectory:
        for s in self.streams:
            if s.kind == kind:
                return s
        raise CorruptionError(f"container has no stream of kind {KIND_NAMES.get(kind, kind)}")


def parse_container(blob: bytes) -> ParsedContainer:
    if len(blob) < _HEADER.size:
        raise TruncatedError("container shorter than its fixed header")
    magic, version, format_id, flags, chunk_size, stream_count, element_count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise HeaderError(f"bad magic {magic!r}")
    if version != VERSION:
        raise HeaderError(f"unsupported container version {version}")
    if format_id not in FORMAT_NAMES:
        raise HeaderError(f"unknown format id {format_id}")
    if chunk_size <= 0:
        raise HeaderError("chunk_size must be positive")
    pos = _HEADER.size
    base_crc = None
    if flags & FLAG_DELTA:
        if len(blob) < pos + 4:
            raise TruncatedError("container truncated inside delta base checksum")
        (base_crc,) = struct.unpack_from("<I", blob, pos)
        pos += 4

    streams = []
    entries_todo = []
    for _ in range(stream_count):
        if len(blob) < pos + _DIR_HEAD.size:
            raise TruncatedError("container truncated inside stream directory")
        kind, original_len = _DIR_HEAD.unpack_from(blob, pos)
        pos += _DIR_HEAD.size
        nchunks = (original_len + chunk_size - 1) // chunk_size
        chunks = []
        for i in range(nchunks):
            if len(blob) < pos + _CHUNK_ENTRY.size:
                raise TruncatedError("container truncated inside chunk table")
            flag, cb_len, comp_len, orig_len, crc = _CHUNK_ENTRY.unpack_from(blob, pos)
            pos += _CHUNK_ENTRY.size
            if flag not in (FLAG_CHUNK_RAW, FLAG_CHUNK_HUFFMAN):
                raise CorruptionError(f"chunk {i}: unknown flag {flag}")
            if flag == FLAG_CHUNK_RAW and (comp_len != orig_len or cb_len != 0):
                raise CorruptionError(f"chunk {i}: raw chunk with inconsistent lengths")
            chunks.append(ChunkEntry(flag, cb_len, comp_len, orig_len, crc, 0))
        if sum(c.orig_len for c in chunks) != original_len:
            raise CorruptionError("chunk original lengths do not sum to the stream length")
        for c in chunks[:-1]:
            if c.orig_len != chunk_size:
                raise CorruptionError("non-final chunk shorter than chunk_size")
        streams.append(StreamDirectory(kind, original_len, chunks))
        entries_todo.append(chunks)

    for chunks in entries_todo:
        for c in chunks:
            c.payload_offset = pos
            pos += c.codebook_len + c.comp_len
    if pos > len(blob):
        raise TruncatedError("container payload section truncated")
    if pos < len(blob):
        raise CorruptionError(f"{len(blob) - pos} trailing bytes after payloads")
    return ParsedContainer(
        format_id, flags, chunk_size, element_count, base_crc, streams, len(blob)
    )


def _decode_chunk_entry(blob: bytes, sd: StreamDirectory, index: int) -> bytes:
    c = sd.chunks[index]
    kind_name = KIND_NAMES.get(sd.kind, str(sd.kind))
    end = c.payload_offset + c.codebook_len + c.comp_len
    if end > len(blob):
        raise TruncatedError("chunk payload extends past end of container")
    if c.flag == FLAG_CHUNK_RAW:
        out = blob[c.payload_offset : c.payload_offset + c.comp_len]
    else:
        try:
            cb = entropy.deserialize_codebook(
                blob[c.payload_offset : c.payload_offset + c.codebook_len]
            )
            payload = blob[c.payload_offset + c.codebook_len : end]
            out = entropy.decode_padded(payload, cb, c.orig_len)
        except ChecksumError:
            raise
        except CorruptionError as e:
            raise ChecksumError(kind_name, index, f"chunk failed to decode: {e}") from e
    if zlib.crc32(out) != c.crc32:
        raise ChecksumError(kind_name, index)
    return out


def decode_stream(blob: bytes, parsed: ParsedContainer, kind: int, threads: int = 1) -> bytes:
    sd = parsed.stream(kind)
    if threads > 1 and len(sd.chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda i: _decode_chunk_entry(blob, sd, i), range(len(sd.chunks))))
    else:
        parts = [_decode_chunk_entry(blob, sd, i) for i in range(len(sd.chunks))]
    return b"".join(parts)


def decode_chunk(blob: bytes, kind: int, chunk_index: int) -> bytes:
    """Random access: decode one chunk of one stream, verifying its CRC."""
    parsed = parse_container(blob)
    sd = parsed.stream(kind)
    if not 0 <= chunk_index < len(sd.chunks):
        raise FormatError(
            f"chunk index {chunk_index} out of range (stream has {len(sd.chunks)} chunks)"
        )
    return _decode_chunk_entry(blob, sd, chunk_index)


def _format_for(fmt: formats.FloatFormat) -> int:
    try:
        return FORMAT_IDS[fmt.name]
    except KeyError:
        raise FormatError(f"{fmt.name} tensors have no container mapping")


def compress_tensor(
    raw: bytes,
    fmt: formats.FloatFormat,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    *,
    threads: int = 1,
    _flags: int = 0,
    _base_crc: int | None = None,
) -> tuple[bytes, CompressionReport]:
    """Split a tensor into streams and write the container."""
    planes = formats.split(raw, fmt)
    streams = [
        StreamSpec(KIND_EXPONENT, planes.exponent_stream),
        StreamSpec(KIND_SIGN_MANTISSA, planes.sign_mantissa_stream),
    ]
    return write_container(
        streams,
        _format_for(fmt),
        planes.element_count,
        len(raw),
        flags=_flags,
        base_crc=_base_crc,
        chunk_size=chunk_size,
        threads=threads,
    )


def compress_bytes(
    raw: bytes,
    *,
    format_id: int = FORMAT_IDS["RAW"],
    kind: int = KIND_OPAQUE,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    threads: int = 1,
) -> tuple[bytes, CompressionReport]:
    """Single-stream container for opaque byte tensors (RAW/SCALE kinds)."""
    return write_container(
        [StreamSpec(kind, raw)],
        format_id,
        len(raw),
        len(raw),
        chunk_size=chunk_size,
        threads=threads,
    )


def decompress_tensor(blob: bytes, *, threads: int = 1) -> bytes:
    """Bit-exact inverse of compress_tensor / compress_bytes."""
    parsed = parse_container(blob)
    name = parsed.format_name
    if name in ("MXFP4", "NVFP4"):
        nib = decode_stream(blob, parsed, KIND_RAW_NIBBLES, threads)
        scale = decode_stream(blob, parsed, KIND_SCALE, threads)
        return nib + scale
    if name == "RAW":
        return decode_stream(blob, parsed, KIND_OPAQUE, threads)
    if name == "SCALE":
        return decode_stream(blob, parsed, KIND_SCALE, threads)
    fmt = formats.FORMATS[name]
    exp = decode_stream(blob, parsed, KIND_EXPONENT, threads)
    sm = decode_stream(blob, parsed, KIND_SIGN_MANTISSA, threads)
    pad = 0
    if fmt is formats.FP8_E4M3:
        pad = parsed.element_count & 1
    planes = formats.BitPlanes(fmt, parsed.element_count, exp, sm, pad)
    return formats.merge(planes)


def profile_tensor(
    raw: bytes, fmt: formats.FloatFormat, chunk_size: int = DEFAULT_CHUNK_SIZE
) -> CompressionReport:
    """Predict per-stream entropy/ratios without writing any output.

    Sizes are exact: the Huffman payload length is a pure function of the
    chunk histogram, so this report matches what compress_tensor writes.
    """
    planes = formats.split(raw, fmt)
    specs = [
        StreamSpec(KIND_EXPONENT, planes.exponent_stream),
        StreamSpec(KIND_SIGN_MANTISSA, planes.sign_mantissa_stream),
    ]
    return _profile_streams(specs, _format_for(fmt), planes.element_count, len(raw), chunk_size)


def _profile_streams(
    specs: list[StreamSpec],
    format_id: int,
    element_count: int,
    original_bytes: int,
    chunk_size: int,
    extra_header: int = 0,
) -> CompressionReport:
    stream_reports = [_measure_stream(s, chunk_size) for s in specs]
    header = _HEADER.size + extra_header
    directory = sum(
        _DIR_HEAD.size
        + _CHUNK_ENTRY.size * ((len(s.data) + chunk_size - 1) // chunk_size)
        for s in specs
    )
    total = header + directory + sum(r.compressed_bytes for r in stream_reports)
    return CompressionReport(
        format=FORMAT_NAMES[format_id],
        element_count=element_count,
        original_bytes=original_bytes,
        compressed_bytes=total,
        overhead_bytes=header + directory,
        total_ratio=total / original_bytes if original_bytes else 0.0,
        streams=stream_reports,
    )
