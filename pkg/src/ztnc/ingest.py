"""Model file ingest: safetensors parsing and the per-tensor archive.

A safetensors file is an 8-byte little-endian header length, a JSON header
mapping tensor names to {dtype, shape, data_offsets}, then the data region.
The archive produced here compresses each supported tensor into its own
container and stores every other byte of the file verbatim (the header,
region gaps, unknown-dtype tensors), so decompression reproduces the input
file exactly, not just the tensor values.

Archive layout: magic "ZTNA" | version u16 | manifest_len u32 |
manifest JSON | blob section (manifest offsets index into the blobs).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from . import container, formats
from .errors import CorruptionError, HeaderError, TruncatedError

ARCHIVE_MAGIC = b"ZTNA"
ARCHIVE_VERSION = 1

_ARCHIVE_HEAD = struct.Struct("<4sHI")

# safetensors dtype token -> (FloatFormat name or RAW, element size)
DTYPE_MAP = {
    "BF16": ("BF16", 2),
    "F8_E4M3": ("FP8_E4M3", 1),
    "F8_E5M2": ("FP8_E5M2", 1),
    "U8": ("RAW", 1),
}


@dataclass
class TensorEntry:
    name: str
    dtype: str
    shape: list[int]
    begin: int  # offsets into the data region
    end: int

    @property
    def nbytes(self) -> int:
        return self.end - self.begin


@dataclass
class ModelFile:
    raw: bytes
    data_start: int
    entries: list[TensorEntry]  # supported dtypes, header order
    skipped: list[TensorEntry]  # unknown dtypes, stored verbatim

    def tensor_bytes(self, e: TensorEntry) -> bytes:
        return self.raw[self.data_start + e.begin : self.data_start + e.end]


def parse_model(raw: bytes) -> ModelFile:
    if len(raw) < 8:
        raise TruncatedError("file shorter than the safetensors length prefix")
    (hlen,) = struct.unpack_from("<Q", raw, 0)
    if 8 + hlen > len(raw):
        raise TruncatedError(f"header length {hlen} exceeds the file")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise HeaderError(f"header is not valid JSON: {e}") from e
    if not isinstance(header, dict):
        raise HeaderError("header JSON is not an object")
    data_start = 8 + hlen
    region = len(raw) - data_start

    entries, skipped = [], []
    for name, meta in header.items():
        if name == "__metadata__":
            continue
        if not isinstance(meta, dict):
            raise HeaderError(f"tensor {name!r}: metadata is not an object")
        try:
            dtype = meta["dtype"]
            shape = list(meta["shape"])
            begin, end = meta["data_offsets"]
        except (KeyError, TypeError, ValueError) as e:
            raise HeaderError(f"tensor {name!r}: malformed metadata ({e})") from e
        if not all(isinstance(d, int) and d >= 0 for d in shape):
            raise HeaderError(f"tensor {name!r}: bad shape {shape}")
        if not (isinstance(begin, int) and isinstance(end, int) and 0 <= begin <= end <= region):
            raise HeaderError(f"tensor {name!r}: offsets [{begin}, {end}) outside data region")
        entry = TensorEntry(name, dtype, shape, begin, end)
        if dtype in DTYPE_MAP:
            count = 1
            for d in shape:
                count *= d
            if entry.nbytes != count * DTYPE_MAP[dtype][1]:
                raise HeaderError(
                    f"tensor {name!r}: {entry.nbytes} bytes but shape implies "
                    f"{count * DTYPE_MAP[dtype][1]}"
                )
            entries.append(entry)
        else:
            skipped.append(entry)

    ordered = sorted(entries + skipped, key=lambda e: e.begin)
    for a, b in zip(ordered, ordered[1:]):
        if a.end > b.begin:
            raise HeaderError(f"tensors {a.name!r} and {b.name!r} overlap")
    return ModelFile(raw, data_start, entries, skipped)


def write_model(tensors: list[tuple[str, str, list[int], bytes]]) -> bytes:
    """Assemble a safetensors file; tensors are (name, dtype, shape, data)."""
    header = {}
    offset = 0
    blobs = []
    for name, dtype, shape, data in tensors:
        header[name] = {
            "dtype": dtype,
            "shape": shape,
            "data_offsets": [offset, offset + len(data)],
        }
        blobs.append(data)
        offset += len(data)
    hjson = json.dumps(header).encode("utf-8")
    return struct.pack("<Q", len(hjson)) + hjson + b"".join(blobs)


@dataclass
class ModelReport:
    original_size: int
    archive_size: int
    tensors: list[tuple[str, container.CompressionReport]] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    verbatim_bytes: int = 0

    @property
    def tensor_original(self) -> int:
        return sum(r.original_bytes for _, r in self.tensors)

    @property
    def tensor_compressed(self) -> int:
        return sum(r.compressed_bytes for _, r in self.tensors)

    @property
    def aggregate_ratio(self) -> float:
        n = self.tensor_original
        return self.tensor_compressed / n if n else 0.0

    @property
    def total_ratio(self) -> float:
        return self.archive_size / self.original_size if self.original_size else 0.0

    def to_dict(self) -> dict:
        return {
            "original_size": self.original_size,
            "archive_size": self.archive_size,
            "total_ratio": self.total_ratio,
            "tensor_original": self.tensor_original,
            "tensor_compressed": self.tensor_compressed,
            "aggregate_ratio": self.aggregate_ratio,
            "verbatim_bytes": self.verbatim_bytes,
            "skipped": self.skipped,
            "tensors": [dict(r.to_dict(), name=n) for n, r in self.tensors],
        }


def _compress_entry(
    model: ModelFile, e: TensorEntry, chunk_size: int, threads: int
) -> tuple[bytes, container.CompressionReport]:
    data = model.tensor_bytes(e)
    fmt_name = DTYPE_MAP[e.dtype][0]
    if fmt_name == "RAW":
        return container.compress_bytes(data, chunk_size=chunk_size, threads=threads)
    return container.compress_tensor(
        data, formats.FORMATS[fmt_name], chunk_size, threads=threads
    )


def compress_model(
    raw: bytes,
    chunk_size: int = container.DEFAULT_CHUNK_SIZE,
    *,
    threads: int = 1,
) -> tuple[bytes, ModelReport]:
    model = parse_model(raw)

    blob = bytearray()
    tensors_meta = []
    reports = []
    for e in model.entries:
        cont, rep = _compress_entry(model, e, chunk_size, threads)
        tensors_meta.append(
            {
                "name": e.name,
                "dtype": e.dtype,
                "format": DTYPE_MAP[e.dtype][0],
                "shape": e.shape,
                "file_offset": model.data_start + e.begin,
                "length": e.nbytes,
                "blob_offset": len(blob),
                "blob_length": len(cont),
            }
        )
        reports.append((e.name, rep))
        blob += cont

    # everything not covered by a compressed tensor is stored verbatim
    covered = sorted((model.data_start + e.begin, model.data_start + e.end) for e in model.entries)
    verbatim_meta = []
    verbatim_total = 0
    pos = 0
    for begin, end in covered + [(len(raw), len(raw))]:
        if pos < begin:
            verbatim_meta.append(
                {"file_offset": pos, "length": begin - pos, "blob_offset": len(blob)}
            )
            blob += raw[pos:begin]
            verbatim_total += begin - pos
        pos = max(pos, end)

    manifest = {
        "version": ARCHIVE_VERSION,
        "original_size": len(raw),
        "tensors": tensors_meta,
        "verbatim": verbatim_meta,
        "skipped": [
            {"name": e.name, "dtype": e.dtype, "length": e.nbytes} for e in model.skipped
        ],
    }
    mjson = json.dumps(manifest).encode("utf-8")
    archive = _ARCHIVE_HEAD.pack(ARCHIVE_MAGIC, ARCHIVE_VERSION, len(mjson)) + mjson + bytes(blob)
    report = ModelReport(
        original_size=len(raw),
        archive_size=len(archive),
        tensors=reports,
        skipped=manifest["skipped"],
        verbatim_bytes=verbatim_total,
    )
    return archive, report


def _parse_archive(archive: bytes) -> tuple[dict, int]:
    """Returns (manifest, blob section offset)."""
    if len(archive) < _ARCHIVE_HEAD.size:
        raise TruncatedError("archive shorter than its header")
    magic, version, mlen = _ARCHIVE_HEAD.unpack_from(archive, 0)
    if magic != ARCHIVE_MAGIC:
        raise HeaderError(f"bad archive magic {magic!r}")
    if version != ARCHIVE_VERSION:
        raise HeaderError(f"unsupported archive version {version}")
    if len(archive) < _ARCHIVE_HEAD.size + mlen:
        raise TruncatedError("archive truncated inside its manifest")
    try:
        manifest = json.loads(archive[_ARCHIVE_HEAD.size : _ARCHIVE_HEAD.size + mlen])
    except json.JSONDecodeError as e:
        raise HeaderError(f"archive manifest is not valid JSON: {e}") from e
    return manifest, _ARCHIVE_HEAD.size + mlen


def decompress_model(archive: bytes, *, threads: int = 1) -> bytes:
    manifest, blob_start = _parse_archive(archive)
    out = bytearray(manifest["original_size"])
    for seg in manifest["verbatim"]:
        data = archive[blob_start + seg["blob_offset"] :][: seg["length"]]
        if len(data) != seg["length"]:
            raise TruncatedError("archive missing verbatim bytes")
        out[seg["file_offset"] : seg["file_offset"] + seg["length"]] = data
    for t in manifest["tensors"]:
        cont = archive[blob_start + t["blob_offset"] :][: t["blob_length"]]
        data = container.decompress_tensor(cont, threads=threads)
        if len(data) != t["length"]:
            raise CorruptionError(
                f"tensor {t['name']!r} decoded to {len(data)} bytes, expected {t['length']}"
            )
        out[t["file_offset"] : t["file_offset"] + t["length"]] = data
    return bytes(out)


def read_archive_tensor(archive: bytes, name: str) -> bytes:
    """Random access: decompress a single tensor from an archive by name."""
    manifest, blob_start = _parse_archive(archive)
    for t in manifest["tensors"]:
        if t["name"] == name:
            cont = archive[blob_start + t["blob_offset"] :][: t["blob_length"]]
            return container.decompress_tensor(cont)
    raise KeyError(name)
