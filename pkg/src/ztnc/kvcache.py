"""Streaming sessions for K/V-cache tensors produced once per decode step.

A session builds Huffman codebooks once from calibration data and reuses
them every step, so the per-step cost is split + table lookup with no
codebook construction. Realized ratios are watched through a sliding
window; when the window mean drifts past the calibration baseline the
codebooks are rebuilt from the histograms accumulated since the last
build. Each rebuild bumps a generation number that is written into the
stream, so decoding needs nothing but the stream itself.

Stream layout (little-endian):

  header   magic "ZTNS" | version u16 | format_id u8 | stream_count u8
  frames   0x02 generation record: gen u32, then per stream
             {flag u8 (0 raw / 1 huffman), codebook_len u16, codebook}
           0x01 step: step_index u32, gen u32, orig_len u32,
             comp_len u32 per stream, then the payloads back to back

A generation record always precedes the first step that uses it; the
header is immediately followed by the generation-0 record.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import container, entropy, formats
from .errors import CorruptionError, FormatError, HeaderError, TruncatedError

MAGIC = b"ZTNS"
VERSION = 1

DEFAULT_WINDOW = 32
DEFAULT_THRESHOLD = 0.05

FRAME_STEP = 0x01
FRAME_GENERATION = 0x02

_HEADER = struct.Struct("<4sHBB")

SESSION_FORMATS = ("BF16", "FP8_E4M3")


def _smoothed_codebook(counts: np.ndarray) -> entropy.Codebook:
    # add-one smoothing: every byte stays encodable after any drift
    h = entropy.Histogram([int(c) + 1 for c in counts], int(counts.sum()) + 256)
    return entropy.build_codebook(h)


def _bincount(data: bytes) -> np.ndarray:
    return np.bincount(np.frombuffer(data, np.uint8), minlength=256).astype(np.int64)


@dataclass
class _StreamState:
    kind: int
    flag: int  # container.FLAG_CHUNK_RAW or FLAG_CHUNK_HUFFMAN
    codebook: entropy.Codebook | None


class KvSession:
    """Single-writer encoder state; one session per tensor stream."""

    def __init__(
        self,
        fmt: formats.FloatFormat,
        calibration: list[bytes],
        *,
        window: int = DEFAULT_WINDOW,
        threshold: float = DEFAULT_THRESHOLD,
    ):
        if fmt.name not in SESSION_FORMATS:
            raise FormatError(f"sessions support {SESSION_FORMATS}, not {fmt.name}")
        if not calibration:
            raise FormatError("calibration batch is empty")
        if sum(len(t) for t in calibration) == 0:
            raise FormatError("calibration batch holds no bytes")
        if window < 1:
            raise FormatError("window must be at least 1")
        self.format = fmt
        self.window = window
        self.threshold = threshold
        self.generation = 0
        self.steps_encoded = 0
        self.codebook_builds = 0
        self.ratio_window: deque[float] = deque(maxlen=window)
        self.rebuild_steps: list[int] = []
        self._monitor = [np.zeros(256, np.int64), np.zeros(256, np.int64)]
        self._bytes_since_build = 0
        self._streams: list[_StreamState] = []
        self.baseline_ratio = 0.0

        pooled = [np.zeros(256, np.int64), np.zeros(256, np.int64)]
        total = 0
        for t in calibration:
            planes = formats.split(t, fmt)
            pooled[0] += _bincount(planes.exponent_stream)
            pooled[1] += _bincount(planes.sign_mantissa_stream)
            total += len(t)
        self._build(pooled, total)

    def _build(self, pooled: list[np.ndarray], original_bytes: int):
        """(Re)derive per-stream codebooks and the baseline from histograms."""
        kinds = (container.KIND_EXPONENT, container.KIND_SIGN_MANTISSA)
        streams = []
        predicted = 0
        for kind, counts in zip(kinds, pooled):
            cb = _smoothed_codebook(counts)
            h = entropy.Histogram([int(c) for c in counts], int(counts.sum()))
            raw = False
            if kind == container.KIND_SIGN_MANTISSA:
                if self.format is not formats.BF16:
                    raw = True  # FP8 mantissa stays raw, it rarely compresses
                elif h.total and entropy.should_compress(h, cb, 0) == "raw":
                    raw = True
            if raw:
                streams.append(_StreamState(kind, container.FLAG_CHUNK_RAW, None))
                predicted += h.total
            else:
                streams.append(_StreamState(kind, container.FLAG_CHUNK_HUFFMAN, cb))
                predicted += (cb.expected_bits(h) + 7) // 8
        self._streams = streams
        self.baseline_ratio = predicted / original_bytes if original_bytes else 0.0
        self.codebook_builds += 1

    def stream_header(self) -> bytes:
        head = _HEADER.pack(
            MAGIC, VERSION, container.FORMAT_IDS[self.format.name], len(self._streams)
        )
        return head + self.generation_record()

    def generation_record(self) -> bytes:
        out = bytearray(struct.pack("<BI", FRAME_GENERATION, self.generation))
        for s in self._streams:
            cb = b"" if s.codebook is None else entropy.serialize_codebook(s.codebook)
            out += struct.pack("<BH", s.flag, len(cb))
            out += cb
        return bytes(out)

    def compress_step(self, tensor: bytes) -> tuple[bytes, float]:
        """Encode one step with the static codebooks; no table construction."""
        if not tensor:
            raise FormatError("empty step tensor")
        planes = formats.split(tensor, self.format)
        raws = [planes.exponent_stream, planes.sign_mantissa_stream]
        payloads = []
        for s, data, mon in zip(self._streams, raws, self._monitor):
            mon += _bincount(data)  # monitoring only, never used for coding here
            if s.flag == container.FLAG_CHUNK_HUFFMAN:
                payloads.append(entropy.encode(data, s.codebook).payload)
            else:
                payloads.append(data)
        head = struct.pack(
            "<BIII", FRAME_STEP, self.steps_encoded, self.generation, len(tensor)
        )
        head += struct.pack("<" + "I" * len(payloads), *(len(p) for p in payloads))
        frame = head + b"".join(payloads)
        ratio = len(frame) / len(tensor)
        self.ratio_window.append(ratio)
        self.steps_encoded += 1
        self._bytes_since_build += len(tensor)
        return frame, ratio

    def maybe_rebuild(self) -> str:
        """Call after each step. 'rebuilt' means a fresh generation record

        must be appended to the stream before the next step frame."""
        if len(self.ratio_window) < self.window:
            return "kept"
        mean = sum(self.ratio_window) / len(self.ratio_window)
        if mean <= self.baseline_ratio + self.threshold:
            return "kept"
        self._build([m.copy() for m in self._monitor], self._bytes_since_build)
        self.generation += 1
        self.rebuild_steps.append(self.steps_encoded)
        self.ratio_window.clear()
        for m in self._monitor:
            m[:] = 0
        self._bytes_since_build = 0
        return "rebuilt"


def open_session(
    fmt: formats.FloatFormat,
    calibration: list[bytes],
    *,
    window: int = DEFAULT_WINDOW,
    threshold: float = DEFAULT_THRESHOLD,
) -> KvSession:
    return KvSession(fmt, calibration, window=window, threshold=threshold)


def _stream_symbol_counts(fmt: formats.FloatFormat, orig_len: int) -> tuple[int, int, int]:
    """(exponent symbols, sign_mantissa symbols, pad elements) for one step."""
    if fmt is formats.BF16:
        if orig_len % 2:
            raise CorruptionError("BF16 step length is odd")
        ec = orig_len // 2
        return ec, ec, 0
    ec = orig_len
    half = (ec + 1) // 2
    return half, half, ec & 1


class KvStreamDecoder:
    """Replays a session stream, tracking codebook generations."""

    def __init__(self, data: bytes):
        if len(data) < _HEADER.size:
            raise TruncatedError("session stream shorter than its header")
        magic, version, format_id, stream_count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise HeaderError(f"bad session magic {magic!r}")
        if version != VERSION:
            raise HeaderError(f"unsupported session version {version}")
        name = container.FORMAT_NAMES.get(format_id)
        if name not in SESSION_FORMATS:
            raise HeaderError(f"session format id {format_id} is not a session format")
        if stream_count != 2:
            raise HeaderError(f"session declares {stream_count} streams, expected 2")
        self.format = formats.FORMATS[name]
        self._data = data
        self._pos = _HEADER.size
        self.generation = -1  # no record seen yet
        self._flags: list[int] = []
        self._codebooks: list[entropy.Codebook | None] = []

    def _take(self, n: int, what: str) -> bytes:
        if self._pos + n > len(self._data):
            raise TruncatedError(f"session stream truncated inside {what}")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def _read_generation(self):
        (gen,) = struct.unpack("<I", self._take(4, "generation record"))
        if gen != self.generation + 1:
            raise CorruptionError(
                f"generation record {gen} does not follow generation {self.generation}"
            )
        flags, codebooks = [], []
        for _ in range(2):
            flag, cb_len = struct.unpack("<BH", self._take(3, "generation record"))
            if flag not in (container.FLAG_CHUNK_RAW, container.FLAG_CHUNK_HUFFMAN):
                raise CorruptionError(f"unknown stream flag {flag} in generation record")
            blob = self._take(cb_len, "generation codebook")
            if flag == container.FLAG_CHUNK_HUFFMAN:
                codebooks.append(entropy.deserialize_codebook(blob))
            elif cb_len:
                raise CorruptionError("raw stream carries a codebook")
            else:
                codebooks.append(None)
            flags.append(flag)
        self.generation = gen
        self._flags = flags
        self._codebooks = codebooks

    def _read_step(self) -> tuple[int, bytes]:
        step_index, gen, orig_len = struct.unpack("<III", self._take(12, "step header"))
        if gen != self.generation:
            raise CorruptionError(
                f"step {step_index} uses generation {gen} but the stream is at "
                f"{self.generation}"
            )
        comp_lens = struct.unpack("<II", self._take(8, "step header"))
        n_exp, n_sm, pad = _stream_symbol_counts(self.format, orig_len)
        counts = (n_exp, n_sm)
        decoded = []
        for flag, cb, comp_len, n in zip(self._flags, self._codebooks, comp_lens, counts):
            payload = self._take(comp_len, f"step {step_index} payload")
            if flag == container.FLAG_CHUNK_HUFFMAN:
                decoded.append(entropy.decode_padded(payload, cb, n))
            else:
                if comp_len != n:
                    raise CorruptionError(
                        f"step {step_index}: raw stream holds {comp_len} bytes, "
                        f"expected {n}"
                    )
                decoded.append(payload)
        ec = orig_len // 2 if self.format is formats.BF16 else orig_len
        planes = formats.BitPlanes(self.format, ec, decoded[0], decoded[1], pad)
        return step_index, formats.merge(planes)

    def steps(self):
        """Yield (step_index, tensor bytes) in stream order."""
        while self._pos < len(self._data):
            (frame_type,) = self._take(1, "frame type")
            if frame_type == FRAME_GENERATION:
                self._read_generation()
            elif frame_type == FRAME_STEP:
                if self.generation < 0:
                    raise CorruptionError("step frame before any generation record")
                yield self._read_step()
            else:
                raise CorruptionError(f"unknown frame type 0x{frame_type:02x}")


def decode_session(data: bytes) -> list[bytes]:
    """All step tensors of a session stream, in encode order."""
    return [tensor for _, tensor in KvStreamDecoder(data).steps()]
