"""Canonical Huffman coder over byte symbols.

One coder serves every stream: sub-byte fields are packed into bytes
upstream (formats/fp4), so the alphabet is always 0..255. Codes are
canonical (determined entirely by per-symbol lengths, codewords assigned
in (length, symbol) order), capped at 15 bits via package-merge when the
unconstrained tree is deeper, and serialized as a sparse
(symbol, length) table. Bits are packed most-significant-first.
"""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CodebookError, CorruptionError, FormatError, MissingSymbolError

MAX_CODE_LENGTH = 15
# Store a chunk raw unless coding (including its codebook) saves 2%.
FALLBACK_THRESHOLD = 0.98


@dataclass
class Histogram:
    """Symbol counts over the byte alphabet."""

    counts: list[int]
    total: int

    def __add__(self, other: "Histogram") -> "Histogram":
        merged = [a + b for a, b in zip(self.counts, other.counts)]
        return Histogram(merged, self.total + other.total)


def histogram(data: bytes) -> Histogram:
    arr = np.frombuffer(data, np.uint8)
    counts = np.bincount(arr, minlength=256)
    return Histogram(counts.tolist(), int(counts.sum()))


def entropy_bits_per_symbol(h: Histogram) -> float:
    """Shannon entropy of the histogram in bits per symbol."""
    if h.total <= 0:
        raise FormatError("entropy of an empty histogram is undefined")
    total = h.total
    ent = 0.0
    for c in h.counts:
        if c:
            p = c / total
            ent -= p * math.log2(p)
    return ent


def _huffman_lengths(present: list[tuple[int, int]]) -> list[int]:
    """Unconstrained Huffman code lengths for [(symbol, count), ...].

    Ties are broken deterministically: equal-weight leaves pop in
    ascending symbol order and before equal-weight internal nodes.
    """
    lengths = [0] * 256
    # heap entries: (weight, order, [symbols...]); leaf order = symbol,
    # internal nodes get orders 256, 257, ... so leaves win weight ties.
    heap = [(c, sym, [sym]) for sym, c in present]
    heapq.heapify(heap)
    order = 256
    while len(heap) > 1:
        w1, _, s1 = heapq.heappop(heap)
        w2, _, s2 = heapq.heappop(heap)
        for s in s1:
            lengths[s] += 1
        for s in s2:
            lengths[s] += 1
        heapq.heappush(heap, (w1 + w2, order, s1 + s2))
        order += 1
    return lengths


def _package_merge_lengths(present: list[tuple[int, int]], limit: int) -> list[int]:
    """Optimal length-limited code lengths (package-merge).

    Each symbol must receive between 1 and `limit` bits; the solution
    buys total Kraft width n-1 at minimal weight, which yields Kraft
    equality for the chosen lengths.
    """
    n = len(present)
    if n > (1 << limit):
        raise FormatError(f"{n} symbols cannot fit in {limit}-bit codes")
    # items: (weight, symbol_count_vector) -- track per-symbol selection
    # counts; a symbol's final length is how many levels selected it.
    base = sorted(present, key=lambda sc: (sc[1], sc[0]))
    singles = [(c, {sym: 1}) for sym, c in base]
    merged = list(singles)
    for _ in range(limit - 1):
        packages = []
        for i in range(0, len(merged) - 1, 2):
            w = merged[i][0] + merged[i + 1][0]
            syms = dict(merged[i][1])
            for s, k in merged[i + 1][1].items():
                syms[s] = syms.get(s, 0) + k
            packages.append((w, syms))
        merged = sorted(singles + packages, key=lambda ws: ws[0])
    lengths = [0] * 256
    for w, syms in merged[: 2 * (n - 1)]:
        for s, k in syms.items():
            lengths[s] += k
    return lengths


class Codebook:
    """Canonical Huffman code: per-symbol lengths plus derived codewords."""

    def __init__(self, lengths: list[int]):
        if len(lengths) != 256:
            raise FormatError("lengths must cover the full byte alphabet")
        present = [(l, s) for s, l in enumerate(lengths) if l > 0]
        if not present:
            raise FormatError("codebook needs at least one symbol")
        for l, s in present:
            if l > MAX_CODE_LENGTH:
                raise CodebookError(f"symbol 0x{s:02X} length {l} exceeds {MAX_CODE_LENGTH}")
        if len(present) == 1:
            if present[0][0] != 1:
                raise CodebookError("single-symbol codebook must use length 1")
        else:
            kraft = sum(1 << (MAX_CODE_LENGTH - l) for l, _ in present)
            if kraft != 1 << MAX_CODE_LENGTH:
                raise CodebookError("code lengths violate Kraft equality")
        self.lengths = list(lengths)
        self.max_len = MAX_CODE_LENGTH
        codewords = [0] * 256
        code = 0
        prev = 0
        for l, s in sorted(present):
            code <<= l - prev
            codewords[s] = code
            code += 1
            prev = l
        self.codewords = codewords
        self._present = present
        self._bitstrings: list[str | None] | None = None
        self._decode_tables: tuple[list[int], list[int], int] | None = None

    @property
    def present_symbols(self) -> list[int]:
        return [s for _, s in sorted(self._present, key=lambda ls: ls[1])]

    def expected_bits(self, h: Histogram) -> int:
        """Exact payload bit count for data with histogram h."""
        return sum(c * self.lengths[s] for s, c in enumerate(h.counts) if c)

    def bitstrings(self) -> list[str | None]:
        if self._bitstrings is None:
            table: list[str | None] = [None] * 256
            for l, s in self._present:
                table[s] = format(self.codewords[s], f"0{l}b")
            self._bitstrings = table
        return self._bitstrings

    def decode_tables(self) -> tuple[list[int], list[int], int]:
        """(symbol, length) lookup tables over all prefixes of the longest
        present code length. Entries not covered by any code carry
        length 0 (possible only for the single-symbol codebook)."""
        if self._decode_tables is None:
            depth = max(l for l, _ in self._present)
            size = 1 << depth
            sym_t = np.zeros(size, np.int32)
            len_t = np.zeros(size, np.int32)
            for l, s in self._present:
                start = self.codewords[s] << (depth - l)
                end = start + (1 << (depth - l))
                sym_t[start:end] = s
                len_t[start:end] = l
            self._decode_tables = (sym_t.tolist(), len_t.tolist(), depth)
        return self._decode_tables


def build_codebook(h: Histogram) -> Codebook:
    """Optimal prefix code for h, capped at MAX_CODE_LENGTH bits."""
    if h.total <= 0:
        raise FormatError("cannot build a codebook from an empty histogram")
    present = [(s, c) for s, c in enumerate(h.counts) if c > 0]
    if len(present) == 1:
        lengths = [0] * 256
        lengths[present[0][0]] = 1
        return Codebook(lengths)
    lengths = _huffman_lengths(present)
    if max(lengths) > MAX_CODE_LENGTH:
        lengths = _package_merge_lengths(present, MAX_CODE_LENGTH)
    return Codebook(lengths)


@dataclass
class EncodedStream:
    """A Huffman bitstream packed into bytes (final byte zero-padded)."""

    payload: bytes
    bit_count: int
    symbol_count: int


def encode(data: bytes, cb: Codebook) -> EncodedStream:
    if data:
        missing = set(data).difference(cb.present_symbols)
        if missing:
            raise MissingSymbolError(min(missing))
        table = cb.bitstrings()
        bits = "".join(map(table.__getitem__, data))
    else:
        bits = ""
    bit_count = len(bits)
    nbytes = (bit_count + 7) // 8
    if bit_count:
        payload = (int(bits, 2) << (8 * nbytes - bit_count)).to_bytes(nbytes, "big")
    else:
        payload = b""
    return EncodedStream(payload, bit_count, len(data))


def _decode_bits(payload: bytes, bit_limit: int, cb: Codebook, n: int) -> tuple[bytes, int]:
    """Decode n symbols; returns (symbols, bits consumed).

    Reads may peek past bit_limit into zero padding; the caller-facing
    wrappers reject streams whose consumed bits disagree with the stated
    bit budget.
    """
    sym_t, len_t, depth = cb.decode_tables()
    data = payload + b"\x00\x00"
    out = bytearray(n)
    acc = 0
    nbits = 0
    pos = 0
    consumed = 0
    mask = (1 << depth) - 1
    for i in range(n):
        while nbits < depth:
            acc = (acc << 8) | data[pos]
            pos += 1
            nbits += 8
        window = (acc >> (nbits - depth)) & mask
        l = len_t[window]
        if l == 0:
            raise CorruptionError("bit pattern matches no code in the codebook")
        out[i] = sym_t[window]
        nbits -= l
        acc &= (1 << nbits) - 1
        consumed += l
        if consumed > bit_limit:
            raise CorruptionError(
                f"bitstream exhausted after {i} of {n} symbols"
            )
    return bytes(out), consumed


def decode(stream: EncodedStream, cb: Codebook, n: int) -> bytes:
    """Inverse of encode: exactly n symbols consuming exactly bit_count bits."""
    if 8 * len(stream.payload) < stream.bit_count:
        raise CorruptionError(
            f"payload of {len(stream.payload)} bytes cannot hold {stream.bit_count} bits"
        )
    out, consumed = _decode_bits(stream.payload, stream.bit_count, cb, n)
    if consumed != stream.bit_count:
        raise CorruptionError(
            f"decoded {n} symbols in {consumed} bits but stream holds {stream.bit_count}"
        )
    return out


def decode_padded(payload: bytes, cb: Codebook, n: int) -> bytes:
    """Decode exactly n symbols from a byte-aligned payload.

    Used where only the byte length survives serialization: the bit count
    is recovered by decoding, then the byte length and the zero padding in
    the final byte are both verified.
    """
    out, consumed = _decode_bits(payload, 8 * len(payload), cb, n)
    if (consumed + 7) // 8 != len(payload):
        raise CorruptionError(
            f"decoded {consumed} bits but payload holds {len(payload)} bytes"
        )
    pad = 8 * len(payload) - consumed
    if pad and payload[-1] & ((1 << pad) - 1):
        raise CorruptionError("nonzero padding bits after final symbol")
    return out


def should_compress(h: Histogram, cb: Codebook, codebook_ser_size: int) -> str:
    """'huffman' iff coding (payload + codebook) beats raw by the threshold."""
    if h.total <= 0:
        raise FormatError("empty histogram")
    payload_bytes = (cb.expected_bits(h) + 7) // 8
    ratio = (payload_bytes + codebook_ser_size) / h.total
    return "huffman" if ratio < FALLBACK_THRESHOLD else "raw"


def serialize_codebook(cb: Codebook) -> bytes:
    """u16 LE present-symbol count, then (symbol u8, length u8) sorted by symbol."""
    pairs = sorted((s, cb.lengths[s]) for s in cb.present_symbols)
    out = bytearray(struct.pack("<H", len(pairs)))
    for s, l in pairs:
        out += struct.pack("BB", s, l)
    return bytes(out)


def deserialize_codebook(blob: bytes) -> Codebook:
    if len(blob) < 2:
        raise CodebookError("codebook table shorter than its count field")
    (count,) = struct.unpack_from("<H", blob, 0)
    if len(blob) != 2 + 2 * count:
        raise CodebookError(f"codebook table size mismatch for {count} symbols")
    lengths = [0] * 256
    prev = -1
    for i in range(count):
        s, l = struct.unpack_from("BB", blob, 2 + 2 * i)
        if s <= prev:
            raise CodebookError("codebook symbols not strictly ascending")
        if l == 0 or l > MAX_CODE_LENGTH:
            raise CodebookError(f"symbol 0x{s:02X} has invalid length {l}")
        lengths[s] = l
        prev = s
    return Codebook(lengths)
