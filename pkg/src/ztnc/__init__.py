"""Lossless compression for low-precision neural-network tensors.

Tensors are split into an exponent stream and a sign+mantissa stream, each
entropy-coded independently with canonical Huffman codes and packaged in a
chunked container with per-chunk checksums and random access. Includes XOR
deltas for checkpoint pairs, scale-only FP4 handling, streaming kv-cache
sessions with precomputed dictionaries, and safetensors model archives.
"""

from .container import (
    DEFAULT_CHUNK_SIZE,
    CompressionReport,
    StreamReport,
    compress_bytes,
    compress_tensor,
    decode_chunk,
    decompress_tensor,
    parse_container,
    profile_tensor,
)
from .delta import apply_delta, compress_delta, xor_delta
from .errors import (
    ChecksumError,
    CodebookError,
    CorruptionError,
    FormatError,
    HeaderError,
    MissingSymbolError,
    TruncatedError,
    ZtncError,
)
from .formats import BF16, FP4_E2M1, FP8_E4M3, FP8_E5M2, FORMATS, BitPlanes, FloatFormat, merge, split
from .fp4 import (
    LAYOUTS,
    MXFP4,
    NVFP4,
    Fp4Layout,
    Fp4Tensor,
    compress_fp4,
    decompress_fp4,
    join_combined,
    regroup_bits_experiment,
    split_combined,
    unpack_nibbles,
)
from .ingest import (
    ModelReport,
    compress_model,
    decompress_model,
    parse_model,
    read_archive_tensor,
    write_model,
)
from .kvcache import KvSession, KvStreamDecoder, decode_session, open_session

__version__ = "0.1.0"

__all__ = [
    "BF16",
    "FP4_E2M1",
    "FP8_E4M3",
    "FP8_E5M2",
    "FORMATS",
    "LAYOUTS",
    "MXFP4",
    "NVFP4",
    "DEFAULT_CHUNK_SIZE",
    "BitPlanes",
    "ChecksumError",
    "CodebookError",
    "CompressionReport",
    "CorruptionError",
    "FloatFormat",
    "FormatError",
    "Fp4Layout",
    "Fp4Tensor",
    "HeaderError",
    "KvSession",
    "KvStreamDecoder",
    "MissingSymbolError",
    "ModelReport",
    "StreamReport",
    "TruncatedError",
    "ZtncError",
    "apply_delta",
    "compress_bytes",
    "compress_delta",
    "compress_fp4",
    "compress_model",
    "compress_tensor",
    "decode_chunk",
    "decode_session",
    "decompress_fp4",
    "decompress_model",
    "decompress_tensor",
    "join_combined",
    "merge",
    "open_session",
    "parse_container",
    "parse_model",
    "profile_tensor",
    "read_archive_tensor",
    "regroup_bits_experiment",
    "split",
    "split_combined",
    "unpack_nibbles",
    "write_model",
    "xor_delta",
    "__version__",
]
