"""Exception taxonomy shared by every ztnc module.

Callers that only care about "my data is bad" vs "the archive is damaged"
can catch FormatError / CorruptionError; everything derives from ZtncError.
"""


class ZtncError(Exception):
    """Base class for all ztnc errors."""


class FormatError(ZtncError, ValueError):
    """Input does not satisfy a size/layout precondition (caller error)."""


class MissingSymbolError(ZtncError):
    """A symbol has no code in the codebook (stale static dictionary)."""

    def __init__(self, symbol: int):
        self.symbol = symbol
        super().__init__(f"symbol 0x{symbol:02X} has no code in this codebook")


class CorruptionError(ZtncError):
    """A container/stream failed an integrity check."""


class HeaderError(CorruptionError):
    """Bad magic bytes or unsupported version."""


class TruncatedError(CorruptionError):
    """The buffer ends before the structure it claims to hold."""


class CodebookError(CorruptionError):
    """A serialized codebook is malformed (bad pairs, lengths, Kraft sum)."""


class ChecksumError(CorruptionError):
    """A decoded chunk does not match its stored CRC32 (or failed to decode).

    Carries the stream kind name and chunk index so corruption can be
    localized without re-reading the container.
    """

    def __init__(self, stream: str, chunk_index: int, detail: str = "CRC32 mismatch"):
        self.stream = stream
        self.chunk_index = chunk_index
        super().__init__(f"stream {stream!r} chunk {chunk_index}: {detail}")
