"""Load executable bytes and shape them into byte grids.

Widths for the variable-geometry path come from a file-size lookup with
half-open KB bins (lo, hi], 1KB = 1024 bytes.  A file of exactly 10KB
therefore gets the width of the (0, 10] bin.
"""

import math
from dataclasses import dataclass, field

from .errors import EmptyFileError

KB = 1024

# (upper bound in KB, width); sizes above the last bound get 1024.
WIDTH_BINS = (
    (10, 32),
    (30, 64),
    (60, 128),
    (100, 256),
    (200, 384),
    (500, 512),
    (1000, 768),
)
MAX_WIDTH = 1024


@dataclass(frozen=True)
class RawBinary:
    """One executable: its bytes plus provenance."""

    path: str
    family: str
    data: bytes
    flags: tuple = ()

    @property
    def size_bytes(self):
        return len(self.data)


@dataclass(frozen=True)
class ByteGrid:
    """Row-major width x height grid of byte values."""

    width: int
    height: int
    data: bytes

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if len(self.data) != self.width * self.height:
            raise ValueError("grid data length must equal width * height")


def bin_width(size_bytes):
    """Image width for a file of the given size, per the KB-bin lookup."""
    if size_bytes < 0:
        raise ValueError("size_bytes must be nonnegative")
    if size_bytes == 0:
        raise EmptyFileError("cannot choose a width for an empty file")
    for hi_kb, width in WIDTH_BINS:
        if size_bytes <= hi_kb * KB:
            return width
    return MAX_WIDTH


def truncate_pad(data, target_len):
    """First target_len bytes of data, zero-padded if data is shorter."""
    if target_len <= 0:
        raise ValueError("target_len must be positive")
    if len(data) >= target_len:
        return bytes(data[:target_len])
    return bytes(data) + b"\x00" * (target_len - len(data))


def layout_grid(data, width):
    """Lay bytes out row-major at a fixed width; the last row is zero-padded."""
    if width <= 0:
        raise ValueError("width must be positive")
    if len(data) == 0:
        raise EmptyFileError("cannot lay out an empty byte sequence")
    height = math.ceil(len(data) / width)
    padded = truncate_pad(data, width * height)
    return ByteGrid(width=width, height=height, data=padded)


def read_binary(path, family):
    """Read one file from disk into a RawBinary."""
    with open(path, "rb") as f:
        data = f.read()
    return RawBinary(path=str(path), family=family, data=data)
