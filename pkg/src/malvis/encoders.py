"""The four byte-to-image encodings plus nearest-neighbor resizing.

grayscale  one byte per pixel, value unchanged (1 channel)
colormap   one byte per pixel, looked up in a 256-entry RGB palette;
           high nibble = palette row, low nibble = column, which with a
           row-major 16x16 table is the same as indexing by the byte value
threegram  consecutive byte triples (b1, b2, b3) -> (b1, b2, 255 - b3)
pe         one pixel per byte; R = section entropy scaled to 0..255,
           G = the byte value, B = section size relative to file size

The bundled palette is the standard 256-entry "plasma" table (sampled
from matplotlib 3.10 at 256 evenly spaced points, rounded half-up to
8-bit); the checked-in data file is the contract, not the library.
"""

from dataclasses import dataclass
from importlib import resources

import numpy as np
from PIL import Image

from .errors import EmptyFileError
from .ingest import ByteGrid, bin_width

METHODS = ("grayscale", "colormap", "threegram", "pe")
GEOMETRIES = ("truncated", "resized")


@dataclass
class MalImage:
    """Fixed grid of 8-bit samples with its encoding provenance."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray  # (height, width, channels) uint8
    method: str
    geometry: str

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, self.channels):
            raise ValueError("pixel buffer does not match declared geometry")
        if (self.channels == 1) != (self.method == "grayscale"):
            raise ValueError("channel count inconsistent with method")

    def flat(self):
        """Row-major, channel-interleaved sample vector."""
        return self.pixels.reshape(-1)


class ColorMap256:
    """16x16 row-major RGB palette: exactly 256 (R, G, B) entries."""

    def __init__(self, entries):
        entries = np.asarray(entries, dtype=np.uint8)
        if entries.shape != (256, 3):
            raise ValueError("palette must have exactly 256 RGB entries")
        self.entries = entries

    def __getitem__(self, idx):
        return tuple(int(v) for v in self.entries[idx])

    @classmethod
    def from_file(cls, path):
        """Load a palette from 256 lines of 'index R G B' in decimal."""
        entries = np.zeros((256, 3), dtype=np.uint8)
        seen = set()
        with open(path) as f:
            for line in f:
                idx, r, g, b = (int(v) for v in line.split())
                entries[idx] = (r, g, b)
                seen.add(idx)
        if len(seen) != 256:
            raise ValueError("palette file must define all 256 indices")
        return cls(entries)


_plasma = None


def plasma_colormap():
    """The bundled plasma palette, loaded once."""
    global _plasma
    if _plasma is None:
        path = resources.files("malvis").joinpath("data/plasma_cmap.txt")
        with resources.as_file(path) as p:
            _plasma = ColorMap256.from_file(p)
    return _plasma


def _as_byte_array(data):
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    if arr.size == 0:
        raise EmptyFileError("cannot encode an empty byte sequence")
    return arr


def _grid_pad(pixels, width):
    """Pad an (n, c) pixel list with zero pixels to fill a width-wide grid."""
    n, c = pixels.shape
    height = -(-n // width)
    out = np.zeros((height * width, c), dtype=np.uint8)
    out[:n] = pixels
    return out.reshape(height, width, c), height


def encode_grayscale(grid: ByteGrid, geometry="truncated"):
    """Bytes are pixels; no value transformation."""
    arr = np.frombuffer(grid.data, dtype=np.uint8).reshape(grid.height, grid.width, 1)
    return MalImage(grid.width, grid.height, 1, arr, "grayscale", geometry)


def encode_colormap(data, cmap=None, width=128, geometry="truncated"):
    """Each byte indexes the palette; pad bytes map through entry 0."""
    if cmap is None:
        cmap = plasma_colormap()
    arr = _as_byte_array(data)
    pixels = cmap.entries[arr]
    height = -(-arr.size // width)
    pad = height * width - arr.size
    if pad:
        pixels = np.vstack([pixels, np.repeat(cmap.entries[0:1], pad, axis=0)])
    return MalImage(width, height, 3, pixels.reshape(height, width, 3), "colormap", geometry)


def encode_3gram(data, width=128, geometry="truncated"):
    """Non-overlapping byte triples become (b1, b2, 255 - b3) pixels."""
    arr = _as_byte_array(data)
    n_pixels = -(-arr.size // 3)
    height = -(-n_pixels // width)
    total = height * width * 3
    padded = np.zeros(total, dtype=np.uint8)
    padded[: arr.size] = arr
    triples = padded.reshape(-1, 3)
    pixels = triples.copy()
    pixels[:, 2] = 255 - triples[:, 2]
    return MalImage(width, height, 3, pixels.reshape(height, width, 3), "threegram", geometry)


def _iround(x):
    """Round half up, clamped to one byte."""
    return int(min(255, max(0, np.floor(x + 0.5))))


def encode_pe(info, data, width=None, geometry="resized"):
    """One pixel per byte, colored by the region the byte falls in.

    R and B are constant within a region: entropy and relative size,
    both scaled to 0..255.  G is the raw byte value.  Grid padding
    pixels are black.
    """
    arr = _as_byte_array(data)
    if width is None:
        width = bin_width(info.file_size)
    pixels = np.zeros((arr.size, 3), dtype=np.uint8)
    pixels[:, 1] = arr
    for region in info.regions:
        r = _iround(region.entropy_bits * 255.0 / 8.0)
        b = _iround(region.raw_size / info.file_size * 255.0)
        pixels[region.raw_offset : region.end, 0] = r
        pixels[region.raw_offset : region.end, 2] = b
    grid, height = _grid_pad(pixels, width)
    return MalImage(width, height, 3, grid, "pe", geometry)


def resize(img: MalImage, out_w, out_h):
    """Nearest-neighbor resize: src index = floor(dst * src_dim / dst_dim)."""
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output dimensions must be positive")
    rows = np.arange(out_h) * img.height // out_h
    cols = np.arange(out_w) * img.width // out_w
    out = img.pixels[rows][:, cols]
    return MalImage(out_w, out_h, img.channels, out, img.method, "resized")


def write_png(img: MalImage, path):
    """8-bit grayscale or RGB PNG, no alpha, no interlacing."""
    if img.channels == 1:
        im = Image.fromarray(img.pixels[:, :, 0], mode="L")
    else:
        im = Image.fromarray(img.pixels, mode="RGB")
    im.save(path, format="PNG")


def read_png(path, method=None, geometry="truncated"):
    """Load a PNG written by write_png back into a MalImage."""
    im = Image.open(path)
    arr = np.asarray(im)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    channels = arr.shape[2]
    if method is None:
        method = "grayscale" if channels == 1 else "colormap"
    h, w = arr.shape[:2]
    return MalImage(w, h, channels, arr, method, geometry)
