"""Grayscale images, block tiling and training-patch sampling."""

from __future__ import annotations

import math
import re
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


@dataclass
class GrayImage:
    """8-bit grayscale image; ``pixels`` has shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D pixel array, got {p.shape}")
        if p.dtype != np.uint8:
            if np.any((p < 0) | (p > 255)) or np.any(p != np.round(p)):
                raise ValueError("pixel values must be integers in 0..255")
            p = p.astype(np.uint8)
        self.pixels = p

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


# PGM header: magic, width, height, maxval separated by whitespace (with
# optional comments), then exactly one whitespace byte before the payload.
_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def parse_pgm(data: bytes) -> GrayImage:
    if data[:2] in (b"P2", b"P1", b"P3", b"P4", b"P6"):
        raise ImageFormatError(f"unsupported PNM variant {data[:2].decode()}; only binary P5")
    if data[:2] != b"P5":
        raise ImageFormatError("bad magic: not a binary PGM (P5) file")
    pos = 2
    values = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PGM header")
        try:
            values.append(int(m.group(1)))
        except ValueError:
            raise ImageFormatError(f"bad PGM header token {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = values
    if maxval != 255:
        raise ImageFormatError(f"maxval {maxval} unsupported; expected 255")
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid dimensions {width}x{height}")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ImageFormatError("truncated PGM header")
    pos += 1
    n = width * height
    if len(data) - pos < n:
        raise ImageFormatError(f"truncated payload: {len(data) - pos} of {n} bytes")
    pixels = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos)
    return GrayImage(pixels.reshape(height, width).copy())


def read_pgm(source) -> GrayImage:
    data = source.read() if hasattr(source, "read") else Path(source).read_bytes()
    return parse_pgm(data)


def pgm_bytes(image: GrayImage) -> bytes:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(image.pixels, dtype=np.uint8).tobytes()


def write_pgm(image: GrayImage, destination):
    data = pgm_bytes(image)
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        Path(destination).write_bytes(data)


def to_unit(pixels):
    return np.asarray(pixels, dtype=np.float64) / 255.0


def to_pixels(reals):
    """Unit-range reals to 8-bit, rounding half away from zero, clamped."""
    v = np.asarray(reals, dtype=np.float64) * 255.0
    v = np.clip(v, 0.0, 255.0)
    return np.floor(v + 0.5).astype(np.uint8)


def column_stack(block):
    """Flatten a square block column by column: ``(r, c) -> c*B + r``."""
    block = np.asarray(block)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise ValueError(f"expected a square block, got shape {block.shape}")
    return block.reshape(-1, order="F")


def unstack(vector, block_size: int):
    vector = np.asarray(vector)
    if vector.shape[-1] != block_size * block_size:
        raise ValueError(f"length {vector.shape[-1]} is not {block_size}**2")
    return vector.reshape(block_size, block_size, order="F")


@dataclass
class BlockSet:
    """Column-stacked unit-range blocks tiled row-major over an image grid.

    ``blocks`` has shape ``(rows * cols, B*B)``; ``shape`` is the original
    ``(height, width)`` before padding.
    """

    block_size: int
    grid: tuple
    shape: tuple
    blocks: np.ndarray

    def __post_init__(self):
        rows, cols = self.grid
        if self.blocks.shape != (rows * cols, self.block_size**2):
            raise ValueError(
                f"blocks shape {self.blocks.shape} inconsistent with grid {self.grid} "
                f"and block size {self.block_size}"
            )
        h, w = self.shape
        if h > rows * self.block_size or w > cols * self.block_size:
            raise ValueError(f"image {self.shape} does not fit grid {self.grid}")

    def __len__(self):
        return self.blocks.shape[0]


def grid_dims(height: int, width: int, block_size: int):
    return math.ceil(height / block_size), math.ceil(width / block_size)


def _tile(arr, block_size):
    """``(rows*B, cols*B)`` array -> ``(rows*cols, B*B)`` column-stacked blocks."""
    rows = arr.shape[0] // block_size
    cols = arr.shape[1] // block_size
    t = arr.reshape(rows, block_size, cols, block_size)
    # axes (row, col, c, r) so a C-order flatten of the last two is column stacking
    return t.transpose(0, 2, 3, 1).reshape(rows * cols, block_size * block_size)


def _untile(blocks, grid, block_size):
    rows, cols = grid
    t = blocks.reshape(rows, cols, block_size, block_size).transpose(0, 3, 1, 2)
    return t.reshape(rows * block_size, cols * block_size)


def extract_blocks(image: GrayImage, block_size: int) -> BlockSet:
    """Edge-pad to multiples of ``block_size`` and tile into blocks."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    h, w = image.height, image.width
    rows, cols = grid_dims(h, w, block_size)
    padded = np.pad(
        image.pixels, ((0, rows * block_size - h), (0, cols * block_size - w)), mode="edge"
    )
    return BlockSet(block_size, (rows, cols), (h, w), _tile(to_unit(padded), block_size))


def assemble_blocks(blocks: BlockSet) -> GrayImage:
    """Place blocks back on the canvas, crop padding and quantize to 8-bit."""
    canvas = _untile(np.asarray(blocks.blocks), blocks.grid, blocks.block_size)
    h, w = blocks.shape
    return GrayImage(to_pixels(canvas[:h, :w]))


@dataclass
class PatchDataset:
    """Training patches as column-stacked rows.

    Sampled datasets keep 8-bit rows to save memory; ``batch`` and
    ``vectors`` always return unit-range float64.
    """

    patches: np.ndarray
    block_size: int
    source: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.patches = np.asarray(self.patches)
        if self.patches.ndim != 2 or self.patches.shape[1] != self.block_size**2:
            raise ValueError(
                f"patches shape {self.patches.shape} does not match block size {self.block_size}"
            )

    def __len__(self):
        return self.patches.shape[0]

    def batch(self, index):
        rows = self.patches[index]
        if rows.dtype == np.uint8:
            return to_unit(rows)
        return np.asarray(rows, dtype=np.float64)

    @property
    def vectors(self):
        return self.batch(slice(None))


def sample_patches(corpus, count: int, block_size: int, seed=0, source="") -> PatchDataset:
    """Draw ``count`` B x B patches at uniformly random (image, position).

    Images smaller than the block are skipped with a warning. Draw order from
    the seeded generator: image indices, then rows, then columns.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    usable = []
    for k, img in enumerate(corpus):
        if img.height < block_size or img.width < block_size:
            warnings.warn(
                f"corpus image {k} ({img.width}x{img.height}) is smaller than "
                f"{block_size}x{block_size}; skipped",
                stacklevel=2,
            )
        else:
            usable.append(img)
    if not usable:
        raise ValueError(f"no corpus image is at least {block_size}x{block_size}")

    rng = np.random.default_rng(seed)
    which = rng.integers(0, len(usable), size=count)
    heights = np.array([im.height for im in usable])
    widths = np.array([im.width for im in usable])
    rows = rng.integers(0, heights[which] - block_size + 1)
    cols = rng.integers(0, widths[which] - block_size + 1)

    out = np.empty((count, block_size * block_size), dtype=np.uint8)
    offs = np.arange(block_size)
    for k, img in enumerate(usable):
        sel = np.flatnonzero(which == k)
        if sel.size == 0:
            continue
        r = rows[sel][:, None, None] + offs[None, :, None]
        c = cols[sel][:, None, None] + offs[None, None, :]
        patches = img.pixels[r, c]  # (n, B, B) indexed (row, col)
        out[sel] = patches.transpose(0, 2, 1).reshape(sel.size, -1)
    return PatchDataset(out, block_size, source, seed if isinstance(seed, int) else None)


# Patch cache file: magic, uint64 count, uint32 B, then float64 LE values.
PATCH_MAGIC = b"BCSPATCH"


def save_patches(dataset: PatchDataset, destination):
    header = PATCH_MAGIC + struct.pack("<QI", len(dataset), dataset.block_size)
    with open(destination, "wb") as fh:
        fh.write(header)
        step = 65536
        for start in range(0, len(dataset), step):
            fh.write(dataset.batch(slice(start, start + step)).astype("<f8").tobytes())


def load_patches(source) -> PatchDataset:
    data = Path(source).read_bytes()
    if data[:8] != PATCH_MAGIC:
        raise ImageFormatError("not a patch cache file")
    if len(data) < 20:
        raise ImageFormatError("truncated patch cache header")
    count, b = struct.unpack_from("<QI", data, 8)
    n = count * b * b
    if len(data) != 20 + 8 * n:
        raise ImageFormatError(f"patch cache payload is {len(data) - 20} bytes, expected {8 * n}")
    values = np.frombuffer(data, dtype="<f8", count=n, offset=20).reshape(count, b * b)
    if np.any((values < 0) | (values > 1)):
        raise ImageFormatError("patch values outside [0, 1]")
    return PatchDataset(values.astype(np.float64), b, source=str(source))


def read_image_dir(directory):
    """All ``*.pgm`` files in ``directory``, sorted by name, as ``(name, image)``."""
    paths = sorted(Path(directory).glob("*.pgm"))
    return [(p.stem, read_pgm(p)) for p in paths]
