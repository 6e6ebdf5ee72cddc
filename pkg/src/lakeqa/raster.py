"""Binary mask loading and saving.

Masks are 8-bit single-channel PNG or PGM (P5 binary / P2 ASCII) files.
In memory a mask is a read-only ``uint8`` array of shape ``(height, width)``
holding only 0 (background) and 1 (lake).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

MASK_SUFFIXES = (".png", ".pgm")


class MaskError(ValueError):
    """A mask file or array failed validation."""


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray
    image_id: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise MaskError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MaskError(f"mask must be at least 1x1, got shape {arr.shape}")
        if arr.dtype == np.bool_:
            arr = arr.astype(np.uint8)
        if arr.size and not ((arr == 0) | (arr == 1)).all():
            raise MaskError("mask cells must be exactly 0 or 1")
        arr = np.ascontiguousarray(arr, dtype=np.uint8).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        # Grid content only; image_id is a lookup key, not part of the mask.
        return np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.data.shape, self.data.tobytes()))

    def foreground(self) -> int:
        return int(self.data.sum())


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:2] not in (b"P5", b"P2"):
        raise MaskError(f"{path}: not a PGM file (magic {raw[:2]!r})")
    magic = raw[:2]

    # Header: magic, width, height, maxval separated by whitespace; '#' starts a comment.
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise MaskError(f"{path}: truncated PGM header")
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and raw[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise MaskError(f"{path}: malformed PGM header")
        fields.append(int(raw[start:pos]))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MaskError(f"{path}: zero-dimension image ({width}x{height})")
    if not 0 < maxval < 256:
        raise MaskError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")

    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        body = raw[pos : pos + width * height]
        if len(body) != width * height:
            raise MaskError(f"{path}: truncated PGM raster")
        values = np.frombuffer(body, dtype=np.uint8)
    else:
        tokens = [t for t in _strip_comments(raw[pos:]).split()]
        if len(tokens) < width * height:
            raise MaskError(f"{path}: truncated PGM raster")
        values = np.array([int(t) for t in tokens[: width * height]], dtype=np.int64)
        if values.min() < 0 or values.max() > maxval:
            raise MaskError(f"{path}: PGM sample out of range 0..{maxval}")
        values = values.astype(np.uint8)
    return values.reshape(height, width)


def _strip_comments(body: bytes) -> bytes:
    return b"\n".join(line.split(b"#", 1)[0] for line in body.splitlines())


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "L":
                raise MaskError(
                    f"{path}: expected 8-bit single-channel image, got mode {img.mode!r}"
                )
            arr = np.array(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise MaskError(f"{path}: unreadable image ({exc})") from exc
    if arr.size == 0:
        raise MaskError(f"{path}: zero-dimension image")
    return arr


def load_mask(path: str | Path, binarize_threshold: int = 0) -> BinaryMask:
    """Load a mask file; pixels above ``binarize_threshold`` become lake (1)."""
    path = Path(path)
    if not 0 <= binarize_threshold <= 255:
        raise MaskError(f"binarize_threshold must be in 0..255, got {binarize_threshold}")
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    with path.open("rb") as fh:
        magic = fh.read(2)
    if magic in (b"P5", b"P2"):
        raw = _read_pgm(path)
    else:
        raw = _read_png(path)
    return BinaryMask((raw > binarize_threshold).astype(np.uint8), image_id=path.stem)


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write ``mask`` with lake pixels as 255. Format follows the suffix (.png or .pgm)."""
    path = Path(path)
    pixels = (mask.data * 255).astype(np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
        path.write_bytes(header + pixels.tobytes())
    elif suffix == ".png":
        Image.fromarray(pixels).save(path, format="PNG")
    else:
        raise MaskError(f"{path}: unsupported mask suffix {suffix!r}")


def find_masks(directory: str | Path) -> list[Path]:
    """Mask files directly inside ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.exists():
        raise FileNotFoundError(f"{directory}: no such directory")
    if not directory.is_dir():
        raise NotADirectoryError(f"{directory}: not a directory")
    return sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in MASK_SUFFIXES
    )


def resolve_mask(directory: str | Path, image_id: str) -> Path | None:
    for suffix in MASK_SUFFIXES:
        candidate = Path(directory) / f"{image_id}{suffix}"
        if candidate.is_file():
            return candidate
    return None
