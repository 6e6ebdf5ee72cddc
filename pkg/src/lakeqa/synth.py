"""Seeded synthetic mask corpora with known lake layouts."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .raster import BinaryMask, save_mask

_DILATE = np.ones((3, 3), dtype=bool)


class InfeasibleSpecError(RuntimeError):
    """Blobs could not be placed without touching within the attempt budget."""


@dataclass(frozen=True)
class CorpusSpec:
    count: int
    width: int = 64
    height: int = 64
    lakes: tuple[int, int] = (1, 3)
    blob: tuple[int, int] = (4, 12)
    seed: int = 0
    irregular: bool = False
    fmt: str = "png"
    max_attempts: int = 2000
    prefix: str = "synth"

    def __post_init__(self) -> None:
        object.__setattr__(self, "lakes", tuple(self.lakes))
        object.__setattr__(self, "blob", tuple(self.blob))
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        lo, hi = self.lakes
        if not 0 <= lo <= hi:
            raise ValueError(f"bad lakes range {self.lakes}")
        lo, hi = self.blob
        if not 1 <= lo <= hi:
            raise ValueError(f"bad blob range {self.blob}")
        if hi > min(self.width, self.height):
            raise ValueError(f"blob size {hi} does not fit a {self.width}x{self.height} image")
        if self.fmt not in ("png", "pgm"):
            raise ValueError(f"fmt must be png or pgm, got {self.fmt!r}")


def _polyomino(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    """A random 4-connected shape grown inside a w x h box, cropped to its tight box."""
    box = np.zeros((h, w), dtype=bool)
    target = max(1, int(round(w * h * rng.uniform(0.4, 0.8))))
    edge: list[tuple[int, int]] = [(int(rng.integers(h)), int(rng.integers(w)))]
    queued = set(edge)
    picks = rng.random(target).tolist()
    filled = 0
    while filled < target and edge:
        # swap-remove a random boundary cell
        k = int(picks[filled] * len(edge))
        edge[k], edge[-1] = edge[-1], edge[k]
        y, x = edge.pop()
        box[y, x] = True
        filled += 1
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and (ny, nx) not in queued:
                queued.add((ny, nx))
                edge.append((ny, nx))
    rows = np.flatnonzero(box.any(axis=1))
    cols = np.flatnonzero(box.any(axis=0))
    return box[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def synth_mask(spec: CorpusSpec, index: int) -> tuple[np.ndarray, list[dict]]:
    """Render image ``index`` of the corpus; returns the grid and its planted lakes."""
    rng = np.random.default_rng([spec.seed, index])
    grid = np.zeros((spec.height, spec.width), dtype=np.uint8)
    blocked = np.zeros_like(grid, dtype=bool)
    n_lakes = int(rng.integers(spec.lakes[0], spec.lakes[1] + 1))
    lo, hi = spec.blob
    planted = []
    attempts = 0
    while len(planted) < n_lakes:
        if attempts >= spec.max_attempts:
            raise InfeasibleSpecError(
                f"image {index}: placed {len(planted)} of {n_lakes} lakes in {attempts} attempts"
            )
        attempts += 1
        w, h = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
        shape = _polyomino(rng, w, h) if spec.irregular else np.ones((h, w), dtype=bool)
        h, w = shape.shape
        x = int(rng.integers(0, spec.width - w + 1))
        y = int(rng.integers(0, spec.height - h + 1))
        if (blocked[y : y + h, x : x + w] & shape).any():
            continue
        grid[y : y + h, x : x + w][shape] = 1
        # Block the shape plus a one-pixel ring so later blobs cannot touch it, even diagonally.
        y0, x0 = max(y - 1, 0), max(x - 1, 0)
        y1, x1 = min(y + h + 1, spec.height), min(x + w + 1, spec.width)
        local = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        local[y - y0 : y - y0 + h, x - x0 : x - x0 + w] = shape
        blocked[y0:y1, x0:x1] |= ndimage.binary_dilation(local, structure=_DILATE)
        top_row = np.flatnonzero(shape[0])
        planted.append(
            {"bbox": [x, y, w, h], "area": int(shape.sum()), "_first": (y, x + int(top_row[0]))}
        )

    planted.sort(key=lambda lake: lake.pop("_first"))
    return grid, planted


def _write_one(args: tuple[CorpusSpec, int, str]) -> dict:
    spec, index, out = args
    grid, lakes = synth_mask(spec, index)
    image_id = f"{spec.prefix}_{index:05d}"
    path = Path(out) / f"{image_id}.{spec.fmt}"
    save_mask(BinaryMask(grid, image_id), path)
    return {"image_id": image_id, "file": path.name, "width": spec.width, "height": spec.height, "lakes": lakes}


def generate_corpus(spec: CorpusSpec, out: str | Path, jobs: int = 1) -> dict:
    """Write ``spec.count`` masks into ``out`` plus ``manifest.json`` listing every planted lake.

    Planted lakes are listed in raster order of their first pixel, which is
    the order connected-component labeling reports them in.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(spec, i, str(out)) for i in range(spec.count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            images = list(pool.map(_write_one, tasks))
    else:
        images = [_write_one(t) for t in tasks]
    spec_doc = asdict(spec)
    spec_doc["lakes"] = list(spec.lakes)
    spec_doc["blob"] = list(spec.blob)
    manifest = {"spec": spec_doc, "images": images}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
