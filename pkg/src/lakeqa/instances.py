"""Per-lake instance extraction: connected components, boxes, centers and position labels."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage

from .raster import BinaryMask


class Quadrant(str, enum.Enum):
    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_LEFT = "bottom_left"
    BOTTOM_RIGHT = "bottom_right"
    CENTER = "center"

    @property
    def phrase(self) -> str:
        return self.value.replace("_", " ")


class Proximity(str, enum.Enum):
    NEAR = "near"
    FAR = "far"


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"bounding box must be at least 1x1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError("bounding box origin must be non-negative")

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class CenterPoint:
    cx: float
    cy: float

    @classmethod
    def of_box(cls, box: BoundingBox) -> CenterPoint:
        return cls(box.x + box.w / 2, box.y + box.h / 2)


@dataclass(frozen=True)
class PositionLabel:
    quadrant: Quadrant
    proximity: Proximity

    def __post_init__(self) -> None:
        if self.quadrant is Quadrant.CENTER and self.proximity is not Proximity.NEAR:
            raise ValueError("a center label is always near the center")


@dataclass(frozen=True)
class LakeInstance:
    ordinal_index: int
    bbox: BoundingBox
    center: CenterPoint
    area: int
    position: PositionLabel

    def to_record(self) -> dict:
        return {
            "ordinal": self.ordinal_index,
            "bbox": self.bbox.as_list(),
            "center": [self.center.cx, self.center.cy],
            "quadrant": self.position.quadrant.value,
            "proximity": self.position.proximity.value,
            "area": self.area,
        }

    @classmethod
    def from_record(cls, rec: dict) -> LakeInstance:
        return cls(
            ordinal_index=int(rec["ordinal"]),
            bbox=BoundingBox(*rec["bbox"]),
            center=CenterPoint(*rec["center"]),
            area=int(rec["area"]),
            position=PositionLabel(Quadrant(rec["quadrant"]), Proximity(rec["proximity"])),
        )


@dataclass(frozen=True)
class AnalysisConfig:
    connectivity: int = 8
    near_fraction: float = 0.25
    center_mode: str = "bbox"
    min_area: int = 1

    def __post_init__(self) -> None:
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if not 0 < self.near_fraction < 1:
            raise ValueError(f"near_fraction must be in (0, 1), got {self.near_fraction}")
        if self.center_mode not in ("bbox", "mass"):
            raise ValueError(f"center_mode must be 'bbox' or 'mass', got {self.center_mode!r}")
        if self.min_area < 1:
            raise ValueError(f"min_area must be >= 1, got {self.min_area}")

    def echo(self) -> dict:
        return {
            "connectivity": self.connectivity,
            "near_fraction": self.near_fraction,
            "center_mode": self.center_mode,
            "min_area": self.min_area,
        }

    @classmethod
    def from_echo(cls, echo: dict) -> AnalysisConfig:
        return cls(**{k: echo[k] for k in ("connectivity", "near_fraction", "center_mode", "min_area") if k in echo})


def assign_position(
    center: CenterPoint, width: float, height: float, near_fraction: float = 0.25
) -> PositionLabel:
    """Quadrant by comparison with the image midlines; near when within
    ``near_fraction * min(width, height)`` of the image center.

    Midline ties go to the right/bottom side. Arithmetic is exact on the
    given floats so the label is invariant under uniform scaling.
    """
    cx, cy = Fraction(center.cx), Fraction(center.cy)
    mx, my = Fraction(width) / 2, Fraction(height) / 2
    dx, dy = cx - mx, cy - my
    dist_sq = dx * dx + dy * dy
    limit = Fraction(near_fraction) * min(Fraction(width), Fraction(height))
    proximity = Proximity.NEAR if dist_sq <= limit * limit else Proximity.FAR

    if dist_sq == 0:
        return PositionLabel(Quadrant.CENTER, Proximity.NEAR)
    if cy < my:
        quadrant = Quadrant.TOP_LEFT if cx < mx else Quadrant.TOP_RIGHT
    else:
        quadrant = Quadrant.BOTTOM_LEFT if cx < mx else Quadrant.BOTTOM_RIGHT
    return PositionLabel(quadrant, proximity)


def describe_position(label: PositionLabel) -> str:
    """Render a label, e.g. ``"bottom right, near the center"``."""
    if label.quadrant is Quadrant.CENTER:
        return "center"
    suffix = "near the center" if label.proximity is Proximity.NEAR else "far from the center"
    return f"{label.quadrant.phrase}, {suffix}"


_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def label_components(
    mask: BinaryMask,
    connectivity: int = 8,
    min_area: int = 1,
    near_fraction: float = 0.25,
    center_mode: str = "bbox",
) -> list[LakeInstance]:
    """One instance per foreground component, in raster order of each
    component's first pixel. Components smaller than ``min_area`` are dropped
    before ordinals are assigned."""
    config = AnalysisConfig(connectivity, near_fraction, center_mode, min_area)
    labels, count = ndimage.label(mask.data, structure=_STRUCTURES[config.connectivity])
    if count == 0:
        return []

    slices = ndimage.find_objects(labels)

    def first_pixel(lab: int) -> tuple[int, int]:
        # Raster-scan first pixel: leftmost hit in the top row of the bbox.
        rows, cols = slices[lab - 1]
        return rows.start, cols.start + int(np.argmax(labels[rows.start, cols] == lab))

    order = sorted(range(1, count + 1), key=first_pixel)
    height, width = mask.height, mask.width
    instances: list[LakeInstance] = []
    for lab in order:
        rows, cols = slices[lab - 1]
        area = int(np.count_nonzero(labels[rows, cols] == lab))
        if area < config.min_area:
            continue
        box = BoundingBox(cols.start, rows.start, cols.stop - cols.start, rows.stop - rows.start)
        if config.center_mode == "bbox":
            center = CenterPoint.of_box(box)
        else:
            ys, xs = np.nonzero(labels[rows, cols] == lab)
            # pixel (i, j) covers [j, j+1) x [i, i+1), so its center is offset by 0.5
            center = CenterPoint(
                box.x + float(xs.mean()) + 0.5, box.y + float(ys.mean()) + 0.5
            )
        instances.append(
            LakeInstance(
                ordinal_index=len(instances) + 1,
                bbox=box,
                center=center,
                area=area,
                position=assign_position(center, width, height, config.near_fraction),
            )
        )
    return instances


def analyze(mask: BinaryMask, config: AnalysisConfig) -> list[LakeInstance]:
    return label_components(
        mask,
        connectivity=config.connectivity,
        min_area=config.min_area,
        near_fraction=config.near_fraction,
        center_mode=config.center_mode,
    )

