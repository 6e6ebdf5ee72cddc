from __future__ import annotations

import numpy as np
import pytest

from lakeqa.instances import AnalysisConfig
from lakeqa.raster import BinaryMask
from lakeqa.synth import CorpusSpec, generate_corpus


def make_mask(rows, image_id="m") -> BinaryMask:
    return BinaryMask(np.array(rows, dtype=np.uint8), image_id)


def rect_mask(width, height, rects, image_id="m") -> BinaryMask:
    """Mask with filled rectangles given as (x, y, w, h)."""
    grid = np.zeros((height, width), dtype=np.uint8)
    for x, y, w, h in rects:
        grid[y : y + h, x : x + w] = 1
    return BinaryMask(grid, image_id)


@pytest.fixture
def default_config() -> AnalysisConfig:
    return AnalysisConfig()


@pytest.fixture(scope="session")
def mixed_corpus(tmp_path_factory):
    """60 masks, 0..5 lakes each, 128x128."""
    out = tmp_path_factory.mktemp("mixed")
    manifest = generate_corpus(
        CorpusSpec(count=60, width=128, height=128, lakes=(0, 5), blob=(3, 18), seed=11), out
    )
    return out, manifest
