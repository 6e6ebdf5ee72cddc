"""IoU / Dice scoring of predicted masks against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raster import BinaryMask


@dataclass(frozen=True)
class SegScore:
    iou: float
    dice: float
    tp: int
    fp: int
    fn: int
    both_empty: bool = False


def score_pair(pred: BinaryMask, gt: BinaryMask) -> SegScore:
    """Per-image IoU and Dice. Two empty masks score 1.0 and are flagged ``both_empty``."""
    if pred.data.shape != gt.data.shape:
        raise ValueError(
            f"dimension mismatch: pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    if tp + fp + fn == 0:
        return SegScore(1.0, 1.0, 0, 0, 0, both_empty=True)
    return SegScore(tp / (tp + fp + fn), 2 * tp / (2 * tp + fp + fn), tp, fp, fn)


def aggregate(scores: list[SegScore]) -> tuple[float, float]:
    """Unweighted per-image means ``(mIoU, mDice)``."""
    if not scores:
        raise ValueError("cannot aggregate an empty list of scores")
    n = len(scores)
    return math.fsum(s.iou for s in scores) / n, math.fsum(s.dice for s in scores) / n


def pooled(scores: list[SegScore]) -> tuple[float, float]:
    """Dataset-level IoU and Dice from pixel counts summed over all images."""
    if not scores:
        raise ValueError("cannot pool an empty list of scores")
    tp = sum(s.tp for s in scores)
    fp = sum(s.fp for s in scores)
    fn = sum(s.fn for s in scores)
    if tp + fp + fn == 0:
        return 1.0, 1.0
    return tp / (tp + fp + fn), 2 * tp / (2 * tp + fp + fn)
