"""Axis-aligned bounding-box arithmetic: IoU, GT assignment, hit rule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .data import GroundingSample


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, [x_min, y_min, x_max, y_max]."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        # strict inequalities also reject NaN coordinates
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(
                f"degenerate box (needs x_max > x_min and y_max > y_min): "
                f"[{self.x_min}, {self.y_min}, {self.x_max}, {self.y_max}]"
            )

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, coords) -> "BoundingBox":
        if len(coords) != 4:
            raise ValueError(f"box needs 4 coordinates, got {len(coords)}")
        return cls(float(coords[0]), float(coords[1]), float(coords[2]), float(coords[3]))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes, in [0, 1]."""
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    return inter / union


def assign_gt_proposal(sample: "GroundingSample", min_iou: float = 0.5) -> Optional[int]:
    """Index of the proposal with maximal IoU against the sample's gt_box.

    Returns None when the best IoU falls below ``min_iou``. Ties are broken
    by the lowest index.
    """
    best_idx = None
    best_iou = -1.0
    for i, prop in enumerate(sample.proposals):
        v = iou(prop.box, sample.gt_box)
        if v > best_iou:
            best_iou = v
            best_idx = i
    if best_idx is None or best_iou < min_iou:
        return None
    return best_idx


def hit_at_50(predicted: BoundingBox, gt: BoundingBox, strict: bool = True) -> bool:
    """AP50 decision: IoU above 0.5.

    ``strict`` uses the strict inequality IoU > 0.5; flipping it to False
    switches to the >= 0.5 convention, which differs only on exact-boundary
    pairs.
    """
    v = iou(predicted, gt)
    return v > 0.5 if strict else v >= 0.5
