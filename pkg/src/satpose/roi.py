"""Bounding boxes and the square crop region handed to downstream stages.

Detections are loose axis-aligned boxes in full-image pixels. The working
region of interest is always square: the detection is squared to its longer
side, expanded about its center, and later resampled to a fixed crop
resolution. Nothing is clamped to the image; regions may extend past the
frame edges, where pixel content is simply absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CROP_RESOLUTION = 224


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, full-image pixels, corners ordered min < max."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def area(self) -> float:
        return self.width * self.height

    @staticmethod
    def from_points(points) -> "BBox":
        """Tight box over 2-D points (m, 2)."""
        pts = np.asarray(points, dtype=float)
        return BBox(pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())


@dataclass(frozen=True)
class RoI:
    """Square working region: center and side in full-image pixels."""

    center_x: float
    center_y: float
    side: float
    crop_resolution: int = CROP_RESOLUTION

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("RoI side must be positive")
        if self.crop_resolution <= 0:
            raise ValueError("crop resolution must be positive")

    @property
    def x_min(self) -> float:
        return self.center_x - self.side / 2.0

    @property
    def y_min(self) -> float:
        return self.center_y - self.side / 2.0


def square_and_expand(bbox: BBox, expansion: float = 1.25) -> RoI:
    """Square a detection to its longer side and expand about its center."""
    if expansion <= 0:
        raise ValueError("expansion must be positive")
    cx, cy = bbox.center
    side = max(bbox.width, bbox.height) * expansion
    return RoI(cx, cy, side)


def to_crop(roi: RoI, points) -> np.ndarray:
    """Map full-image pixel coordinates into the crop frame of ``roi``."""
    pts = np.asarray(points, dtype=float)
    scale = roi.crop_resolution / roi.side
    return (pts - np.array([roi.x_min, roi.y_min])) * scale


def from_crop(roi: RoI, points) -> np.ndarray:
    """Inverse of :func:`to_crop`."""
    pts = np.asarray(points, dtype=float)
    scale = roi.side / roi.crop_resolution
    return pts * scale + np.array([roi.x_min, roi.y_min])


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; zero when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def roi_contains(roi: RoI, gt_bbox: BBox) -> bool:
    """Whether the RoI fully contains a ground-truth box (boundary counts)."""
    half = roi.side / 2.0
    return (
        gt_bbox.x_min >= roi.center_x - half
        and gt_bbox.x_max <= roi.center_x + half
        and gt_bbox.y_min >= roi.center_y - half
        and gt_bbox.y_max <= roi.center_y + half
    )


def roi_accuracy(rois, gt_bboxes) -> float:
    """Fraction of regions that fully contain their ground-truth box."""
    pairs = list(zip(rois, gt_bboxes, strict=True))
    if not pairs:
        raise ValueError("no boxes to score")
    return float(np.mean([roi_contains(r, g) for r, g in pairs]))
