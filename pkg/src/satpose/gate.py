"""Error-gated rejection and the crop-frame silhouette rasterizer.

The gate consumes an estimate of the mean keypoint prediction error and
rejects frames whose estimate exceeds a pixel threshold. Two estimators are
provided: an oracle that measures the true error (an upper bound on what a
learned regressor could do) and a dispersion heuristic that needs no ground
truth. The rasterizer produces binary silhouette masks in the crop frame,
used to cut the target out of an image for downstream error regression.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .displacement import KeypointPredictions, keypoint_error
from .errors import EmptyMask
from .geometry import (
    BEHIND_EPS,
    CameraModel,
    MeshModel,
    Pose,
    project_points,
    transform_points,
)
from .keypoints import KeypointSet
from .pnp import PnPResult
from .roi import RoI, to_crop

DEFAULT_GATE_THRESHOLD_PX = 20.0


@dataclass(frozen=True)
class BinaryMask:
    """Boolean coverage grid indexed [row, col] over the crop frame."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=bool)
        if g.ndim != 2:
            raise ValueError("mask grid must be 2-D")
        object.__setattr__(self, "grid", g)

    @property
    def area(self) -> int:
        return int(self.grid.sum())


@dataclass(frozen=True)
class GateDecision:
    """Outcome of thresholding an estimated keypoint error."""

    e_k_hat: float
    threshold_px: float
    accepted: bool


def rasterize_mask(mesh: MeshModel, pose: Pose, cam: CameraModel, roi: RoI) -> BinaryMask:
    """Rasterize the mesh silhouette into the RoI's crop frame.

    Coverage is decided per pixel center ``(col + 0.5, row + 0.5)``; a pixel
    is set when its center falls inside any projected triangle (edges
    count). Triangles with any vertex at or behind the camera plane are
    skipped; there is no depth buffer because only the union matters.

    Raises EmptyMask when nothing lands inside the crop.
    """
    res = roi.crop_resolution
    grid = np.zeros((res, res), dtype=bool)
    pc = transform_points(pose, mesh.vertices)
    z = pc[:, 2]
    visible = z > BEHIND_EPS
    uv = np.full((len(pc), 2), np.nan)
    uv[visible, 0] = cam.focal_px * pc[visible, 0] / z[visible] + cam.cx
    uv[visible, 1] = cam.focal_px * pc[visible, 1] / z[visible] + cam.cy
    crop = np.full_like(uv, np.nan)
    crop[visible] = to_crop(roi, uv[visible])

    for tri in mesh.triangles:
        if not visible[tri].all():
            continue
        a, b, c = crop[tri]
        lo = np.floor(np.minimum(np.minimum(a, b), c) - 0.5).astype(int)
        hi = np.ceil(np.maximum(np.maximum(a, b), c) - 0.5).astype(int)
        x0, y0 = np.maximum(lo, 0)
        x1, y1 = np.minimum(hi, res - 1)
        if x0 > x1 or y0 > y1:
            continue
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 == 0.0:
            continue
        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        px, py = np.meshgrid(xs, ys)
        w0 = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
        w1 = (c[0] - b[0]) * (py - b[1]) - (c[1] - b[1]) * (px - b[0])
        w2 = (a[0] - c[0]) * (py - c[1]) - (a[1] - c[1]) * (px - c[0])
        if area2 > 0.0:
            inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        else:
            inside = (w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0)
        grid[y0 : y1 + 1, x0 : x1 + 1] |= inside

    if not grid.any():
        raise EmptyMask("no mesh triangle covered any crop pixel")
    return BinaryMask(grid)


def make_cutout(image: np.ndarray, mask: BinaryMask) -> np.ndarray:
    """Zero an image outside the mask. Trailing channel axes are allowed."""
    img = np.asarray(image)
    if img.shape[:2] != mask.grid.shape:
        raise ValueError(f"image {img.shape[:2]} does not match mask {mask.grid.shape}")
    keep = mask.grid if img.ndim == 2 else mask.grid[..., None]
    return np.where(keep, img, np.zeros((), dtype=img.dtype))


def estimate_error_oracle(pred: KeypointPredictions, gt_keypoints_crop) -> float:
    """True mean prediction error; stands in for a perfect error regressor."""
    return keypoint_error(pred, gt_keypoints_crop)


def estimate_error_dispersion(
    pred: KeypointPredictions,
    result: PnPResult,
    kps: KeypointSet,
    roi: RoI,
    cam: CameraModel,
) -> float:
    """Self-consistency error estimate needing no ground truth.

    Reprojects the keypoints under the solved pose into the crop frame and
    returns the mean distance from every location estimate to its
    keypoint's reprojection. Confident but wrong solutions (for instance a
    symmetry flip that the estimates themselves support) score low.
    """
    proj_crop = to_crop(roi, project_points(result.pose, cam, kps.points))
    d = np.linalg.norm(pred.estimates - proj_crop[:, None, :], axis=2)
    return float(d.mean())


def gate(e_k_hat: float, threshold_px: float = DEFAULT_GATE_THRESHOLD_PX) -> GateDecision:
    """Accept a frame unless its estimated keypoint error exceeds the threshold.

    The boundary is inclusive: an estimate exactly at the threshold passes.
    """
    if threshold_px <= 0:
        raise ValueError("threshold_px must be positive")
    return GateDecision(e_k_hat=e_k_hat, threshold_px=threshold_px, accepted=e_k_hat <= threshold_px)


def write_pgm(mask: BinaryMask, path) -> None:
    """Write a mask as a binary PGM (P5), 255 inside, 0 outside."""
    rows, cols = mask.grid.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    payload = np.where(mask.grid, 255, 0).astype(np.uint8).tobytes()
    Path(path).write_bytes(header + payload)


def read_pgm(path) -> BinaryMask:
    """Read a binary PGM written by :func:`write_pgm`."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(parts[4][: rows * cols], dtype=np.uint8).reshape(rows, cols)
    return BinaryMask(data > 127)
