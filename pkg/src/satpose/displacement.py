"""Dense displacement-field encoding of keypoint locations in the crop frame.

A field is a ``GRID x GRID x 2n`` tensor over the crop. Every grid cell
stores, for each of the ``n`` keypoints, the 2-D offset from that cell's
anchor (the cell center in crop pixels) to the keypoint. Decoding therefore
yields ``GRID * GRID`` independent location estimates per keypoint, which is
what gives the downstream consensus stages something to vote with.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .roi import CROP_RESOLUTION

GRID = 14
CELLS = GRID * GRID
STRIDE = CROP_RESOLUTION // GRID  # 16 crop pixels per cell

_MAGIC = b"DFB1"


@dataclass(frozen=True)
class DisplacementField:
    """Per-cell keypoint offsets, shape (GRID, GRID, 2n)."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 3 or g.shape[0] != GRID or g.shape[1] != GRID:
            raise ValueError(f"grid must be ({GRID}, {GRID}, 2n), got {g.shape}")
        if g.shape[2] == 0 or g.shape[2] % 2 != 0:
            raise ValueError("last grid dimension must be a positive multiple of 2")
        object.__setattr__(self, "grid", g)

    @property
    def n_keypoints(self) -> int:
        return self.grid.shape[2] // 2


@dataclass(frozen=True)
class KeypointPredictions:
    """Decoded location estimates, shape (n, CELLS, 2), crop pixels."""

    estimates: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.estimates, dtype=float)
        if e.ndim != 3 or e.shape[1] != CELLS or e.shape[2] != 2:
            raise ValueError(f"estimates must be (n, {CELLS}, 2), got {e.shape}")
        object.__setattr__(self, "estimates", e)

    @property
    def n_keypoints(self) -> int:
        return self.estimates.shape[0]


def anchor(row: int, col: int) -> tuple[float, float]:
    """Crop-pixel anchor (x, y) of a grid cell; x follows the column."""
    if not (0 <= row < GRID and 0 <= col < GRID):
        raise ValueError(f"cell ({row}, {col}) outside {GRID}x{GRID} grid")
    return ((col + 0.5) * STRIDE, (row + 0.5) * STRIDE)


def anchor_grid() -> np.ndarray:
    """All cell anchors, shape (GRID, GRID, 2), ordered [row, col]."""
    c = (np.arange(GRID) + 0.5) * STRIDE
    xs, ys = np.meshgrid(c, c)  # xs varies along columns, ys along rows
    return np.stack([xs, ys], axis=-1)


def encode(keypoints_crop) -> DisplacementField:
    """Encode exact keypoint locations (n, 2) into an ideal field."""
    kps = np.asarray(keypoints_crop, dtype=float)
    if kps.ndim != 2 or kps.shape[1] != 2:
        raise ValueError("keypoints must have shape (n, 2)")
    offsets = kps[None, None, :, :] - anchor_grid()[:, :, None, :]  # (G, G, n, 2)
    return DisplacementField(offsets.reshape(GRID, GRID, -1))


def encode_predictions(pred: KeypointPredictions) -> DisplacementField:
    """Encode arbitrary per-cell estimates; exact inverse of :func:`decode`."""
    est = pred.estimates  # (n, CELLS, 2)
    n = est.shape[0]
    offsets = est.reshape(n, GRID, GRID, 2) - anchor_grid()[None, :, :, :]
    return DisplacementField(np.moveaxis(offsets, 0, 2).reshape(GRID, GRID, -1))


def decode(field: DisplacementField) -> KeypointPredictions:
    """Decode a field into per-keypoint location estimates.

    Estimate ``j = row * GRID + col`` of keypoint ``i`` is
    ``anchor(row, col) + grid[row, col, 2i:2i+2]``.
    """
    n = field.n_keypoints
    offsets = field.grid.reshape(GRID, GRID, n, 2)
    est = anchor_grid()[:, :, None, :] + offsets  # (G, G, n, 2)
    return KeypointPredictions(np.moveaxis(est.reshape(CELLS, n, 2), 0, 1))


def keypoint_error(pred: KeypointPredictions, gt_keypoints_crop) -> float:
    """Mean distance between every estimate and its true keypoint.

    Averages the Euclidean distance over all ``n * CELLS`` predictions,
    in crop pixels. This is the quantity the acceptance gate thresholds.
    """
    gt = np.asarray(gt_keypoints_crop, dtype=float)
    if gt.shape != (pred.n_keypoints, 2):
        raise ValueError(f"expected ground truth shape ({pred.n_keypoints}, 2), got {gt.shape}")
    d = np.linalg.norm(pred.estimates - gt[:, None, :], axis=2)
    return float(d.mean())


def save_field(field: DisplacementField, path) -> None:
    """Write a field as a small header plus row-major float64 payload."""
    g = np.ascontiguousarray(field.grid, dtype="<f8")
    header = _MAGIC + struct.pack("<III", GRID, GRID, field.n_keypoints)
    Path(path).write_bytes(header + g.tobytes())


def load_field(path) -> DisplacementField:
    """Read a field written by :func:`save_field`."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a displacement field file")
    rows, cols, n = struct.unpack("<III", raw[4:16])
    if rows != GRID or cols != GRID:
        raise ValueError(f"{path}: unsupported grid {rows}x{cols}")
    expected = rows * cols * 2 * n * 8
    payload = raw[16:]
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    grid = np.frombuffer(payload, dtype="<f8").reshape(rows, cols, 2 * n).copy()
    return DisplacementField(grid)
