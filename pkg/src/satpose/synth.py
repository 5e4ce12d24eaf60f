"""Synthetic scenario generation and ground-truth corruption.

Records carry exact poses, projected keypoints, and tight bounding boxes;
corruption then manufactures the location estimates a learned detector and
displacement regressor would have produced. Noise comes in three flavors:
per-estimate Gaussian jitter, per-estimate uniform outliers, and rare
whole-record events (a symmetry flip of the entire cluster, or a record
whose estimates are pure clutter).

Every record is derived from its own ``(seed, index)`` RNG stream, so a
dataset is reproducible record by record, in any order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .displacement import CELLS, KeypointPredictions
from .errors import InsufficientGeometry
from .geometry import (
    CameraModel,
    MeshModel,
    Pose,
    Quaternion,
    camera_from_fov,
    project_points,
    random_rotation,
)
from .keypoints import KeypointSet
from .roi import CROP_RESOLUTION, BBox, RoI, to_crop

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_SPLIT = (0.64, 0.16, 0.20)

# Attempts at shrinking the lateral offset before giving up on containment.
_PLACEMENT_RETRIES = 32


@dataclass(frozen=True)
class CameraPreset:
    name: str
    h_fov_deg: float
    width: int
    height: int

    def model(self) -> CameraModel:
        return camera_from_fov(self.h_fov_deg, self.width, self.height)


# Wide-angle preset mirrors the synthetic rendezvous camera; the narrow one
# matches the public pose-estimation benchmark camera geometry.
CAMERA_PRESETS = {
    "rendezvous_wide": CameraPreset("rendezvous_wide", 39.6, 1024, 1024),
    "benchmark_narrow": CameraPreset("benchmark_narrow", 35.1, 1900, 1200),
}


@dataclass(frozen=True)
class NoiseModel:
    """Corruption applied to exact keypoint projections, crop-frame pixels.

    gaussian_sigma_px : per-axis Gaussian jitter on every estimate.
    outlier_fraction : probability an estimate is replaced by a uniform
        draw over the crop.
    cluster_flip_fraction : probability a record's keypoints are recomputed
        under the symmetry-flipped pose before jitter is applied.
    record_outlier_fraction : probability a record's estimates are entirely
        uniform clutter (a detection lock on empty space).
    """

    gaussian_sigma_px: float = 0.0
    outlier_fraction: float = 0.0
    cluster_flip_fraction: float = 0.0
    record_outlier_fraction: float = 0.0

    def __post_init__(self):
        if self.gaussian_sigma_px < 0:
            raise ValueError("gaussian_sigma_px must be non-negative")
        for name in ("outlier_fraction", "cluster_flip_fraction", "record_outlier_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


NOISE_PRESETS = {
    "clean": NoiseModel(),
    "calibrated": NoiseModel(gaussian_sigma_px=2.0, outlier_fraction=0.20),
    "glare": NoiseModel(gaussian_sigma_px=2.5, outlier_fraction=0.25),
    "blur": NoiseModel(gaussian_sigma_px=4.0, outlier_fraction=0.10),
    "clutter": NoiseModel(gaussian_sigma_px=2.0, outlier_fraction=0.35),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Recipe for one homogeneous block of synthetic records."""

    camera: CameraPreset = CAMERA_PRESETS["rendezvous_wide"]
    distance_range: tuple[float, float] = (35.0, 75.0)
    n_images: int = 1000
    corruption: NoiseModel = NoiseModel()
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT
    seed: int = 0
    out_of_frame_fraction: float = 0.0

    def __post_init__(self):
        lo, hi = self.distance_range
        if not 0.0 < lo <= hi:
            raise ValueError("distance_range must satisfy 0 < lo <= hi")
        if self.n_images < 1:
            raise ValueError("n_images must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if not 0.0 <= self.out_of_frame_fraction <= 1.0:
            raise ValueError("out_of_frame_fraction must be in [0, 1]")


@dataclass(frozen=True)
class DatasetRecord:
    """One synthetic observation with exact ground truth."""

    index: int
    pose: Pose
    gt_keypoints_2d: np.ndarray
    gt_bbox: BBox
    camera: CameraPreset
    split: str = ""


def _record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng((seed, index))


def sample_scenario(
    cfg: ScenarioConfig, kps: KeypointSet, mesh: MeshModel, index: int
) -> DatasetRecord:
    """Draw record ``index`` of a scenario.

    Attitude is uniform on SO(3); range is uniform over the configured
    interval. The lateral offset is drawn uniformly in view-direction
    tangent space, shrunk by the target's angular radius so the whole
    silhouette stays inside the frame (verified against the projected
    vertices and tightened if needed). Records designated out-of-frame by
    ``out_of_frame_fraction`` skip the shrink and the verification, so
    their silhouette may spill past the edges.
    """
    rng = _record_rng(cfg.seed, index)
    cam = cfg.camera.model()
    q = random_rotation(rng)
    distance = rng.uniform(*cfg.distance_range)
    out_of_frame = rng.random() < cfg.out_of_frame_fraction

    radius = mesh.bounding_radius()
    tan_h = (cam.width / 2.0) / cam.focal_px
    tan_v = (cam.height / 2.0) / cam.focal_px
    if out_of_frame:
        margin = 0.0
    elif radius >= distance:
        raise InsufficientGeometry("target sphere encloses the camera at this range")
    else:
        margin = radius / math.sqrt(distance**2 - radius**2)

    span_x = max(0.0, tan_h - margin)
    span_y = max(0.0, tan_v - margin)
    tx = rng.uniform(-span_x, span_x)
    ty = rng.uniform(-span_y, span_y)

    def place(tan_x: float, tan_y: float) -> Pose:
        tz = distance / math.sqrt(1.0 + tan_x**2 + tan_y**2)
        return Pose(q, np.array([tan_x * tz, tan_y * tz, tz]))

    pose = place(tx, ty)
    if not out_of_frame:
        for _ in range(_PLACEMENT_RETRIES):
            uv = project_points(pose, cam, mesh.vertices)
            if (
                uv[:, 0].min() >= 0.0
                and uv[:, 1].min() >= 0.0
                and uv[:, 0].max() <= cam.width
                and uv[:, 1].max() <= cam.height
            ):
                break
            tx *= 0.8
            ty *= 0.8
            pose = place(tx, ty)
        else:
            pose = place(0.0, 0.0)
            uv = project_points(pose, cam, mesh.vertices)
            if uv[:, 0].min() < 0.0 or uv[:, 0].max() > cam.width:
                raise InsufficientGeometry("target does not fit the frame even on axis")

    gt_uv = project_points(pose, cam, kps.points)
    bbox = BBox.from_points(project_points(pose, cam, mesh.vertices))
    return DatasetRecord(
        index=index,
        pose=pose,
        gt_keypoints_2d=gt_uv,
        gt_bbox=bbox,
        camera=cfg.camera,
    )


def generate_dataset(
    cfg: ScenarioConfig, kps: KeypointSet, mesh: MeshModel
) -> list[DatasetRecord]:
    """Generate and split a full scenario block."""
    records = [sample_scenario(cfg, kps, mesh, i) for i in range(cfg.n_images)]
    return split_dataset(records, cfg.split_fractions, cfg.seed)


def split_dataset(
    records: Sequence[DatasetRecord],
    fractions: tuple[float, float, float] = DEFAULT_SPLIT,
    seed: int = 0,
) -> list[DatasetRecord]:
    """Tag records train/val/test by seeded shuffle then contiguous slices.

    Slice sizes are the rounded fractions, with the test split absorbing
    the remainder. Records come back in their original order.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    n = len(records)
    if n == 0:
        return []
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    tags = np.empty(n, dtype=object)
    tags[order[:n_train]] = "train"
    tags[order[n_train : n_train + n_val]] = "val"
    tags[order[n_train + n_val :]] = "test"
    return [replace(rec, split=str(tags[i])) for i, rec in enumerate(records)]


def corrupt(
    record: DatasetRecord,
    roi: RoI,
    noise: NoiseModel,
    rng: np.random.Generator,
    kps: Optional[KeypointSet] = None,
    flip_rotation: Optional[Quaternion] = None,
) -> KeypointPredictions:
    """Manufacture location estimates for a record inside ``roi``.

    The exact crop-frame projections are tiled to one estimate per grid
    cell and then corrupted. Draw order is fixed (flip event, record
    outlier event, Gaussian jitter, outlier mask, outlier values) so a
    given ``rng`` state always yields the same estimates.

    ``kps`` and ``flip_rotation`` are required when
    ``noise.cluster_flip_fraction`` is positive: the flipped cluster is the
    projection of the keypoints under the symmetry-flipped pose.
    """
    gt_full = record.gt_keypoints_2d
    if noise.cluster_flip_fraction > 0.0:
        if kps is None or flip_rotation is None:
            raise ValueError("cluster flips need kps and flip_rotation")
        if rng.random() < noise.cluster_flip_fraction:
            flipped = Pose(record.pose.rotation.multiply(flip_rotation), record.pose.translation)
            gt_full = project_points(flipped, record.camera.model(), kps.points)

    pure_clutter = (
        noise.record_outlier_fraction > 0.0 and rng.random() < noise.record_outlier_fraction
    )

    n = len(gt_full)
    gt_crop = to_crop(roi, gt_full)
    est = np.repeat(gt_crop[:, None, :], CELLS, axis=1)
    est = est + rng.normal(0.0, noise.gaussian_sigma_px, size=est.shape)
    if pure_clutter:
        est = rng.uniform(0.0, CROP_RESOLUTION, size=est.shape)
    elif noise.outlier_fraction > 0.0:
        mask = rng.random((n, CELLS)) < noise.outlier_fraction
        est[mask] = rng.uniform(0.0, CROP_RESOLUTION, size=(int(mask.sum()), 2))
    return KeypointPredictions(est)


def save_dataset(records: Sequence[DatasetRecord], path) -> None:
    """Write records as JSON Lines; keypoints are regenerable, not stored."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            q = rec.pose.rotation
            row = {
                "id": rec.index,
                "q": [q.w, q.x, q.y, q.z],
                "t": rec.pose.translation.tolist(),
                "bbox": [rec.gt_bbox.x_min, rec.gt_bbox.y_min, rec.gt_bbox.x_max, rec.gt_bbox.y_max],
                "camera": {
                    "name": rec.camera.name,
                    "h_fov_deg": rec.camera.h_fov_deg,
                    "width": rec.camera.width,
                    "height": rec.camera.height,
                },
                "split": rec.split,
            }
            fh.write(json.dumps(row) + "\n")


def load_dataset(path, kps: KeypointSet) -> list[DatasetRecord]:
    """Read JSON Lines records, regenerating keypoint projections."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            cam = CameraPreset(
                name=row["camera"]["name"],
                h_fov_deg=row["camera"]["h_fov_deg"],
                width=row["camera"]["width"],
                height=row["camera"]["height"],
            )
            pose = Pose(Quaternion(*row["q"]), np.array(row["t"], dtype=float))
            records.append(
                DatasetRecord(
                    index=int(row["id"]),
                    pose=pose,
                    gt_keypoints_2d=project_points(pose, cam.model(), kps.points),
                    gt_bbox=BBox(*row["bbox"]),
                    camera=cam,
                    split=row["split"],
                )
            )
    return records


def standard_mix(seed: int = 0, scale: float = 1.0) -> list[tuple[str, ScenarioConfig]]:
    """The eight-block 20k-record catalog used for full evaluation runs.

    Four imaging conditions over a plain background and four over cluttered
    backgrounds, with escalating estimate noise standing in for the image
    effects. ``scale`` shrinks every block for desk-sized runs.
    """
    blocks = [
        ("clean", 3000, NOISE_PRESETS["clean"], 0.0),
        ("glare", 3000, NOISE_PRESETS["glare"], 0.0),
        ("blur", 3000, NOISE_PRESETS["blur"], 0.0),
        ("out_of_frame", 3000, NOISE_PRESETS["calibrated"], 1.0),
        ("clean_clutter", 2000, NOISE_PRESETS["clutter"], 0.0),
        ("glare_clutter", 2000, NoiseModel(2.5, 0.40), 0.0),
        ("blur_clutter", 2000, NoiseModel(4.0, 0.30), 0.0),
        ("heavy_clutter", 2000, NoiseModel(2.0, 0.50), 0.0),
    ]
    out = []
    for i, (name, count, noise, oof) in enumerate(blocks):
        out.append(
            (
                name,
                ScenarioConfig(
                    n_images=max(1, int(round(count * scale))),
                    corruption=noise,
                    seed=seed + i,
                    out_of_frame_fraction=oof,
                ),
            )
        )
    return out
