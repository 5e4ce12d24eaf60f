"""Surface keypoint selection by weighted sample elimination.

Candidates are drawn uniformly by area over the mesh surface, then greedily
thinned: each candidate is weighted by how crowded its neighborhood is, and
the most crowded one is removed until ``n`` survive. The survivors approach
a Poisson-disk arrangement, which keeps PnP well conditioned from any view.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientGeometry, MissingConfig
from .geometry import MeshModel

# Weight falloff exponent for crowding; steeper favors the closest pairs.
WEIGHT_EXPONENT = 8
OVERSAMPLE_FACTOR = 5.0
SPEED_KEYPOINT_COUNT = 11


@dataclass(frozen=True)
class KeypointSet:
    """Ordered 3-D keypoints in the target body frame, meters."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] == 0:
            raise ValueError("points must have shape (n, 3) with n >= 1")
        if p.shape[0] > 1:
            d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)
            np.fill_diagonal(d, np.inf)
            if d.min() <= 0.0:
                raise ValueError("keypoints must be pairwise distinct")
        object.__setattr__(self, "points", p)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def triangle_areas(mesh: MeshModel) -> np.ndarray:
    """Area of each mesh triangle."""
    c = mesh.triangle_corners()
    cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def sample_surface(mesh: MeshModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` points uniformly by area over the mesh surface."""
    areas = triangle_areas(mesh)
    total = areas.sum()
    if total <= 0.0:
        raise InsufficientGeometry("mesh has zero surface area")
    tri = rng.choice(len(areas), size=count, p=areas / total)
    r1 = rng.random(count)
    r2 = rng.random(count)
    flip = r1 + r2 > 1.0  # reflect into the lower barycentric triangle
    r1[flip] = 1.0 - r1[flip]
    r2[flip] = 1.0 - r2[flip]
    c = mesh.triangle_corners()[tri]
    return c[:, 0] + r1[:, None] * (c[:, 1] - c[:, 0]) + r2[:, None] * (c[:, 2] - c[:, 0])


def select_keypoints(
    mesh: MeshModel,
    n: int,
    seed: int = 0,
    oversample_factor: float = OVERSAMPLE_FACTOR,
) -> KeypointSet:
    """Select ``n`` well-spread surface keypoints.

    Parameters
    ----------
    mesh : surface to sample.
    n : number of keypoints to keep. PnP needs at least 4 downstream, but
        smaller sets are allowed for degenerate geometry.
    seed : RNG seed; results are bit-for-bit reproducible per
        (mesh, n, seed, oversample_factor).
    oversample_factor : candidate pool size as a multiple of ``n``.

    Candidates beyond ``n`` are removed greedily by crowding weight
    ``w_ij = (1 - min(d_ij, 2 r_max) / (2 r_max)) ** 8`` summed over
    neighbors, where ``r_max = sqrt(area / (2 sqrt(3) n))`` is the radius
    of an ideal hexagonal packing of ``n`` disks on that much surface.
    Ties break toward the lower candidate index.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if oversample_factor < 1.0:
        raise ValueError("oversample_factor must be at least 1")
    rng = np.random.default_rng(seed)
    m = int(np.ceil(n * oversample_factor))
    pts = sample_surface(mesh, m, rng)
    if len(np.unique(pts, axis=0)) < n:
        raise InsufficientGeometry(f"mesh cannot yield {n} distinct samples")

    area = float(triangle_areas(mesh).sum())
    r_max = np.sqrt(area / (2.0 * np.sqrt(3.0) * n))
    reach = 2.0 * r_max

    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    w = (1.0 - np.minimum(d, reach) / reach) ** WEIGHT_EXPONENT
    np.fill_diagonal(w, 0.0)

    weights = w.sum(axis=1)
    alive = np.ones(m, dtype=bool)
    version = np.zeros(m, dtype=np.int64)
    heap = [(-weights[i], i, 0) for i in range(m)]
    heapq.heapify(heap)
    remaining = m
    while remaining > n:
        neg, i, ver = heapq.heappop(heap)
        if not alive[i] or ver != version[i]:
            continue
        alive[i] = False
        remaining -= 1
        for j in np.nonzero(w[i] > 0.0)[0]:
            if alive[j]:
                weights[j] -= w[i, j]
                version[j] += 1
                heapq.heappush(heap, (-weights[j], j, version[j]))

    return KeypointSet(pts[alive])


def save_keypoints(kps: KeypointSet, path) -> None:
    """Write one ``x y z`` row per keypoint."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in kps.points:
            # repr of a Python float survives the text round trip bit-exactly
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def load_keypoints(path) -> KeypointSet:
    """Read a plain-text keypoint table written by :func:`save_keypoints`."""
    path = Path(path)
    if not path.exists():
        raise MissingConfig(f"keypoint file not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 3:
                raise MissingConfig(f"{path}:{ln}: expected 'x y z', got {line.strip()!r}")
            rows.append([float(v) for v in parts])
    if not rows:
        raise MissingConfig(f"{path}: no keypoints found")
    pts = np.array(rows)
    try:
        return KeypointSet(pts)
    except ValueError as exc:
        raise MissingConfig(f"{path}: {exc}") from exc


def speed_keypoints(path) -> KeypointSet:
    """Load the fixed 11-point set used with the SPEED-style camera.

    The points live in a configuration file, one ``x y z`` row each; the
    set is rejected unless it holds exactly 11 distinct points.
    """
    kps = load_keypoints(path)
    if kps.n != SPEED_KEYPOINT_COUNT:
        raise MissingConfig(
            f"{path}: expected exactly {SPEED_KEYPOINT_COUNT} keypoints, found {kps.n}"
        )
    return kps
