"""Rigid-body and camera geometry primitives.

Conventions used everywhere in this package:

  * Quaternions are scalar-first ``(w, x, y, z)`` and use the Hamilton
    product. A pose quaternion actively rotates target-frame points into
    the camera frame, so ``p_cam = R(q) @ p_target + t``. ``q`` and ``-q``
    describe the same rotation.
  * The camera frame is right-handed with +z along the boresight,
    +x right, +y down.
  * Pixel coordinates are continuous, origin at the top-left image
    corner, and the center of integer pixel ``(i, j)`` sits at
    ``(i + 0.5, j + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidFov, PointBehindCamera

# Depth at or below this is treated as behind the camera.
BEHIND_EPS = 1e-9


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion ``(w, x, y, z)``, normalized on construction."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if n == 0.0:
            raise ValueError("zero quaternion has no direction")
        if abs(n - 1.0) > 1e-12:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis, angle_rad: float) -> "Quaternion":
        """Quaternion for a rotation of ``angle_rad`` about ``axis``."""
        ax = np.asarray(axis, dtype=float)
        n = np.linalg.norm(ax)
        if n == 0.0:
            raise ValueError("rotation axis must be nonzero")
        ax = ax / n
        h = 0.5 * angle_rad
        s = math.sin(h)
        return Quaternion(math.cos(h), s * ax[0], s * ax[1], s * ax[2])

    @staticmethod
    def from_matrix(R) -> "Quaternion":
        """Quaternion for a proper rotation matrix (Shepperd's method)."""
        R = np.asarray(R, dtype=float)
        t = np.trace(R)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (R[2, 1] - R[1, 2]) / s
            y = (R[0, 2] - R[2, 0]) / s
            z = (R[1, 0] - R[0, 1]) / s
        elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
            s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            w = (R[2, 1] - R[1, 2]) / s
            x = 0.25 * s
            y = (R[0, 1] + R[1, 0]) / s
            z = (R[0, 2] + R[2, 0]) / s
        elif R[1, 1] >= R[2, 2]:
            s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
            w = (R[0, 2] - R[2, 0]) / s
            x = (R[0, 1] + R[1, 0]) / s
            y = 0.25 * s
            z = (R[1, 2] + R[2, 1]) / s
        else:
            s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
            w = (R[1, 0] - R[0, 1]) / s
            x = (R[0, 2] + R[2, 0]) / s
            y = (R[1, 2] + R[2, 1]) / s
            z = 0.25 * s
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        return Quaternion(w, x, y, z)

    def multiply(self, other: "Quaternion") -> "Quaternion":
        """Hamilton product ``self * other`` (``other`` applied first)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def to_matrix(self) -> np.ndarray:
        """3x3 rotation matrix applying this quaternion to column vectors."""
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


def rotate_point(q: Quaternion, p) -> np.ndarray:
    """Rotate a 3-vector by ``q`` via the sandwich product ``q * p * q.conj``.

    Expanded to ``p + 2w(v x p) + 2(v x (v x p))`` so no intermediate
    quaternion is materialized (the constructor would renormalize it).
    """
    p = np.asarray(p, dtype=float)
    v = np.array([q.x, q.y, q.z])
    vp = np.cross(v, p)
    return p + 2.0 * q.w * vp + 2.0 * np.cross(v, vp)


def random_rotation(rng: np.random.Generator) -> Quaternion:
    """Rotation drawn uniformly from SO(3) (normalized 4-D Gaussian)."""
    v = rng.normal(size=4)
    return Quaternion(v[0], v[1], v[2], v[3])


@dataclass(frozen=True)
class Pose:
    """Rigid transform taking target-frame points into the camera frame."""

    rotation: Quaternion
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(Quaternion.identity(), np.zeros(3))


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics in pixels, zero skew, no distortion."""

    focal_px: float
    cx: float
    cy: float
    width: int
    height: int


def camera_from_fov(h_fov_deg: float, width: int, height: int) -> CameraModel:
    """Build a pinhole model from a horizontal field of view.

    Parameters
    ----------
    h_fov_deg : full horizontal field of view, degrees, in (0, 180).
    width, height : image size in pixels.

    The focal length is ``(width / 2) / tan(h_fov / 2)`` and the principal
    point defaults to the image center.
    """
    if not 0.0 < h_fov_deg < 180.0:
        raise InvalidFov(f"h_fov_deg must be in (0, 180), got {h_fov_deg}")
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    f = (width / 2.0) / math.tan(math.radians(h_fov_deg) / 2.0)
    return CameraModel(focal_px=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def transform_points(pose: Pose, points) -> np.ndarray:
    """Map target-frame points (m, 3) into the camera frame."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    R = pose.rotation.to_matrix()
    return pts @ R.T + pose.translation


def project_camera_points(cam: CameraModel, points_cam) -> np.ndarray:
    """Project camera-frame points (m, 3) to pixel coordinates (m, 2).

    Raises PointBehindCamera if any depth is at or below ``BEHIND_EPS``.
    """
    pc = np.atleast_2d(np.asarray(points_cam, dtype=float))
    z = pc[:, 2]
    if np.any(z <= BEHIND_EPS):
        raise PointBehindCamera(f"min depth {z.min():.3e} is not in front of the camera")
    u = cam.focal_px * pc[:, 0] / z + cam.cx
    v = cam.focal_px * pc[:, 1] / z + cam.cy
    return np.column_stack([u, v])


def project_points(pose: Pose, cam: CameraModel, points) -> np.ndarray:
    """Project target-frame points through a pose onto the image plane."""
    return project_camera_points(cam, transform_points(pose, points))


@dataclass(frozen=True)
class MeshModel:
    """Triangle mesh: ``vertices`` (V, 3) float and ``triangles`` (T, 3) int."""

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=np.intp)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (V, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (T, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def triangle_corners(self) -> np.ndarray:
        """Corner coordinates per triangle, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    def bounding_radius(self) -> float:
        """Radius of the origin-centered sphere enclosing all vertices."""
        return float(np.linalg.norm(self.vertices, axis=1).max())


def load_obj(path) -> MeshModel:
    """Load the ``v``/``f`` subset of a Wavefront OBJ file.

    Faces may reference ``v/vt/vn`` tuples; only the vertex index is kept.
    Indices are 1-based (negative indices count from the end). Polygons
    with more than three corners are fan-triangulated.
    """
    path = Path(path)
    vertices: list[list[float]] = []
    triangles: list[list[int]] = []

    def resolve(token: str) -> int:
        idx = int(token.split("/")[0])
        if idx < 0:
            idx += len(vertices)
        else:
            idx -= 1
        if not 0 <= idx < len(vertices):
            raise ValueError(f"face index {token!r} out of range in {path}")
        return idx

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                corners = [resolve(tok) for tok in parts[1:]]
                if len(corners) < 3:
                    raise ValueError(f"face with fewer than 3 corners in {path}")
                for k in range(1, len(corners) - 1):
                    triangles.append([corners[0], corners[k], corners[k + 1]])
    if not vertices or not triangles:
        raise ValueError(f"no usable geometry in {path}")
    return MeshModel(np.array(vertices), np.array(triangles), name=path.stem)


def make_box_mesh(extents=(1.0, 1.0, 1.0), name: str = "box") -> MeshModel:
    """Axis-aligned box centered at the origin with the given edge lengths."""
    ex, ey, ez = (float(e) / 2.0 for e in extents)
    v = np.array(
        [
            [-ex, -ey, -ez],
            [+ex, -ey, -ez],
            [+ex, +ey, -ez],
            [-ex, +ey, -ez],
            [-ex, -ey, +ez],
            [+ex, -ey, +ez],
            [+ex, +ey, +ez],
            [-ex, +ey, +ez],
        ]
    )
    quads = [
        (0, 1, 2, 3),  # z-
        (4, 7, 6, 5),  # z+
        (0, 4, 5, 1),  # y-
        (3, 2, 6, 7),  # y+
        (0, 3, 7, 4),  # x-
        (1, 5, 6, 2),  # x+
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append([a, b, c])
        tris.append([a, c, d])
    return MeshModel(v, np.array(tris), name=name)


def make_cylinder_mesh(
    radius: float = 1.0, length: float = 2.0, segments: int = 16, name: str = "cylinder"
) -> MeshModel:
    """Closed cylinder along +z, centered at the origin."""
    if segments < 3:
        raise ValueError("segments must be at least 3")
    hz = length / 2.0
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    bottom = np.column_stack([ring, np.full(segments, -hz)])
    top = np.column_stack([ring, np.full(segments, +hz)])
    centers = np.array([[0.0, 0.0, -hz], [0.0, 0.0, +hz]])
    v = np.vstack([bottom, top, centers])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([i, j, segments + i])         # side lower
        tris.append([j, segments + j, segments + i])  # side upper
        tris.append([cb, j, i])                   # bottom cap
        tris.append([ct, segments + i, segments + j])  # top cap
    return MeshModel(v, np.array(tris), name=name)
