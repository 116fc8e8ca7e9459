"""Depth images to point clouds, extrinsic transforms and reachability filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvalidArgumentError, ValidationError
from .kinematics import is_rigid
from .workspace import VoxelGrid, contains_many

DEFAULT_MAX_RANGE = 20.0

CAMERA = "camera"
BASE = "base"


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"intrinsics.{name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if int(self.width) < 1 or int(self.height) < 1:
            raise InvalidArgumentError("image width and height must be >= 1")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Metric depth, ``(height, width)``.  Zero or non-finite means no reading."""

    depth: np.ndarray
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        d = np.array(self.depth, dtype=np.float64)
        if d.ndim != 2 or d.size == 0:
            raise InvalidArgumentError("depth must be a non-empty 2D array")
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def valid(self) -> np.ndarray:
        d = self.depth
        with np.errstate(invalid="ignore"):
            return np.isfinite(d) & (d > 0) & (d < self.max_range)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points with the pixel ``(u, v)`` each came from."""

    points: np.ndarray
    pixels: np.ndarray
    frame: str
    image_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        pix = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        if len(pts) != len(pix):
            raise InvalidArgumentError("points and pixels differ in length")
        if self.frame not in (CAMERA, BASE):
            raise InvalidArgumentError(f"unknown frame {self.frame!r}")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("point cloud contains non-finite points")
        w, h = self.image_size
        if len(pix) and (pix.min() < 0 or pix[:, 0].max() >= w or pix[:, 1].max() >= h):
            raise InvalidArgumentError("pixel provenance outside image bounds")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "pixels", pix)

    def __len__(self):
        return len(self.points)


def unproject_depth(depth: DepthImage, K: CameraIntrinsics, stride: int = 1) -> PointCloud:
    """Back-project valid pixels on the stride lattice, in row-major order."""
    if (depth.width, depth.height) != (K.width, K.height):
        raise InvalidArgumentError(
            f"depth is {depth.width}x{depth.height}, intrinsics say {K.width}x{K.height}"
        )
    if int(stride) < 1:
        raise InvalidArgumentError("stride must be >= 1")
    valid = depth.valid[::stride, ::stride]
    vs, us = np.nonzero(valid)
    us = us * stride
    vs = vs * stride
    z = depth.depth[vs, us]
    x = (us - K.cx) * z / K.fx
    y = (vs - K.cy) * z / K.fy
    return PointCloud(np.column_stack([x, y, z]), np.column_stack([us, vs]), CAMERA, (K.width, K.height))


def project_points(K: CameraIntrinsics, points) -> np.ndarray:
    """Pinhole projection of camera-frame points to continuous ``(u, v)``."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.column_stack([K.fx * P[:, 0] / P[:, 2] + K.cx, K.fy * P[:, 1] / P[:, 2] + K.cy])


def apply_transform(E, points) -> np.ndarray:
    E = np.asarray(E, dtype=float)
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    return P @ E[:3, :3].T + E[:3, 3]


def transform_cloud(E, cloud: PointCloud) -> PointCloud:
    """Map a camera-frame cloud into the robot base frame with camera->base ``E``."""
    if not is_rigid(E):
        raise ValidationError("extrinsics", "camera-to-base transform is not rigid")
    if cloud.frame != CAMERA:
        raise ContractError(f"transform_cloud expects a camera-frame cloud, got {cloud.frame!r}")
    return PointCloud(apply_transform(E, cloud.points), cloud.pixels, BASE, cloud.image_size)


def invert_transform(T) -> np.ndarray:
    """Inverse of a rigid transform, e.g. to turn base->camera into camera->base."""
    T = np.asarray(T, dtype=float)
    R, t = T[:3, :3], T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ t
    return out


def filter_reachable(cloud: PointCloud, grid: VoxelGrid) -> np.ndarray:
    """Boolean mask: point i lies in an occupied voxel of ``grid``."""
    if cloud.frame != BASE:
        raise ContractError("filter_reachable needs a base-frame cloud; apply transform_cloud first")
    return contains_many(grid, cloud.points)
