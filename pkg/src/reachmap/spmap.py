"""Per-pixel reachability maps and their gray-mask overlay rendering."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .pointcloud import CameraIntrinsics, DepthImage, filter_reachable, transform_cloud, unproject_depth
from .workspace import VoxelGrid, grid_to_bytes

log = logging.getLogger(__name__)


class PixelClass(enum.IntEnum):
    UNREACHABLE = 0
    INVALID = 1
    REACHABLE = 2


SEMANTIC_CODES = {PixelClass.UNREACHABLE: 0, PixelClass.INVALID: 128, PixelClass.REACHABLE: 255}

TREAT_AS_UNREACHABLE = "treat-as-unreachable"
LEAVE_UNTOUCHED = "leave-untouched"


@dataclass(frozen=True)
class RenderStyle:
    gray: tuple[int, int, int] = (128, 128, 128)
    alpha: float = 0.6
    boundary: tuple[int, int, int] = (255, 255, 255)
    thickness: int = 2
    invalid_policy: str = TREAT_AS_UNREACHABLE

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError("alpha must lie in [0, 1]")
        if int(self.thickness) < 1:
            raise InvalidArgumentError("boundary thickness must be >= 1")
        for name in ("gray", "boundary"):
            c = tuple(getattr(self, name))
            if len(c) != 3 or any(not 0 <= int(v) <= 255 for v in c):
                raise InvalidArgumentError(f"{name} must be three values in [0, 255]")
            object.__setattr__(self, name, tuple(int(v) for v in c))
        if self.invalid_policy not in (TREAT_AS_UNREACHABLE, LEAVE_UNTOUCHED):
            raise InvalidArgumentError(f"unknown invalid-pixel policy {self.invalid_policy!r}")


@dataclass(frozen=True, eq=False)
class SPMap:
    classes: np.ndarray  # (height, width) of PixelClass values
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.classes, dtype=np.uint8)
        if c.ndim != 2:
            raise InvalidArgumentError("classes must be 2D")
        if not np.isin(c, [int(p) for p in PixelClass]).all():
            raise InvalidArgumentError("classes contain values outside PixelClass")
        c.setflags(write=False)
        object.__setattr__(self, "classes", c)

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    def mask(self, cls: PixelClass) -> np.ndarray:
        return self.classes == int(cls)

    def counts(self) -> dict[PixelClass, int]:
        return {p: int((self.classes == int(p)).sum()) for p in PixelClass}

    def __eq__(self, other):
        if not isinstance(other, SPMap):
            return NotImplemented
        return np.array_equal(self.classes, other.classes) and self.provenance == other.provenance

    __hash__ = None


def grid_hash(grid: VoxelGrid) -> str:
    return hashlib.sha256(grid_to_bytes(grid)).hexdigest()[:16]


def intrinsics_hash(K: CameraIntrinsics) -> str:
    blob = json.dumps([K.fx, K.fy, K.cx, K.cy, K.width, K.height])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def classify_pixels(depth: DepthImage, K: CameraIntrinsics, E, grid: VoxelGrid) -> SPMap:
    """Label every pixel Reachable, Unreachable or Invalid (no depth reading)."""
    cloud = transform_cloud(E, unproject_depth(depth, K, stride=1))
    inside = filter_reachable(cloud, grid)
    classes = np.full((depth.height, depth.width), int(PixelClass.INVALID), dtype=np.uint8)
    u, v = cloud.pixels[:, 0], cloud.pixels[:, 1]
    classes[v, u] = np.where(inside, int(PixelClass.REACHABLE), int(PixelClass.UNREACHABLE))
    provenance = {
        "robot": grid.meta.robot_name,
        "grid_hash": grid_hash(grid),
        "intrinsics_hash": intrinsics_hash(K),
    }
    return SPMap(classes, provenance)


def boundary_mask(spmap: SPMap, thickness: int, include_invalid: bool = True) -> np.ndarray:
    """Masked pixels within ``thickness`` 4-neighbour steps of a Reachable pixel."""
    reachable = spmap.mask(PixelClass.REACHABLE)
    masked = _masked(spmap, include_invalid)
    if not reachable.any() or not masked.any():
        return np.zeros_like(reachable)
    cross = ndimage.generate_binary_structure(2, 1)
    near = ndimage.binary_dilation(reachable, structure=cross, iterations=int(thickness))
    return near & masked


def _masked(spmap: SPMap, include_invalid: bool) -> np.ndarray:
    masked = spmap.mask(PixelClass.UNREACHABLE)
    if include_invalid:
        masked = masked | spmap.mask(PixelClass.INVALID)
    return masked


def render_spmap(rgb: np.ndarray, spmap: SPMap, style: RenderStyle = RenderStyle()) -> np.ndarray:
    """Gray out unreachable pixels and outline where they meet reachable ones."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise InvalidArgumentError("rgb must be a (H, W, 3) uint8 image")
    if rgb.shape[:2] != spmap.classes.shape:
        raise InvalidArgumentError(f"rgb is {rgb.shape[1]}x{rgb.shape[0]}, map is {spmap.width}x{spmap.height}")
    include_invalid = style.invalid_policy == TREAT_AS_UNREACHABLE
    masked = _masked(spmap, include_invalid)
    out = rgb.copy()
    if masked.any():
        src = rgb[masked].astype(np.float64)
        gray = np.asarray(style.gray, dtype=np.float64)
        blended = np.rint(src * (1.0 - style.alpha) + gray * style.alpha)
        out[masked] = np.clip(blended, 0, 255).astype(np.uint8)
    out[boundary_mask(spmap, style.thickness, include_invalid)] = style.boundary
    return out


def semantic_image(spmap: SPMap) -> np.ndarray:
    """Single-channel coding: 0 Unreachable, 128 Invalid, 255 Reachable."""
    lut = np.zeros(256, dtype=np.uint8)
    for cls, code in SEMANTIC_CODES.items():
        lut[int(cls)] = code
    return lut[spmap.classes]


def spmap_from_semantic(image: np.ndarray) -> SPMap:
    image = np.asarray(image, dtype=np.uint8)
    classes = np.full(image.shape, 255, dtype=np.uint8)
    for cls, code in SEMANTIC_CODES.items():
        classes[image == code] = int(cls)
    if (classes == 255).any():
        raise InvalidArgumentError("semantic image holds values other than 0, 128, 255")
    return SPMap(classes)


def build_spmap(
    rgb: np.ndarray,
    depth: DepthImage,
    K: CameraIntrinsics,
    E,
    grid: VoxelGrid,
    style: RenderStyle = RenderStyle(),
    robot_name: str | None = None,
) -> tuple[SPMap, np.ndarray]:
    """Classify then render; returns the semantic map and the overlay image."""
    if robot_name is not None and robot_name != grid.meta.robot_name:
        log.warning("grid was built for robot %r, scene requests %r", grid.meta.robot_name, robot_name)
    rgb = np.asarray(rgb)
    if rgb.shape[:2] != (depth.height, depth.width):
        raise InvalidArgumentError("rgb and depth dimensions differ")
    spmap = classify_pixels(depth, K, E, grid)
    return spmap, render_spmap(rgb, spmap, style)
