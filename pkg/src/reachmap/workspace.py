"""Voxelised reachable workspace built by sampling forward kinematics.

Occupancy is stored as a boolean array of shape ``(nz, ny, nx)`` so that a
C-order ravel is x-fastest, matching the on-disk bit order.  Voxel indices
use the half-open rule ``floor((p - origin) / resolution)``.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    GridCorruptionError,
    GridFormatError,
    InvalidArgumentError,
    ResourceLimitError,
)
from .kinematics import RobotModel, end_effector_positions

log = logging.getLogger(__name__)

DEFAULT_MAX_VOXELS = 2**31
DEFAULT_MAX_SAMPLES = 10**9
DEFAULT_SAMPLES = 10**6
DEFAULT_RESOLUTION = 0.02
DEFAULT_DILATION = 1
BATCH_SIZE = 1 << 16
THREADS_ENV = "REACHMAP_THREADS"

SPRM_MAGIC = b"SPRM"
SPRM_VERSION = 1
_HEADER = struct.Struct("<4sHH3dd3IB3xQQH")


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidArgumentError(f"{THREADS_ENV} must be >= 1")
    return n


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float, float]
    resolution: float
    dims: tuple[int, int, int]
    max_voxels: int = field(default=DEFAULT_MAX_VOXELS, compare=False, repr=False)

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 3 or not all(math.isfinite(v) for v in origin):
            raise InvalidArgumentError("origin must be three finite numbers")
        if not (math.isfinite(self.resolution) and self.resolution > 0):
            raise InvalidArgumentError("resolution must be positive and finite")
        if len(dims) != 3 or any(v < 1 for v in dims):
            raise InvalidArgumentError("dims must be three positive integers")
        if math.prod(dims) > self.max_voxels:
            raise ResourceLimitError(f"grid of {math.prod(dims)} voxels exceeds cap {self.max_voxels}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def n_voxels(self) -> int:
        return math.prod(self.dims)

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(o + n * self.resolution for o, n in zip(self.origin, self.dims))

    @classmethod
    def from_bounds(cls, lower, upper, resolution: float, **kw) -> "GridSpec":
        """Smallest grid anchored at ``lower`` whose voxels cover ``upper``."""
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        if np.any(upper <= lower):
            raise InvalidArgumentError("upper bounds must exceed lower bounds")
        dims = np.maximum(1, np.ceil((upper - lower) / resolution - 1e-9)).astype(int)
        return cls(tuple(lower), resolution, tuple(int(v) for v in dims), **kw)


@dataclass(frozen=True)
class GridMeta:
    robot_name: str
    sample_count: int
    seed: int
    dilation_radius: int
    # Not persisted in SPRM files, so excluded from equality.
    out_of_bounds: int = field(default=0, compare=False)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    spec: GridSpec
    occupancy: np.ndarray
    meta: GridMeta

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        nx, ny, nz = self.spec.dims
        if occ.size != nx * ny * nz:
            raise InvalidArgumentError(f"occupancy has {occ.size} cells, spec needs {nx * ny * nz}")
        occ = occ.reshape(nz, ny, nx)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.meta == other.meta
            and np.array_equal(self.occupancy, other.occupancy)
        )

    __hash__ = None

    def with_occupancy(self, occupancy) -> "VoxelGrid":
        return VoxelGrid(self.spec, occupancy, self.meta)


def empty_grid(spec: GridSpec, robot_name: str = "none") -> VoxelGrid:
    nx, ny, nz = spec.dims
    return VoxelGrid(spec, np.zeros((nz, ny, nx), bool), GridMeta(robot_name, 0, 0, 0))


def full_grid(spec: GridSpec, robot_name: str = "none") -> VoxelGrid:
    nx, ny, nz = spec.dims
    return VoxelGrid(spec, np.ones((nz, ny, nx), bool), GridMeta(robot_name, 0, 0, 0))


# -- sampling -----------------------------------------------------------------


@dataclass(frozen=True)
class SamplingSpec:
    strategy: str
    per_joint_counts: tuple[int, ...] | None = None
    total_samples: int | None = None
    seed: int | None = None
    max_samples: int = field(default=DEFAULT_MAX_SAMPLES, compare=False, repr=False)

    def __post_init__(self):
        if self.strategy == "grid":
            if not self.per_joint_counts or any(int(c) < 1 for c in self.per_joint_counts):
                raise InvalidArgumentError("grid strategy needs positive per_joint_counts")
            object.__setattr__(self, "per_joint_counts", tuple(int(c) for c in self.per_joint_counts))
            if self.n_samples > self.max_samples:
                raise ResourceLimitError(f"{self.n_samples} grid samples exceed cap {self.max_samples}")
        elif self.strategy == "random":
            if self.total_samples is None or int(self.total_samples) < 1:
                raise InvalidArgumentError("random strategy needs total_samples >= 1")
            if self.seed is None:
                raise InvalidArgumentError("random strategy needs an explicit seed")
            if not 0 <= int(self.seed) < 2**64:
                raise InvalidArgumentError("seed must fit in an unsigned 64-bit integer")
            if self.total_samples > self.max_samples:
                raise ResourceLimitError(f"{self.total_samples} samples exceed cap {self.max_samples}")
        else:
            raise InvalidArgumentError(f"unknown sampling strategy {self.strategy!r}")

    @classmethod
    def grid(cls, counts: Sequence[int], **kw) -> "SamplingSpec":
        return cls("grid", per_joint_counts=tuple(counts), **kw)

    @classmethod
    def random(cls, total: int, seed: int, **kw) -> "SamplingSpec":
        return cls("random", total_samples=total, seed=seed, **kw)

    @property
    def n_samples(self) -> int:
        if self.strategy == "grid":
            return math.prod(self.per_joint_counts)
        return int(self.total_samples)

    @property
    def effective_seed(self) -> int:
        return int(self.seed) if self.seed is not None else 0


def _check_sampling(robot: RobotModel, spec: SamplingSpec):
    if spec.strategy == "grid" and len(spec.per_joint_counts) != robot.dof:
        raise InvalidArgumentError(
            f"per_joint_counts has {len(spec.per_joint_counts)} entries, robot has {robot.dof} joints"
        )


def _n_batches(spec: SamplingSpec) -> int:
    return -(-spec.n_samples // BATCH_SIZE)


def _sample_batch(robot: RobotModel, spec: SamplingSpec, k: int) -> np.ndarray:
    # Batch k is a pure function of (robot limits, spec, k); this is what makes
    # the build independent of how batches are spread over workers.
    lim = robot.limits
    start = k * BATCH_SIZE
    stop = min(start + BATCH_SIZE, spec.n_samples)
    if spec.strategy == "grid":
        axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(lim, spec.per_joint_counts)]
        idx = np.unravel_index(np.arange(start, stop), spec.per_joint_counts)
        return np.column_stack([ax[i] for ax, i in zip(axes, idx)])
    rng = np.random.default_rng([int(spec.seed), k])
    u = rng.random((stop - start, robot.dof))
    return lim[:, 0] + (lim[:, 1] - lim[:, 0]) * u


def iter_joint_batches(robot: RobotModel, spec: SamplingSpec) -> Iterator[np.ndarray]:
    """Yield ``(m, n)`` arrays of configs in stream order."""
    _check_sampling(robot, spec)
    for k in range(_n_batches(spec)):
        yield _sample_batch(robot, spec, k)


def sample_joint_space(robot: RobotModel, spec: SamplingSpec) -> Iterator[tuple[float, ...]]:
    """Stream joint configurations.

    The grid strategy walks the Cartesian product of inclusive per-joint
    linspaces with the last joint varying fastest.  The random strategy draws
    each joint uniformly from its limits and is reproducible from the seed.
    """
    for batch in iter_joint_batches(robot, spec):
        for row in batch:
            yield tuple(float(v) for v in row)


# -- grid construction and lookup ----------------------------------------------


def voxel_indices(spec: GridSpec, points) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ijk, inside)``: integer voxel indices and an in-bounds mask."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    with np.errstate(invalid="ignore"):
        f = np.floor((P - np.asarray(spec.origin)) / spec.resolution)
    inside = np.all((f >= 0) & (f < np.asarray(spec.dims)), axis=1)
    ijk = np.zeros(f.shape, dtype=np.int64)
    ijk[inside] = f[inside].astype(np.int64)
    return ijk, inside


def _linear(spec: GridSpec, ijk: np.ndarray) -> np.ndarray:
    nx, ny, _ = spec.dims
    return ijk[:, 0] + nx * (ijk[:, 1] + ny * ijk[:, 2])


def dilate(occupancy: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev-radius dilation of a 3D boolean array."""
    if radius < 0:
        raise InvalidArgumentError("dilation radius must be >= 0")
    if radius == 0:
        return occupancy.copy()
    size = 2 * radius + 1
    return ndimage.binary_dilation(occupancy, structure=np.ones((size, size, size), bool))


def build_workspace_grid(
    robot: RobotModel,
    sampling: SamplingSpec,
    grid: GridSpec,
    dilation_radius_voxels: int = DEFAULT_DILATION,
    threads: int | None = None,
) -> VoxelGrid:
    """Mark every voxel hit by a sampled end-effector position, then dilate.

    Samples that land outside ``grid`` are counted in ``meta.out_of_bounds``.
    Work is split into fixed-size batches; each worker ORs its batches into a
    private bitset, so the result does not depend on ``threads``.
    """
    _check_sampling(robot, sampling)
    if not isinstance(dilation_radius_voxels, int) or not 0 <= dilation_radius_voxels <= 255:
        raise InvalidArgumentError("dilation radius must be an int in [0, 255]")
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise InvalidArgumentError("threads must be >= 1")

    n_batches = _n_batches(sampling)

    def work(worker: int):
        bits = np.zeros(grid.n_voxels, dtype=bool)
        missed = 0
        for k in range(worker, n_batches, threads):
            pos = end_effector_positions(robot, _sample_batch(robot, sampling, k))
            ijk, inside = voxel_indices(grid, pos)
            bits[_linear(grid, ijk[inside])] = True
            missed += int((~inside).sum())
        return bits, missed

    if threads == 1:
        results = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(threads)))

    bits = np.zeros(grid.n_voxels, dtype=bool)
    missed = 0
    for b, m in results:
        bits |= b
        missed += m
    if missed:
        log.info("%d of %d samples fell outside the grid bounds", missed, sampling.n_samples)

    nx, ny, nz = grid.dims
    occ = dilate(bits.reshape(nz, ny, nx), dilation_radius_voxels)
    meta = GridMeta(robot.name, sampling.n_samples, sampling.effective_seed, dilation_radius_voxels, missed)
    return VoxelGrid(grid, occ, meta)


def contains(grid: VoxelGrid, p) -> bool:
    """True iff ``p`` is inside the grid bounds and its voxel is occupied."""
    return bool(contains_many(grid, np.asarray(p, float).reshape(1, 3))[0])


def contains_many(grid: VoxelGrid, points) -> np.ndarray:
    ijk, inside = voxel_indices(grid.spec, points)
    out = np.zeros(inside.shape, dtype=bool)
    i = ijk[inside]
    out[inside] = grid.occupancy[i[:, 2], i[:, 1], i[:, 0]]
    return out


def reach_bounds(robot: RobotModel, margin: float = 0.0):
    """Conservative axis-aligned box around everything the chain can reach."""
    reach = sum(abs(j.dh.a) + abs(j.dh.d) for j in robot.joints) + margin
    return (-reach, -reach, -reach), (reach, reach, reach)


# -- SPRM persistence -----------------------------------------------------------


def grid_to_bytes(grid: VoxelGrid) -> bytes:
    name = grid.meta.robot_name.encode("utf-8")
    if len(name) > 0xFFFF:
        raise InvalidArgumentError("robot name too long for SPRM header")
    header = _HEADER.pack(
        SPRM_MAGIC,
        SPRM_VERSION,
        0,
        *grid.spec.origin,
        grid.spec.resolution,
        *grid.spec.dims,
        grid.meta.dilation_radius,
        grid.meta.sample_count,
        grid.meta.seed,
        len(name),
    )
    payload = np.packbits(grid.occupancy.ravel(), bitorder="little").tobytes()
    return header + name + payload


def grid_from_bytes(data: bytes) -> VoxelGrid:
    if len(data) < 4 or data[:4] != SPRM_MAGIC:
        raise GridFormatError("not an SPRM file (bad magic)")
    if len(data) < _HEADER.size:
        raise GridCorruptionError("SPRM header is truncated")
    (_, version, _, ox, oy, oz, res, nx, ny, nz, dil, samples, seed, name_len) = _HEADER.unpack_from(data)
    if version != SPRM_VERSION:
        raise GridFormatError(f"unsupported SPRM version {version}")
    off = _HEADER.size
    if len(data) < off + name_len:
        raise GridCorruptionError("SPRM robot name is truncated")
    try:
        name = data[off : off + name_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise GridCorruptionError("SPRM robot name is not valid UTF-8") from exc
    off += name_len
    try:
        spec = GridSpec((ox, oy, oz), res, (nx, ny, nz))
    except (InvalidArgumentError, ResourceLimitError) as exc:
        raise GridCorruptionError(f"SPRM header describes an invalid grid: {exc}") from exc
    n = spec.n_voxels
    need = -(-n // 8)
    have = len(data) - off
    if have < need:
        raise GridCorruptionError(f"SPRM payload has {have} bytes, dims require {need}")
    if have > need:
        raise GridCorruptionError(f"SPRM payload has {have - need} trailing bytes")
    bits = np.unpackbits(np.frombuffer(data, np.uint8, need, off), count=n, bitorder="little")
    return VoxelGrid(spec, bits.astype(bool), GridMeta(name, samples, seed, dil))


def save_grid(grid: VoxelGrid, path) -> None:
    Path(path).write_bytes(grid_to_bytes(grid))


def load_grid(path) -> VoxelGrid:
    return grid_from_bytes(Path(path).read_bytes())
