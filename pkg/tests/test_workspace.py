import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_robot, planar
from oracles import in_annulus, naive_contains
from reachmap.errors import GridCorruptionError, GridFormatError, InvalidArgumentError, ResourceLimitError
from reachmap.kinematics import end_effector_position
from reachmap.workspace import (
    GridMeta,
    GridSpec,
    SamplingSpec,
    VoxelGrid,
    build_workspace_grid,
    contains,
    contains_many,
    dilate,
    empty_grid,
    grid_from_bytes,
    grid_to_bytes,
    iter_joint_batches,
    load_grid,
    sample_joint_space,
    save_grid,
)

DISK_SPEC = GridSpec((-1.04, -1.04, -0.01), 0.02, (104, 104, 1))


def centers(spec):
    nx, ny, nz = spec.dims
    r = spec.resolution
    z, y, x = np.meshgrid(*(o + (np.arange(n) + 0.5) * r for o, n in zip(spec.origin[::-1], (nz, ny, nx))),
                          indexing="ij")
    return x, y, z


class TestSampling:
    def test_inclusive_linspace(self):
        robot = planar([1.0], limits=(0.0, 1.0))
        assert list(sample_joint_space(robot, SamplingSpec.grid([3]))) == [(0.0,), (0.5,), (1.0,)]

    def test_cartesian_product(self):
        robot = planar([1.0, 1.0], limits=(0.0, 1.0))
        configs = list(sample_joint_space(robot, SamplingSpec.grid([2, 2])))
        assert configs == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]

    def test_random_is_reproducible(self, planar2r):
        spec = SamplingSpec.random(100, 42)
        a = list(sample_joint_space(planar2r, spec))
        b = list(sample_joint_space(planar2r, spec))
        assert len(a) == 100 and a == b
        assert a != list(sample_joint_space(planar2r, SamplingSpec.random(100, 43)))

    def test_random_within_limits(self):
        robot = planar([1.0, 1.0], limits=(-0.2, 0.7))
        Q = np.vstack(list(iter_joint_batches(robot, SamplingSpec.random(200_000, 1))))
        assert Q.shape == (200_000, 2)
        assert Q.min() >= -0.2 and Q.max() <= 0.7

    def test_random_needs_seed(self):
        with pytest.raises(InvalidArgumentError):
            SamplingSpec("random", total_samples=10)

    def test_count_mismatch(self, planar2r):
        with pytest.raises(InvalidArgumentError):
            list(sample_joint_space(planar2r, SamplingSpec.grid([3])))

    def test_cap(self):
        with pytest.raises(ResourceLimitError):
            SamplingSpec.grid([1000, 1000], max_samples=10_000)
        with pytest.raises(ResourceLimitError):
            SamplingSpec.random(10**6, 0, max_samples=1000)

    def test_zero_samples(self):
        with pytest.raises(InvalidArgumentError):
            SamplingSpec.random(0, 0)
        with pytest.raises(InvalidArgumentError):
            SamplingSpec.grid([3, 0])


class TestGridSpec:
    def test_voxel_cap(self):
        with pytest.raises(ResourceLimitError):
            GridSpec((0, 0, 0), 0.01, (2000, 2000, 2000))
        with pytest.raises(ResourceLimitError):
            GridSpec((0, 0, 0), 0.01, (10, 10, 10), max_voxels=999)

    @pytest.mark.parametrize("res, dims", [(0.0, (1, 1, 1)), (-1.0, (1, 1, 1)), (0.1, (0, 1, 1))])
    def test_invalid(self, res, dims):
        with pytest.raises(InvalidArgumentError):
            GridSpec((0, 0, 0), res, dims)


class TestContains:
    spec = GridSpec((0.0, 0.0, 0.0), 0.1, (4, 3, 2))

    def grid_with(self, *ijk):
        occ = np.zeros((2, 3, 4), bool)
        for i, j, k in ijk:
            occ[k, j, i] = True
        return VoxelGrid(self.spec, occ, GridMeta("t", 1, 0, 0))

    def test_outside_box(self):
        g = self.grid_with(*[(i, j, k) for i in range(4) for j in range(3) for k in range(2)])
        for p in [(-0.01, 0.05, 0.05), (0.05, 0.35, 0.05), (0.05, 0.05, 1.0)]:
            assert not contains(g, p)

    def test_voxel_center(self):
        assert contains(self.grid_with((0, 0, 0)), (0.05, 0.05, 0.05))

    def test_max_corner_is_out(self):
        g = self.grid_with(*[(i, j, k) for i in range(4) for j in range(3) for k in range(2)])
        assert not contains(g, self.spec.upper)
        assert not contains(g, (0.4, 0.05, 0.05))
        assert contains(g, (0.3999, 0.05, 0.05))

    def test_linear_order_is_x_fastest(self):
        g = self.grid_with((1, 0, 0))
        assert np.flatnonzero(g.occupancy.ravel()).tolist() == [1]
        g = self.grid_with((0, 1, 0))
        assert np.flatnonzero(g.occupancy.ravel()).tolist() == [4]
        g = self.grid_with((0, 0, 1))
        assert np.flatnonzero(g.occupancy.ravel()).tolist() == [12]

    def test_non_finite_point(self):
        g = self.grid_with((0, 0, 0))
        assert not contains(g, (math.nan, 0.05, 0.05))

    @given(st.lists(st.tuples(*[st.floats(-0.1, 0.5)] * 3), min_size=1, max_size=50), st.integers(0, 2**24 - 1))
    def test_matches_naive_lookup(self, points, bits):
        occ = np.array([(bits >> i) & 1 for i in range(24)], bool)
        g = VoxelGrid(self.spec, occ, GridMeta("t", 1, 0, 0))
        occupied = {(i, j, k) for k in range(2) for j in range(3) for i in range(4) if g.occupancy[k, j, i]}
        expected = [naive_contains(self.spec.origin, 0.1, self.spec.dims, occupied, p) for p in points]
        assert contains_many(g, points).tolist() == expected


def arc_distance(x, y, radius):
    """Distance from (x, y) to the upper half circle of ``radius``."""
    ang = np.arctan2(y, x)
    on_side = (ang >= 0) & (ang <= math.pi)
    d_arc = np.abs(np.hypot(x, y) - radius)
    d_end = np.minimum(np.hypot(x - radius, y), np.hypot(x + radius, y))
    return np.where(on_side, d_arc, d_end)


class TestBuild:
    def test_half_circle(self):
        robot = planar([0.3], limits=(0.0, math.pi))
        spec = GridSpec((-0.5, -0.5, -0.025), 0.05, (20, 20, 1))
        g = build_workspace_grid(robot, SamplingSpec.grid([5000]), spec, 0)
        assert contains(g, (0.3, 0.0, 0.0))
        assert not contains(g, (0.0, -0.3, 0.0))
        x, y, _ = centers(spec)
        dist = arc_distance(x[0], y[0], 0.3)
        half_diag = 0.05 * math.sqrt(2) / 2
        occ = g.occupancy[0]
        # A voxel whose centre is farther than half a diagonal cannot contain an arc point.
        assert not occ[dist > half_diag + 1e-12].any()
        # Dense sampling must hit every voxel the arc passes through its interior.
        assert occ[dist < 0.05 / 2 - 1e-12].all()

    def test_zero_range_single_voxel(self):
        robot = planar([0.3, 0.2], limits=(0.0, 0.0))
        spec = GridSpec((-1, -1, -0.05), 0.1, (20, 20, 1))
        g = build_workspace_grid(robot, SamplingSpec.grid([3, 3]), spec, 0)
        assert g.count == 1 and contains(g, (0.5, 0.0, 0.0))
        g1 = build_workspace_grid(robot, SamplingSpec.grid([3, 3]), spec, 1)
        assert g1.count == 9

    def test_disk_against_rejection_oracle(self, planar2r):
        g = build_workspace_grid(planar2r, SamplingSpec.grid([700, 700]), DISK_SPEC, 0)
        assert contains(g, (0.9, 0.0, 0.0))
        assert not contains(g, (1.2, 0.0, 0.0))
        rng = np.random.default_rng(2024)
        q = rng.uniform(-math.pi, math.pi, (10**6, 2))
        c = np.cumsum(q, axis=1)
        x = 0.5 * np.cos(c[:, 0]) + 0.5 * np.cos(c[:, 1])
        y = 0.5 * np.sin(c[:, 0]) + 0.5 * np.sin(c[:, 1])
        ix = np.floor((x + 1.04) / 0.02).astype(int)
        iy = np.floor((y + 1.04) / 0.02).astype(int)
        oracle = np.zeros((104, 104), bool)
        oracle[iy, ix] = True
        built = g.occupancy[0]
        ratio = (built ^ oracle).sum() / oracle.sum()
        assert ratio < 0.02

    def test_disk_exact_away_from_boundary(self, planar2r):
        g = build_workspace_grid(planar2r, SamplingSpec.random(10**5, 3), DISK_SPEC, 0)
        x, y, _ = centers(DISK_SPEC)
        r = np.hypot(x[0], y[0])
        band = DISK_SPEC.resolution * math.sqrt(2) / 2
        far = np.abs(r - 1.0) > band
        analytic = np.array([[in_annulus((xx, yy), 0.5, 0.5) for xx, yy in zip(xr, yr)] for xr, yr in zip(x[0], y[0])])
        assert np.array_equal(g.occupancy[0][far], analytic[far])

    def test_soundness(self, ur5):
        spec = GridSpec((-1, -1, -1), 0.05, (40, 40, 40))
        sampling = SamplingSpec.random(2000, 5)
        g = build_workspace_grid(ur5, sampling, spec, 0)
        checked = 0
        for q in sample_joint_space(ur5, sampling):
            p = end_effector_position(ur5, q)
            if np.all((p >= -1) & (p < 1)):
                assert contains(g, p)
                checked += 1
        assert checked > 1900

    def test_out_of_bounds_counted(self, planar2r):
        spec = GridSpec((0.0, 0.0, -0.01), 0.02, (60, 60, 1))
        g = build_workspace_grid(planar2r, SamplingSpec.random(10_000, 9), spec, 0)
        assert 0 < g.meta.out_of_bounds < 10_000
        assert g.meta.sample_count == 10_000 and g.meta.seed == 9 and g.meta.robot_name == "planar"

    def test_threads_do_not_change_result(self, ur5):
        spec = GridSpec((-1, -1, -1), 0.04, (50, 50, 50))
        sampling = SamplingSpec.random(300_000, 11)
        one = build_workspace_grid(ur5, sampling, spec, 1, threads=1)
        four = build_workspace_grid(ur5, sampling, spec, 1, threads=4)
        again = build_workspace_grid(ur5, sampling, spec, 1, threads=1)
        assert grid_to_bytes(one) == grid_to_bytes(four) == grid_to_bytes(again)

    def test_env_thread_count(self, ur5, monkeypatch):
        spec = GridSpec((-1, -1, -1), 0.1, (20, 20, 20))
        sampling = SamplingSpec.random(100_000, 2)
        base = build_workspace_grid(ur5, sampling, spec, 0)
        monkeypatch.setenv("REACHMAP_THREADS", "3")
        assert build_workspace_grid(ur5, sampling, spec, 0) == base
        monkeypatch.setenv("REACHMAP_THREADS", "zero")
        with pytest.raises(InvalidArgumentError):
            build_workspace_grid(ur5, sampling, spec, 0)

    def test_dilation_monotone_on_build(self, ur5):
        spec = GridSpec((-1, -1, -1), 0.05, (40, 40, 40))
        sampling = SamplingSpec.random(5000, 4)
        grids = [build_workspace_grid(ur5, sampling, spec, r).occupancy for r in range(4)]
        for small, big in zip(grids, grids[1:]):
            assert not (small & ~big).any()

    @given(st.integers(0, 2**27 - 1), st.integers(0, 3))
    @settings(max_examples=40)
    def test_dilation_monotone(self, bits, r):
        occ = np.array([(bits >> i) & 1 for i in range(27)], bool).reshape(3, 3, 3)
        a, b = dilate(occ, r), dilate(occ, r + 1)
        assert not (occ & ~a).any() and not (a & ~b).any()

    def test_dilation_is_chebyshev(self):
        occ = np.zeros((7, 7, 7), bool)
        occ[3, 3, 3] = True
        assert dilate(occ, 2).sum() == 125
        assert dilate(occ, 2)[1:6, 1:6, 1:6].all()


def random_grid(rng, name="robot"):
    dims = tuple(int(v) for v in rng.integers(1, 20, 3))
    spec = GridSpec(tuple(rng.normal(size=3)), float(rng.uniform(0.001, 0.5)), dims)
    occ = rng.random(math.prod(dims)) < rng.random()
    meta = GridMeta(name, int(rng.integers(1, 2**40)), int(rng.integers(0, 2**63)), int(rng.integers(0, 5)))
    return VoxelGrid(spec, occ, meta)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        g = random_grid(np.random.default_rng(0), name="ür5-é")
        save_grid(g, tmp_path / "g.sprm")
        assert load_grid(tmp_path / "g.sprm") == g

    def test_header_layout(self):
        spec = GridSpec((1.0, 2.0, 3.0), 0.5, (3, 2, 1))
        occ = np.array([1, 0, 0, 0, 0, 1], bool)
        data = grid_to_bytes(VoxelGrid(spec, occ, GridMeta("ab", 7, 9, 2)))
        assert data[:4] == b"SPRM"
        assert struct.unpack_from("<HH", data, 4) == (1, 0)
        assert struct.unpack_from("<3dd", data, 8) == (1.0, 2.0, 3.0, 0.5)
        assert struct.unpack_from("<3IB", data, 40) == (3, 2, 1, 2)
        assert data[53:56] == b"\0\0\0"
        assert struct.unpack_from("<QQH", data, 56) == (7, 9, 2)
        assert data[74:76] == b"ab"
        # bit 0 and bit 5, LSB first
        assert data[76:] == bytes([0b00100001])

    def test_wrong_magic(self):
        data = bytearray(grid_to_bytes(empty_grid(GridSpec((0, 0, 0), 1.0, (2, 2, 2)))))
        data[:4] = b"SPRX"
        with pytest.raises(GridFormatError):
            grid_from_bytes(bytes(data))

    def test_wrong_version(self):
        data = bytearray(grid_to_bytes(empty_grid(GridSpec((0, 0, 0), 1.0, (2, 2, 2)))))
        data[4] = 2
        with pytest.raises(GridFormatError):
            grid_from_bytes(bytes(data))

    def test_short_payload(self):
        data = grid_to_bytes(empty_grid(GridSpec((0, 0, 0), 1.0, (4, 4, 4))))
        with pytest.raises(GridCorruptionError):
            grid_from_bytes(data[:-1])

    def test_truncated_header(self):
        data = grid_to_bytes(empty_grid(GridSpec((0, 0, 0), 1.0, (4, 4, 4))))
        with pytest.raises(GridCorruptionError):
            grid_from_bytes(data[:30])

    def test_trailing_bytes(self):
        data = grid_to_bytes(empty_grid(GridSpec((0, 0, 0), 1.0, (4, 4, 4))))
        with pytest.raises(GridCorruptionError):
            grid_from_bytes(data + b"\0")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_grid(tmp_path / "nope.sprm")
