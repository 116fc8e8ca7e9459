"""Synthetic half-disc scene used by the README walkthrough and the tests.

A planar two-link arm (0.4 m + 0.4 m) mounted 0.6 m up the base z-axis
reaches a disc of radius 0.8 m in the plane z = 0.6.  The workspace grid is
cropped to y >= 0, so the reachable set on that plane is a half-disc.  The
camera sits at the base origin looking along +z at a fronto-parallel wall
0.6 m away.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .imageio import write_depth_png, write_rgb_png
from .kinematics import DHRow, Joint, JointLimits, RobotModel, dump_robot_model
from .pointcloud import CameraIntrinsics, DepthImage
from .workspace import GridSpec, SamplingSpec

PLANE_Z = 0.6
LINK = 0.4
RESOLUTION = 0.005
SAMPLES = 2_000_000
SEED = 7
DILATION = 0

INTRINSICS = CameraIntrinsics(fx=100.0, fy=100.0, cx=160.0, cy=120.0, width=320, height=240)

# Depth holes (u0, v0, u1, v1), half-open; one in each region.
HOLES = ((20, 20, 40, 40), (150, 200, 170, 210))

ANNOTATIONS = [
    {"label": "apple", "bbox": [140, 150, 40, 40]},
    {"label": "mug", "bbox": [200, 40, 30, 30]},
    {"label": "book", "bbox": [280, 190, 35, 40]},
    {"label": "plant", "bbox": [22, 22, 16, 16]},
    {"label": "bowl", "bbox": [100, 130, 8, 6], "mask": [[1] * 8] * 3 + [[0] * 8] * 3},
]


def robot() -> RobotModel:
    lim = JointLimits(-math.pi, math.pi)
    return RobotModel(
        "planar2r",
        (Joint(DHRow(0.0, PLANE_Z, LINK, 0.0), lim), Joint(DHRow(0.0, 0.0, LINK, 0.0), lim)),
        np.eye(4),
    )


def grid_spec() -> GridSpec:
    n = round(2 * LINK / RESOLUTION) + 8
    reach = round(n * RESOLUTION, 9)
    return GridSpec((-reach, 0.0, PLANE_Z - RESOLUTION / 2), RESOLUTION, (2 * n, n, 1))


def sampling() -> SamplingSpec:
    return SamplingSpec.random(SAMPLES, SEED)


def depth_array() -> np.ndarray:
    d = np.full((INTRINSICS.height, INTRINSICS.width), PLANE_Z)
    for u0, v0, u1, v1 in HOLES:
        d[v0:v1, u0:u1] = 0.0
    return d


def depth_image() -> DepthImage:
    return DepthImage(depth_array())


def rgb_array() -> np.ndarray:
    h, w = INTRINSICS.height, INTRINSICS.width
    v, u = np.mgrid[0:h, 0:w]
    checker = ((u // 20 + v // 20) % 2) * 60
    return np.stack([u * 255 // (w - 1), v * 255 // (h - 1), 90 + checker], axis=-1).astype(np.uint8)


def manifest_dict() -> dict:
    K = INTRINSICS
    return {
        "scene_id": "halfdisc-0001",
        "rgb": "halfdisc_rgb.png",
        "depth": "halfdisc_depth.png",
        "annotations": "halfdisc_annotations.json",
        "intrinsics": {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy, "width": K.width, "height": K.height},
        "robot": "planar2r",
    }


def grid_flags() -> list[str]:
    """``workspace build`` flags reproducing :func:`grid_spec` and :func:`sampling`."""
    spec = grid_spec()
    return [
        "--strategy", "random",
        "--samples", str(SAMPLES),
        "--seed", str(SEED),
        "--resolution", repr(RESOLUTION),
        "--origin=" + ",".join(repr(v) for v in spec.origin),
        "--dims", ",".join(str(v) for v in spec.dims),
        "--dilation", str(DILATION),
    ]


def write_demo(directory) -> Path:
    """Write robot config, scene manifest and inputs; returns the manifest path."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "planar2r.json").write_text(dump_robot_model(robot()) + "\n")
    write_depth_png(out / "halfdisc_depth.png", depth_array())
    write_rgb_png(out / "halfdisc_rgb.png", rgb_array())
    (out / "halfdisc_annotations.json").write_text(json.dumps(ANNOTATIONS, indent=2) + "\n")
    manifest = out / "halfdisc.scene.json"
    manifest.write_text(json.dumps(manifest_dict(), indent=2) + "\n")
    return manifest


if __name__ == "__main__":
    import sys

    print(write_demo(sys.argv[1] if len(sys.argv) > 1 else "demo"))
