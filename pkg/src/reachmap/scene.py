"""Scene manifests: one JSON document per scene pointing at its image files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .imageio import depth_size, read_depth, read_rgb_png
from .kinematics import is_rigid
from .pointcloud import CameraIntrinsics, DepthImage
from .reachqa import ObjectAnnotation

_KEYS = {"scene_id", "rgb", "depth", "annotations", "intrinsics", "robot", "extrinsics"}
_REQUIRED = {"scene_id", "rgb", "depth", "intrinsics", "robot"}
_INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


@dataclass(frozen=True)
class SceneManifest:
    scene_id: str
    rgb_path: Path
    depth_path: Path
    annotations_path: Path | None
    intrinsics: CameraIntrinsics
    robot: str
    extrinsics: np.ndarray | None = None

    def load_depth(self) -> DepthImage:
        return read_depth(self.depth_path)

    def load_rgb(self) -> np.ndarray:
        return read_rgb_png(self.rgb_path)

    def load_annotations(self) -> list[ObjectAnnotation]:
        if self.annotations_path is None:
            return []
        return load_annotations(self.annotations_path)


def load_manifest(path) -> SceneManifest:
    """Parse and check a manifest.  Relative paths resolve against its folder.

    Raises ``OSError`` for missing files and :class:`ValidationError` for
    malformed content or intrinsics that disagree with the depth header.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ValidationError(str(path), "manifest must be a JSON object")
    unknown = set(doc) - _KEYS
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown manifest field")
    missing = _REQUIRED - set(doc)
    if missing:
        raise ValidationError(sorted(missing)[0], "missing manifest field")

    base = path.parent
    rgb = base / doc["rgb"]
    depth = base / doc["depth"]
    ann = base / doc["annotations"] if doc.get("annotations") else None
    for p in (rgb, depth, ann):
        if p is not None and not p.is_file():
            raise FileNotFoundError(f"scene {doc['scene_id']}: referenced file not found: {p}")

    intr = doc["intrinsics"]
    if not isinstance(intr, dict) or set(intr) != set(_INTRINSIC_KEYS):
        raise ValidationError("intrinsics", f"must have exactly the keys {', '.join(_INTRINSIC_KEYS)}")
    K = CameraIntrinsics(
        float(intr["fx"]), float(intr["fy"]), float(intr["cx"]), float(intr["cy"]),
        int(intr["width"]), int(intr["height"]),
    )
    w, h = depth_size(depth)
    if (w, h) != (K.width, K.height):
        raise ValidationError("intrinsics", f"declare {K.width}x{K.height} but depth image is {w}x{h}")

    E = None
    if doc.get("extrinsics") is not None:
        vals = doc["extrinsics"]
        if not isinstance(vals, list) or len(vals) != 16:
            raise ValidationError("extrinsics", "must be 16 numbers, row-major camera-to-base")
        E = np.array(vals, dtype=float).reshape(4, 4)
        if not is_rigid(E):
            raise ValidationError("extrinsics", "camera-to-base transform is not rigid")
    return SceneManifest(str(doc["scene_id"]), rgb, depth, ann, K, str(doc["robot"]), E)


def load_annotations(path) -> list[ObjectAnnotation]:
    """Read ``[{"label", "bbox": [x, y, w, h], "mask"?: [[0/1, ...], ...]}, ...]``."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ValidationError(str(path), "annotations must be a JSON list")
    out = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict) or not {"label", "bbox"} <= set(item) or set(item) - {"label", "bbox", "mask"}:
            raise ValidationError(f"annotations[{i}]", "expected keys label, bbox and optional mask")
        mask = np.array(item["mask"], dtype=bool) if item.get("mask") is not None else None
        try:
            out.append(ObjectAnnotation(item["label"], tuple(item["bbox"]), mask))
        except ValueError as exc:
            raise ValidationError(f"annotations[{i}]", str(exc)) from None
    return out


def find_manifests(paths) -> list[Path]:
    """Expand directories to the ``*.scene.json`` manifests they contain."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(q for q in p.glob("*.scene.json") if q.is_file()))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"manifest not found: {p}")
    return out
