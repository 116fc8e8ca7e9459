"""PNG and raw-depth file I/O with byte-stable encoder settings."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError
from .pointcloud import DepthImage

PNG_COMPRESS_LEVEL = 6
RAW_SIDECAR_SUFFIX = ".json"


def _save_png(img: Image.Image, path) -> None:
    # No optimize pass and no metadata chunks, so bytes depend only on pixels.
    img.save(path, format="PNG", optimize=False, compress_level=PNG_COMPRESS_LEVEL)


def write_rgb_png(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise InvalidArgumentError("expected a (H, W, 3) uint8 image")
    _save_png(Image.fromarray(rgb, "RGB"), path)


def write_gray_png(path, gray: np.ndarray) -> None:
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise InvalidArgumentError("expected a (H, W) uint8 image")
    _save_png(Image.fromarray(gray, "L"), path)


def read_rgb_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def read_gray_png(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "L":
            raise InvalidArgumentError(f"{path}: expected an 8-bit single-channel PNG, got mode {img.mode}")
        return np.asarray(img, dtype=np.uint8).copy()


def write_depth_png(path, depth_m: np.ndarray) -> None:
    """Store metres as 16-bit millimetres; invalid readings become 0."""
    d = np.asarray(depth_m, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        ok = np.isfinite(d) & (d > 0)
    mm = np.zeros(d.shape, dtype=np.uint16)
    scaled = np.rint(d[ok] * 1000.0)
    if scaled.size and scaled.max() > 65535:
        raise InvalidArgumentError("depth exceeds the 65.535 m range of 16-bit millimetres")
    mm[ok] = scaled.astype(np.uint16)
    _save_png(Image.fromarray(mm), path)


def read_depth_png(path, max_range: float | None = None) -> DepthImage:
    with Image.open(path) as img:
        if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise InvalidArgumentError(f"{path}: depth PNG must be 16-bit single channel, got mode {img.mode}")
        mm = np.asarray(img).astype(np.float64)
    kw = {} if max_range is None else {"max_range": max_range}
    return DepthImage(mm / 1000.0, **kw)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + RAW_SIDECAR_SUFFIX)


def write_depth_raw(path, depth_m: np.ndarray) -> None:
    """Little-endian float32 metres plus a ``<name>.json`` sidecar with the dims."""
    d = np.asarray(depth_m, dtype="<f4")
    if d.ndim != 2:
        raise InvalidArgumentError("expected a 2D depth array")
    Path(path).write_bytes(d.tobytes())
    meta = {"width": d.shape[1], "height": d.shape[0], "dtype": "float32", "byte_order": "little", "units": "m"}
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")


def read_raw_header(path) -> dict:
    meta = json.loads(sidecar_path(path).read_text())
    if meta.get("dtype", "float32") != "float32" or meta.get("byte_order", "little") != "little":
        raise InvalidArgumentError(f"{path}: only little-endian float32 raw depth is supported")
    if meta.get("units", "m") != "m":
        raise InvalidArgumentError(f"{path}: raw depth units must be metres")
    return meta


def read_depth_raw(path, max_range: float | None = None) -> DepthImage:
    meta = read_raw_header(path)
    w, h = int(meta["width"]), int(meta["height"])
    data = Path(path).read_bytes()
    if len(data) != 4 * w * h:
        raise InvalidArgumentError(f"{path}: expected {4 * w * h} bytes for {w}x{h}, found {len(data)}")
    d = np.frombuffer(data, dtype="<f4").reshape(h, w).astype(np.float64)
    kw = {} if max_range is None else {"max_range": max_range}
    return DepthImage(d, **kw)


def depth_size(path) -> tuple[int, int]:
    """``(width, height)`` from the file header, without decoding pixels."""
    if Path(path).suffix.lower() == ".png":
        with Image.open(path) as img:
            return img.size
    meta = read_raw_header(path)
    return int(meta["width"]), int(meta["height"])


def read_depth(path, max_range: float | None = None) -> DepthImage:
    if Path(path).suffix.lower() == ".png":
        return read_depth_png(path, max_range)
    return read_depth_raw(path, max_range)
