"""File I/O: images, depth maps (PFM / scaled 16-bit PNG), intrinsics JSON."""

from __future__ import annotations

import json
import re

import numpy as np
from PIL import Image

from .camera import DepthMap, Intrinsics
from .errors import InvalidDepthError


def read_pfm(path) -> np.ndarray:
    """Read a grayscale portable float map ('Pf') as a float32 array.

    PFM stores rows bottom-up; a negative scale header means little-endian.
    """
    with open(path, "rb") as fh:
        header = fh.readline().rstrip()
        if header != b"Pf":
            raise InvalidDepthError(f"{path}: not a grayscale PFM file")
        dims = fh.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise InvalidDepthError(f"{path}: malformed PFM dimension line")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(fh.readline().strip())
        endian = "<" if scale < 0 else ">"
        data = np.frombuffer(fh.read(width * height * 4), dtype=endian + "f4")
        if data.size != width * height:
            raise InvalidDepthError(f"{path}: truncated PFM payload")
    arr = data.reshape(height, width)[::-1].astype(np.float32)
    if abs(scale) not in (0.0, 1.0):
        arr = arr * abs(scale)
    return np.ascontiguousarray(arr)


def write_pfm(path, array) -> None:
    """Write a 2-D float array as a little-endian grayscale PFM."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(arr[::-1].astype("<f4").tobytes())


def write_depth_png(path, array, scale: float) -> None:
    """Write depth as 16-bit grayscale PNG with raw = meters * scale."""
    arr = np.asarray(array, dtype=np.float64)
    raw = np.clip(np.round(arr * scale), 0, 65535)
    raw[~np.isfinite(arr)] = 0
    Image.fromarray(raw.astype(np.uint16)).save(path)


def read_depth(path, scale: float = None) -> DepthMap:
    """Load a depth map; PFM directly, 16-bit PNG via meters = raw / scale."""
    path = str(path)
    if path.lower().endswith(".pfm"):
        return DepthMap.from_array(read_pfm(path))
    img = Image.open(path)
    raw = np.asarray(img, dtype=np.float64)
    if raw.ndim != 2:
        raise InvalidDepthError(f"{path}: depth PNG must be single-channel")
    if scale is None or scale <= 0:
        raise InvalidDepthError(f"{path}: PNG depth requires a positive scale")
    return DepthMap.from_array(raw / scale)


def read_image(path) -> np.ndarray:
    """Load an image as grayscale float64 in [0, 1]."""
    img = Image.open(path).convert("L")
    return np.asarray(img, dtype=np.float64) / 255.0


def write_image(path, array) -> None:
    """Write a float image in [0, 1] as 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(array, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path)


def write_mask(path, mask) -> None:
    """Write a boolean mask as a 0/255 grayscale PNG."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def read_intrinsics(path) -> Intrinsics:
    with open(path, "r", encoding="utf-8") as fh:
        return Intrinsics.from_dict(json.load(fh))


def write_intrinsics(path, K: Intrinsics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(K.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
