"""Rasterisation of cable states and the image operations used on them.

Images are ``(height, width)`` float arrays with values in ``[0, 1]``; row 0
is the top of the table (largest y).
"""
from __future__ import annotations

import os
import re

import numpy as np
from scipy import ndimage

from .sim import CableState, Workspace

DEFAULT_DIMS = (64, 42)  # (width, height)


class EmptyForegroundError(ValueError):
    pass


class PGMError(ValueError):
    pass


def check_dims(ws: Workspace, dims) -> tuple[int, int]:
    """Validate raster dimensions against the workspace aspect ratio."""
    width, height = int(dims[0]), int(dims[1])
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    expected = width * ws.height_mm / ws.width_mm
    if abs(expected - height) > 1.0:
        raise ValueError(f"{width}x{height} does not match workspace aspect ratio")
    return width, height


def world_to_pixel(points_mm, ws: Workspace, dims) -> np.ndarray:
    """Map world points to integer (col, row) pixel indices; may fall outside."""
    width, height = int(dims[0]), int(dims[1])
    p = np.asarray(points_mm, dtype=float).reshape(-1, 2)
    col = np.floor((p[:, 0] + ws.width_mm / 2) / ws.width_mm * width)
    row = np.floor((ws.height_mm / 2 - p[:, 1]) / ws.height_mm * height)
    # The closed far edges belong to the last pixel.
    col = np.where(p[:, 0] == ws.width_mm / 2, width - 1, col)
    row = np.where(p[:, 1] == -ws.height_mm / 2, height - 1, row)
    return np.stack([col, row], axis=1).astype(np.int64)


def bresenham(c0: int, r0: int, c1: int, r1: int) -> list[tuple[int, int]]:
    """Integer pixels on the segment between two pixel centres, endpoints included."""
    pts = []
    dc, dr = abs(c1 - c0), -abs(r1 - r0)
    sc = 1 if c0 < c1 else -1
    sr = 1 if r0 < r1 else -1
    err = dc + dr
    c, r = c0, r0
    while True:
        pts.append((c, r))
        if c == c1 and r == r1:
            return pts
        e2 = 2 * err
        if e2 >= dr:
            err += dr
            c += sc
        if e2 <= dc:
            err += dc
            r += sr


def render(state: CableState, ws: Workspace, dims=DEFAULT_DIMS) -> np.ndarray:
    """1-px polyline through the cable nodes; pixels off the raster are dropped."""
    width, height = int(dims[0]), int(dims[1])
    img = np.zeros((height, width))
    pix = world_to_pixel(state.node_positions_mm, ws, dims)
    for (c0, r0), (c1, r1) in zip(pix[:-1], pix[1:]):
        for c, r in bresenham(int(c0), int(r0), int(c1), int(r1)):
            if 0 <= c < width and 0 <= r < height:
                img[r, c] = 1.0
    return img


def dilate(img: np.ndarray, kernel=(3, 3), iterations: int = 1) -> np.ndarray:
    """Binary dilation with a full rectangular structuring element."""
    if iterations < 1:
        return (np.asarray(img) >= 0.5).astype(float)
    fg = np.asarray(img) >= 0.5
    out = ndimage.binary_dilation(fg, structure=np.ones(kernel, dtype=bool), iterations=iterations)
    return out.astype(float)


def distance_transform(img: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (pixels) from every pixel to the nearest foreground pixel."""
    fg = np.asarray(img) >= 0.5
    if not fg.any():
        raise EmptyForegroundError("distance transform of an image with no foreground")
    return ndimage.distance_transform_edt(~fg)


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    a = np.asarray(img, dtype=float)
    if a.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if a.min(initial=0.0) < 0.0 or a.max(initial=0.0) > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    data = np.round(a * 255).astype(np.uint8)
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def read_pgm(path: str | os.PathLike, dims=None) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    m = _HEADER.match(raw)
    if m is None:
        raise PGMError(f"{path}: not a binary (P5) PGM file")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PGMError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    payload = raw[m.end():]
    if len(payload) < width * height:
        raise PGMError(f"{path}: truncated payload ({len(payload)} < {width * height} bytes)")
    if dims is not None and (width, height) != (int(dims[0]), int(dims[1])):
        raise PGMError(f"{path}: image is {width}x{height}, expected {dims[0]}x{dims[1]}")
    data = np.frombuffer(payload[: width * height], dtype=np.uint8).reshape(height, width)
    return data.astype(float) / 255.0
