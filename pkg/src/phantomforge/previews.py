"""Deterministic 2-D preview renders for reviewer screening.

Each scan gets three orthogonal maximum-label projections saved as PNG;
label colors come from a golden-ratio hue walk so the same structure is
the same color in every catalog, with no plotting stack involved.
"""

from __future__ import annotations

import colorsys

import numpy as np
from PIL import Image

from .grid import VoxelGrid

AXES = ("x", "y", "z")


def label_color(structure_id: int) -> tuple[int, int, int]:
    if structure_id == 0:
        return (0, 0, 0)
    hue = (structure_id * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
    return (int(r * 255), int(g * 255), int(b * 255))


def _colorize(proj: np.ndarray) -> np.ndarray:
    ids = np.unique(proj)
    lut = np.zeros((int(ids.max()) + 1, 3), dtype=np.uint8)
    for sid in ids:
        lut[int(sid)] = label_color(int(sid))
    return lut[proj]


def max_label_projection(grid: VoxelGrid, axis: str) -> np.ndarray:
    arr = grid.as_array()
    idx = AXES.index(axis)
    return np.asarray(arr.max(axis=idx))


def render_preview(grid: VoxelGrid, axis: str, scale: int = 2) -> Image.Image:
    proj = max_label_projection(grid, axis)
    rgb = _colorize(proj)
    img = Image.fromarray(np.transpose(rgb, (1, 0, 2)), mode="RGB")
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    return img


def write_previews(grid: VoxelGrid, directory) -> dict[str, str]:
    """Write x/y/z projections as PNGs; returns axis -> file path."""
    paths = {}
    for axis in AXES:
        path = str(directory / f"{axis}.png")
        render_preview(grid, axis).save(path, format="PNG")
        paths[axis] = path
    return paths
