"""Rasterize closed meshes back into label grids.

Membership is by parity of triangle crossings along +x rays, one ray
per (y, z) voxel row.  Rays that graze a vertex or edge exactly are
retried at a deterministic sub-voxel offset rather than patched with
tolerance heuristics, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import VoxelGrid
from .meshing import TriangleMesh, check_watertight

_EDGE_EPS = 1e-9
_OFFSET_FRAC = 1e-6
_MAX_RETRIES = 32


class VoxelizeError(ValueError):
    """Refusing to guess: open meshes cannot be voxelized."""


@dataclass(frozen=True)
class GridTemplate:
    """A VoxelGrid minus the labels: target geometry for rasterization."""

    dims: tuple[int, int, int]
    spacing_mm: tuple[float, float, float]
    origin_mm: tuple[float, float, float]

    def __post_init__(self):
        if min(self.dims) <= 0:
            raise ValueError(f"dims must be positive, got {self.dims}")
        if min(self.spacing_mm) <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing_mm}")

    @classmethod
    def like(cls, grid: VoxelGrid) -> "GridTemplate":
        return cls(grid.dims, grid.spacing_mm, grid.origin_mm)

    def empty_grid(self) -> VoxelGrid:
        nx, ny, nz = self.dims
        return VoxelGrid(
            self.dims,
            self.spacing_mm,
            self.origin_mm,
            np.zeros(nx * ny * nz, dtype=np.uint16),
        )


def _row_crossings(py: float, pz: float, tri: np.ndarray) -> np.ndarray | None:
    """X coordinates where the +x ray through (py, pz) crosses triangles.

    ``tri`` is (k, 3, 3).  Returns None when the ray hits a projected
    vertex/edge or a degenerate projection within tolerance (caller
    retries with an offset ray).
    """
    a = tri[:, 0, :]
    b = tri[:, 1, :]
    c = tri[:, 2, :]
    # barycentric solve in the (y, z) projection
    v0y, v0z = b[:, 1] - a[:, 1], b[:, 2] - a[:, 2]
    v1y, v1z = c[:, 1] - a[:, 1], c[:, 2] - a[:, 2]
    det = v0y * v1z - v0z * v1y
    py_, pz_ = py - a[:, 1], pz - a[:, 2]
    scale = np.maximum(
        np.abs(v0y) + np.abs(v0z) + np.abs(v1y) + np.abs(v1z), 1e-300
    )
    degenerate = np.abs(det) <= _EDGE_EPS * scale * scale
    # an edge-on triangle crosses no generic ray; it only makes the ray
    # ambiguous when the point lies on its projected segment
    if degenerate.any():
        pts = tri[degenerate][:, :, 1:]  # (d, 3, 2) projected corners
        p = np.array([py, pz])
        dmin = np.full(len(pts), np.inf)
        for i0, i1 in ((0, 1), (1, 2), (0, 2)):
            e0, e1 = pts[:, i0, :], pts[:, i1, :]
            seg = e1 - e0
            seg_len2 = np.maximum((seg**2).sum(axis=1), 1e-300)
            tt = np.clip(((p - e0) * seg).sum(axis=1) / seg_len2, 0.0, 1.0)
            closest = e0 + tt[:, None] * seg
            dmin = np.minimum(dmin, np.linalg.norm(closest - p, axis=1))
        seg_scale = np.abs(pts - pts.mean(axis=1, keepdims=True)).max(axis=(1, 2))
        if (dmin <= _EDGE_EPS * (seg_scale + 1.0)).any():
            return None
    ok = ~degenerate
    s = np.where(ok, (py_ * v1z - pz_ * v1y) / np.where(ok, det, 1.0), -1.0)
    t = np.where(ok, (v0y * pz_ - v0z * py_) / np.where(ok, det, 1.0), -1.0)
    u = 1.0 - s - t
    inside = ok & (s > _EDGE_EPS) & (t > _EDGE_EPS) & (u > _EDGE_EPS)
    # ambiguous: within tolerance of the closed triangle but not clearly
    # inside, i.e. grazing a projected vertex or edge
    near_tri = ok & (s > -_EDGE_EPS) & (t > -_EDGE_EPS) & (u > -_EDGE_EPS)
    if (near_tri & ~inside).any():
        return None
    if not inside.any():
        return np.empty(0)
    xs = (
        a[inside, 0]
        + s[inside] * (b[inside, 0] - a[inside, 0])
        + t[inside] * (c[inside, 0] - a[inside, 0])
    )
    return np.sort(xs)


def voxelize_mesh(mesh: TriangleMesh, tpl: GridTemplate) -> VoxelGrid:
    """Binary occupancy of voxel centers inside a watertight mesh."""
    if mesh.n_triangles == 0:
        return tpl.empty_grid()
    report = check_watertight(mesh)
    if not report.watertight:
        raise VoxelizeError(
            f"mesh is not watertight ({len(report.boundary_edges)} boundary, "
            f"{len(report.non_manifold_edges)} non-manifold edges)"
        )
    nx, ny, nz = tpl.dims
    sx, sy, sz = tpl.spacing_mm
    ox, oy, oz = tpl.origin_mm
    tri = mesh.vertices[mesh.triangles]  # (m, 3, 3)

    # bucket triangles by the (y, z) rows their bounding boxes cover
    ymin = tri[:, :, 1].min(axis=1)
    ymax = tri[:, :, 1].max(axis=1)
    zmin = tri[:, :, 2].min(axis=1)
    zmax = tri[:, :, 2].max(axis=1)
    j0 = np.clip(np.ceil((ymin - oy) / sy - 0.5).astype(int), 0, ny)
    j1 = np.clip(np.floor((ymax - oy) / sy + 0.5).astype(int), -1, ny - 1)
    k0 = np.clip(np.ceil((zmin - oz) / sz - 0.5).astype(int), 0, nz)
    k1 = np.clip(np.floor((zmax - oz) / sz + 0.5).astype(int), -1, nz - 1)

    buckets: dict[tuple[int, int], list[int]] = {}
    for m in range(len(tri)):
        for k in range(k0[m], k1[m] + 1):
            for j in range(j0[m], j1[m] + 1):
                buckets.setdefault((j, k), []).append(m)

    centers_x = ox + np.arange(nx) * sx
    out = np.zeros((nx, ny, nz), dtype=np.uint16)
    for (j, k), idx in sorted(buckets.items()):
        cand = tri[idx]
        base_y = oy + j * sy
        base_z = oz + k * sz
        xs = None
        for attempt in range(_MAX_RETRIES):
            # rotating offsets so consecutive retries are never collinear
            # with whatever feature the previous ray grazed
            angle = 0.7 + 2.399963 * attempt
            ry = base_y + attempt * _OFFSET_FRAC * sy * np.cos(angle)
            rz = base_z + attempt * _OFFSET_FRAC * sz * np.sin(angle)
            xs = _row_crossings(ry, rz, cand)
            if xs is not None:
                break
        if xs is None:
            raise VoxelizeError(
                f"ray ({j},{k}) kept hitting mesh vertices/edges after "
                f"{_MAX_RETRIES} offset retries"
            )
        if len(xs) == 0:
            continue
        # a center is inside when an odd number of crossings lie beyond it
        n_beyond = len(xs) - np.searchsorted(xs, centers_x, side="right")
        out[:, j, k] = (n_beyond % 2).astype(np.uint16)
    return VoxelGrid(
        tpl.dims, tpl.spacing_mm, tpl.origin_mm, out.T.reshape(-1).copy()
    )


def assemble_phantom(
    masks: list[tuple[int, VoxelGrid]], priority: list[int]
) -> VoxelGrid:
    """Merge binary structure masks into one label grid.

    Overlaps resolve to the id that appears later in ``priority`` (list
    contained/small structures after the large ones that envelop them).
    The input order never matters, only the priority list.
    """
    if not masks:
        raise ValueError("no masks to assemble")
    ids = [sid for sid, _ in masks]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate structure ids in masks")
    missing = [sid for sid in ids if sid not in priority]
    if missing:
        raise ValueError(f"ids missing from priority list: {missing}")
    tpl = GridTemplate.like(masks[0][1])
    for sid, m in masks:
        if GridTemplate.like(m) != tpl:
            raise ValueError(f"mask {sid} does not match the shared template")
    by_id = dict(masks)
    out = np.zeros(tpl.dims[0] * tpl.dims[1] * tpl.dims[2], dtype=np.uint16)
    for sid in priority:
        if sid not in by_id:
            continue
        sel = by_id[sid].labels != 0
        out[sel] = sid
    return VoxelGrid(tpl.dims, tpl.spacing_mm, tpl.origin_mm, out)
