"""Triangle meshes from binary masks: extraction, smoothing, measurement.

marching_cubes treats voxel values as samples at voxel centers and
interpolates crossings along grid edges (midpoints for binary masks at
the default iso 0.5).  Masks are zero-padded by one voxel first, so
surfaces stay closed even when the foreground touches the volume border
(common in truncated scans).

laplacian_smooth is the row-normalized sparse-adjacency iteration:
every vertex moves simultaneously toward the mean of its neighbors,
weighted by lambda.  Topology never changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .grid import VoxelGrid
from .mc_table import EDGE_AXIS, EDGE_BASE, POLY_TABLE, TRI_TABLE


class MeshError(ValueError):
    """Invalid mesh or parameters."""


@dataclass
class TriangleMesh:
    """Vertices in mm and CCW-from-outside triangles (vertex index triples)."""

    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int64

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise MeshError("triangle index out of range")
            t = self.triangles
            if ((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])).any():
                raise MeshError("degenerate triangle (repeated vertex index)")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.triangles.copy())


@dataclass
class AdjacencyMatrix:
    """Sparse symmetric vertex connectivity with per-row degrees."""

    matrix: sparse.csr_matrix
    degrees: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degrees is None:
            self.degrees = np.asarray(self.matrix.sum(axis=1)).ravel()


@dataclass
class WatertightReport:
    watertight: bool
    boundary_edges: list[tuple[int, int]]
    non_manifold_edges: list[tuple[int, int]]


def empty_mesh() -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def marching_cubes(mask: VoxelGrid, iso: float = 0.5, pad: bool = True) -> TriangleMesh:
    """Extract the iso-surface of a (binary) mask as a watertight mesh.

    Vertices land on grid edges between voxel centers, positioned by
    linear interpolation, in physical mm.  An empty mask gives an empty
    mesh.
    """
    field3 = mask.as_array().astype(np.float32)
    if pad:
        field3 = np.pad(field3, 1)
    inside = field3 > iso
    if not inside.any():
        return empty_mesh()
    if not pad and (
        inside[0].any()
        or inside[-1].any()
        or inside[:, 0].any()
        or inside[:, -1].any()
        or inside[:, :, 0].any()
        or inside[:, :, -1].any()
    ):
        raise MeshError("foreground touches the volume border; use pad=True")

    nx, ny, nz = inside.shape
    cases = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint16)
    for b in range(8):
        dx, dy, dz = (b >> 0) & 1, (b >> 1) & 1, (b >> 2) & 1
        cases |= (
            inside[dx : nx - 1 + dx, dy : ny - 1 + dy, dz : nz - 1 + dz].astype(
                np.uint16
            )
            << b
        )

    def edge_keys(cube_locs: np.ndarray, local_edges: np.ndarray) -> np.ndarray:
        """Global grid-edge keys for local edge ids at given cube bases."""
        ax = EDGE_AXIS[local_edges]
        base = EDGE_BASE[local_edges]
        cell = cube_locs.reshape((-1,) + (1,) * local_edges.ndim + (3,)) + base
        return ((cell[..., 2] * ny + cell[..., 1]) * nx + cell[..., 0]) * 3 + ax

    tri_key_chunks = []  # (for 3-loops) arrays of (*, 3) edge keys
    poly_groups = []  # (loop_keys (m, L),) per case/loop for centroid fans
    for case_val in np.unique(cases):
        tris = TRI_TABLE[case_val]
        polys = POLY_TABLE[case_val]
        if not len(tris) and not polys:
            continue
        locs = np.argwhere(cases == case_val)  # (m, 3) cube base indices
        if len(tris):
            tri_key_chunks.append(edge_keys(locs, tris).reshape(-1, 3))
        for loop in polys:
            poly_groups.append(edge_keys(locs, loop))

    all_keys = [c.ravel() for c in tri_key_chunks] + [g.ravel() for g in poly_groups]
    uniq = np.unique(np.concatenate(all_keys))

    axis = uniq % 3
    lin = uniq // 3
    i = lin % nx
    j = (lin // nx) % ny
    k = lin // (nx * ny)
    p0 = np.stack([i, j, k], axis=1).astype(np.float64)
    v0 = field3[i, j, k]
    step = np.eye(3, dtype=np.int64)[axis]
    v1 = field3[i + step[:, 0], j + step[:, 1], k + step[:, 2]]
    t = (iso - v0) / (v1 - v0)
    pos_idx = p0 + t[:, None] * step
    crossing_vertices = pos_idx

    tri_chunks = []
    vertex_chunks = [crossing_vertices]
    next_vertex = len(uniq)
    for chunk in tri_key_chunks:
        tri_chunks.append(np.searchsorted(uniq, chunk))
    for loop_keys in poly_groups:
        idx = np.searchsorted(uniq, loop_keys)  # (m, L) crossing vertex ids
        m, length = idx.shape
        centroids = crossing_vertices[idx].mean(axis=1)  # (m, 3)
        centroid_ids = np.arange(next_vertex, next_vertex + m)
        next_vertex += m
        vertex_chunks.append(centroids)
        fan = np.empty((m, length, 3), dtype=np.int64)
        fan[:, :, 0] = centroid_ids[:, None]
        fan[:, :, 1] = idx
        fan[:, :, 2] = np.roll(idx, -1, axis=1)
        tri_chunks.append(fan.reshape(-1, 3))

    triangles = np.concatenate(tri_chunks, axis=0)
    pos_all = np.concatenate(vertex_chunks, axis=0)
    if pad:
        pos_all = pos_all - 1.0
    spacing = np.array(mask.spacing_mm)
    origin = np.array(mask.origin_mm)
    vertices = origin + pos_all * spacing
    return TriangleMesh(vertices, triangles)


def mesh_edges(mesh: TriangleMesh) -> np.ndarray:
    """Directed edges (3 per triangle), shape (3m, 2)."""
    t = mesh.triangles
    return np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=0)


def build_adjacency(mesh: TriangleMesh) -> AdjacencyMatrix:
    """Vertex-vertex connectivity from deduplicated triangle edges,
    uniform weight 1, with row sums precomputed."""
    n = mesh.n_vertices
    if mesh.n_triangles == 0:
        return AdjacencyMatrix(sparse.csr_matrix((n, n)))
    e = mesh_edges(mesh)
    und = np.sort(e, axis=1)
    und = np.unique(und, axis=0)
    rows = np.concatenate([und[:, 0], und[:, 1]])
    cols = np.concatenate([und[:, 1], und[:, 0]])
    data = np.ones(len(rows))
    adj = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    return AdjacencyMatrix(adj)


def laplacian_smooth(
    mesh: TriangleMesh, lam: float, iterations: int
) -> TriangleMesh:
    """Iteratively move each vertex toward its neighbor mean:
    v <- v + lambda * (mean(neighbors) - v), all vertices simultaneously.

    lambda=0 or zero iterations returns bit-identical vertex positions;
    connectivity is untouched either way.
    """
    if not 0.0 <= lam <= 1.0:
        raise MeshError(f"smoothing weight must be in [0, 1], got {lam}")
    if iterations < 0:
        raise MeshError("iterations must be >= 0")
    out = mesh.copy()
    if mesh.n_triangles == 0 or iterations == 0:
        return out
    adj = build_adjacency(mesh)
    deg = adj.degrees.copy()
    isolated = deg == 0
    deg[isolated] = 1.0
    v = out.vertices
    for _ in range(iterations):
        neighbor_mean = adj.matrix.dot(v) / deg[:, None]
        delta = neighbor_mean - v
        delta[isolated] = 0.0
        v = v + lam * delta
    out.vertices = v
    return out


def mesh_volume(mesh: TriangleMesh) -> float:
    """Signed enclosed volume via the divergence theorem:
    sum of det(v0, v1, v2) / 6, positive for outward orientation."""
    if mesh.n_triangles == 0:
        return 0.0
    v = mesh.vertices
    t = mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    return float(det.sum() / 6.0)


def mesh_surface_area(mesh: TriangleMesh) -> float:
    if mesh.n_triangles == 0:
        return 0.0
    v = mesh.vertices
    t = mesh.triangles
    cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return float(0.5 * np.linalg.norm(cross, axis=1).sum())


def check_watertight(mesh: TriangleMesh) -> WatertightReport:
    """Closed 2-manifold test: every undirected edge must be shared by
    exactly two triangles traversing it in opposite directions."""
    if mesh.n_triangles == 0:
        return WatertightReport(True, [], [])
    e = mesh_edges(mesh)
    und = np.sort(e, axis=1)
    pairs, counts = np.unique(und, axis=0, return_counts=True)
    boundary = [tuple(p) for p in pairs[counts == 1]]
    non_manifold = [tuple(p) for p in pairs[counts > 2]]
    watertight = not boundary and not non_manifold
    if watertight:
        # opposite traversal: directed edges must be unique
        _, dir_counts = np.unique(e, axis=0, return_counts=True)
        if (dir_counts > 1).any():
            dup = np.unique(e, axis=0)[dir_counts > 1]
            non_manifold = [tuple(np.sort(p)) for p in dup]
            watertight = False
    return WatertightReport(watertight, boundary, non_manifold)


def euler_characteristic(mesh: TriangleMesh) -> int:
    und = np.unique(np.sort(mesh_edges(mesh), axis=1), axis=0)
    return mesh.n_vertices - len(und) + mesh.n_triangles
