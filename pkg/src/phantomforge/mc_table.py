"""Generated 256-case marching-cubes table.

Instead of transcribing a classic table (whose fixed per-case choices
are inconsistent on ambiguous faces and crack), each cube case is built
by running marching squares on the six faces with one global rule --
foreground face-diagonals stay connected -- and stitching the oriented
face segments into directed loops.  Neighboring cubes see the shared
face from opposite sides and therefore produce the same contour with
opposite directions, which makes every mesh closed and consistently
oriented by construction.

Triangle loops become single triangles; longer loops are fanned from an
interior centroid vertex at extraction time.  Fanning from a loop vertex
would create chord edges lying in cube faces, and chords of neighboring
cubes can coincide, breaking the two-triangles-per-edge property; a
centroid is strictly interior to its cube, so its edges never collide.

Conventions: corner bit b = dx + 2*dy + 4*dz; edges are indexed by the
(axis, base-corner) pairs in EDGE_BASE/EDGE_AXIS; triangles are listed
counter-clockwise viewed from outside the surface.
"""

from __future__ import annotations

import numpy as np

CORNER_OFFSETS = np.array(
    [[(b >> 0) & 1, (b >> 1) & 1, (b >> 2) & 1] for b in range(8)], dtype=np.int64
)

# 12 cube edges: from corner ``a`` one step along ``axis``
_EDGES: list[tuple[int, int, int]] = []  # (corner_a, corner_b, axis)
for _b in range(8):
    for _axis in range(3):
        if not (_b >> _axis) & 1:
            _EDGES.append((_b, _b | (1 << _axis), _axis))

EDGE_COUNT = len(_EDGES)  # 12
EDGE_AXIS = np.array([e[2] for e in _EDGES], dtype=np.int64)
EDGE_BASE = CORNER_OFFSETS[[e[0] for e in _EDGES]]  # (12, 3) lower corner offset
_EDGE_CORNERS = [(e[0], e[1]) for e in _EDGES]


def _edge_midpoint(edge: int) -> np.ndarray:
    a, b = _EDGE_CORNERS[edge]
    return (CORNER_OFFSETS[a] + CORNER_OFFSETS[b]) / 2.0


class _Face:
    def __init__(self, axis: int, side: int):
        self.axis = axis
        self.side = side
        self.corners = [c for c in range(8) if ((c >> axis) & 1) == side]
        self.edges = [
            i
            for i, (a, b, _) in enumerate(_EDGES)
            if a in self.corners and b in self.corners
        ]
        normal = np.zeros(3)
        normal[axis] = 1.0 if side == 1 else -1.0
        self.normal = normal


_FACES = [_Face(axis, side) for axis in range(3) for side in (0, 1)]


def _edges_at_corner(face: _Face, corner: int) -> list[int]:
    return [e for e in face.edges if corner in _EDGE_CORNERS[e]]


def _orient(edge_a: int, edge_b: int, fg_point: np.ndarray, face: _Face):
    """Direct the segment so the foreground lies on its right when the
    face is viewed from outside the cube; chaining these gives loops
    whose triangles are CCW seen from outside the surface."""
    p = _edge_midpoint(edge_a)
    q = _edge_midpoint(edge_b)
    triple = float(np.dot(np.cross(q - p, fg_point - p), face.normal))
    return (edge_b, edge_a) if triple > 0 else (edge_a, edge_b)


def _face_segments(face: _Face, inside: list[int]) -> list[tuple[int, int]]:
    ins = [c for c in face.corners if inside[c]]
    outs = [c for c in face.corners if not inside[c]]
    if not ins or not outs:
        return []
    if len(ins) == 1:
        c = ins[0]
        e1, e2 = _edges_at_corner(face, c)
        return [_orient(e1, e2, CORNER_OFFSETS[c].astype(float), face)]
    if len(outs) == 1:
        c = outs[0]
        e1, e2 = _edges_at_corner(face, c)
        fg = CORNER_OFFSETS[ins].mean(axis=0)
        return [_orient(e1, e2, fg, face)]
    # two inside corners: adjacent -> one band segment, diagonal -> two
    # segments cutting off the background corners (foreground stays joined)
    a, b = ins
    if bin(a ^ b).count("1") == 1:
        crossing = [
            e
            for e in face.edges
            if inside[_EDGE_CORNERS[e][0]] != inside[_EDGE_CORNERS[e][1]]
        ]
        fg = (CORNER_OFFSETS[a] + CORNER_OFFSETS[b]) / 2.0
        return [_orient(crossing[0], crossing[1], fg, face)]
    center = CORNER_OFFSETS[face.corners].mean(axis=0).astype(float)
    segments = []
    for c in outs:
        e1, e2 = _edges_at_corner(face, c)
        segments.append(_orient(e1, e2, center, face))
    return segments


def _loops_from_segments(segments: list[tuple[int, int]]) -> list[list[int]]:
    succ: dict[int, int] = {}
    for frm, to in segments:
        if frm in succ:
            raise AssertionError("vertex with two outgoing segments")
        succ[frm] = to
    loops = []
    seen: set[int] = set()
    for start in sorted(succ):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = succ[cur]
        loops.append(loop)
    return loops


def _build_case(case: int) -> tuple[list[tuple[int, int, int]], list[list[int]]]:
    inside = [(case >> b) & 1 for b in range(8)]
    segments: list[tuple[int, int]] = []
    for face in _FACES:
        segments.extend(_face_segments(face, inside))
    if not segments:
        return [], []
    triangles: list[tuple[int, int, int]] = []
    polygons: list[list[int]] = []
    for loop in _loops_from_segments(segments):
        if len(loop) < 3:
            raise AssertionError(f"case {case}: loop of length {len(loop)}")
        if len(loop) == 3:
            triangles.append(tuple(loop))
        else:
            polygons.append(loop)
    return triangles, polygons


def _build_tables():
    tri_table = []
    poly_table = []
    for case in range(256):
        tris, polys = _build_case(case)
        tri_table.append(np.array(tris, dtype=np.int64).reshape(-1, 3))
        poly_table.append([np.array(p, dtype=np.int64) for p in polys])
    return tri_table, poly_table


TRI_TABLE, POLY_TABLE = _build_tables()
