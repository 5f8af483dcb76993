"""Mesh writers (binary PLY, OBJ, binary STL) and a PLY reader.

PLY is the catalog's canonical mesh format: binary little-endian 1.0,
float32 positions, int32 index lists.  The reader accepts exactly what
the writer produces (plus comments), enough for round-trips and for
serving meshes to the viewer.
"""

from __future__ import annotations

import struct

import numpy as np

from .meshing import MeshError, TriangleMesh

PLY_HEADER = """ply
format binary_little_endian 1.0
comment phantomforge surface
element vertex {nv}
property float x
property float y
property float z
element face {nf}
property list uchar int vertex_indices
end_header
"""


def ply_bytes(mesh: TriangleMesh) -> bytes:
    header = PLY_HEADER.format(nv=mesh.n_vertices, nf=mesh.n_triangles).encode("ascii")
    verts = np.asarray(mesh.vertices, dtype="<f4").tobytes()
    faces = np.empty((mesh.n_triangles, 13), dtype=np.uint8)
    counts = np.full((mesh.n_triangles, 1), 3, dtype=np.uint8)
    idx = np.asarray(mesh.triangles, dtype="<i4").view(np.uint8).reshape(-1, 12)
    faces[:, :1] = counts
    faces[:, 1:] = idx
    return header + verts + faces.tobytes()


def write_ply(mesh: TriangleMesh, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(ply_bytes(mesh))


def read_ply(path_or_bytes) -> TriangleMesh:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            blob = fh.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise MeshError("not a PLY file")
    header = blob[:end].decode("ascii", "replace").splitlines()
    if not any("binary_little_endian" in line for line in header):
        raise MeshError("only binary little-endian PLY is supported")
    nv = nf = None
    for line in header:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            nv = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            nf = int(parts[2])
    if nv is None or nf is None:
        raise MeshError("PLY header missing vertex/face elements")
    body = blob[end + len(b"end_header\n") :]
    vbytes = nv * 12
    vertices = np.frombuffer(body[:vbytes], dtype="<f4").reshape(nv, 3)
    faces = np.frombuffer(body[vbytes : vbytes + nf * 13], dtype=np.uint8)
    if faces.size != nf * 13:
        raise MeshError("truncated PLY face data")
    faces = faces.reshape(nf, 13)
    if nf and not (faces[:, 0] == 3).all():
        raise MeshError("non-triangular face in PLY")
    tris = faces[:, 1:].copy().view("<i4").reshape(nf, 3)
    return TriangleMesh(vertices.astype(np.float64), tris.astype(np.int64))


def write_obj(mesh: TriangleMesh, path: str) -> None:
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.triangles + 1:  # OBJ indices are 1-based
            fh.write(f"f {a} {b} {c}\n")


def write_stl(mesh: TriangleMesh, path: str) -> None:
    """Binary STL: 80-byte header, uint32 count, then 50 bytes per facet
    (normal, three vertices, attribute count)."""
    v = mesh.vertices
    t = mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    n = n / norm
    with open(path, "wb") as fh:
        fh.write(b"phantomforge binary stl".ljust(80, b"\x00"))
        fh.write(struct.pack("<I", mesh.n_triangles))
        rec = np.empty((mesh.n_triangles, 50), dtype=np.uint8)
        packed = np.concatenate([n, a, b, c], axis=1).astype("<f4")
        rec[:, :48] = packed.view(np.uint8).reshape(-1, 48)
        rec[:, 48:] = 0
        fh.write(rec.tobytes())


_WRITERS = {
    "ply-binary": write_ply,
    "obj": write_obj,
    "stl-binary": write_stl,
}

_EXTENSIONS = {".ply": "ply-binary", ".obj": "obj", ".stl": "stl-binary"}


def export_mesh(mesh: TriangleMesh, path: str, format: str | None = None) -> None:
    """Write a mesh; format from the extension unless given explicitly."""
    fmt = format
    if fmt is None:
        for ext, name in _EXTENSIONS.items():
            if str(path).endswith(ext):
                fmt = name
                break
    if fmt not in _WRITERS:
        raise MeshError(f"unknown mesh format {fmt!r} for {path}")
    _WRITERS[fmt](mesh, path)
