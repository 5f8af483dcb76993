"""Multi-label voxel volumes and their raw on-disk interchange format.

A label volume is stored as a flat little-endian uint16 payload in
x-fastest order (x, then y, then z) plus a JSON sidecar carrying the
geometry.  Files use the ``.lvol`` extension, the sidecar is
``<name>.lvol.json``.  Payloads may be gzip-compressed.
"""

from __future__ import annotations

import gzip
import json
import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

SIDECAR_SUFFIX = ".json"

_ALLOWED_DTYPES = {"u8": np.uint8, "u16": np.uint16}


class GridError(ValueError):
    """Malformed volume file or inconsistent grid description."""


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned multi-label volume with physical voxel geometry.

    ``labels`` is a flat uint16 array of length nx*ny*nz in x-fastest
    order: flat index = x + nx*(y + ny*z).  ``origin_mm`` is the physical
    position of the center of voxel (0, 0, 0).
    """

    dims: tuple[int, int, int]
    spacing_mm: tuple[float, float, float]
    origin_mm: tuple[float, float, float]
    labels: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nx, ny, nz = self.dims
        if min(nx, ny, nz) <= 0:
            raise GridError(f"dims must be positive, got {self.dims}")
        if min(self.spacing_mm) <= 0:
            raise GridError(f"spacing must be positive, got {self.spacing_mm}")
        if self.labels.ndim != 1:
            raise GridError("labels must be a flat 1-D array")
        if self.labels.dtype != np.uint16:
            raise GridError(f"labels must be uint16, got {self.labels.dtype}")
        if self.labels.size != nx * ny * nz:
            raise GridError(
                f"labels length {self.labels.size} != nx*ny*nz = {nx * ny * nz}"
            )
        self.labels.setflags(write=False)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing_mm
        return sx * sy * sz

    def as_array(self) -> np.ndarray:
        """View labels as a 3-D array indexed [x, y, z] (no copy)."""
        nx, ny, nz = self.dims
        return self.labels.reshape((nz, ny, nx)).T

    def slice_z(self, z: int) -> np.ndarray:
        """Z-slice as a 2-D view indexed [x, y]."""
        nx, ny, nz = self.dims
        plane = nx * ny
        return self.labels[z * plane : (z + 1) * plane].reshape((ny, nx)).T

    def with_labels(self, labels: np.ndarray, meta: dict | None = None) -> "VoxelGrid":
        return VoxelGrid(
            self.dims,
            self.spacing_mm,
            self.origin_mm,
            np.ascontiguousarray(labels, dtype=np.uint16),
            dict(self.meta if meta is None else meta),
        )


def _sidecar_path(path: str) -> str:
    return str(path) + SIDECAR_SUFFIX


def write_label_grid(grid: VoxelGrid, path: str, compress: bool = False) -> None:
    """Write payload + sidecar.  The payload is little-endian uint16,
    x-fastest; ``compress`` wraps it in a gzip stream (mtime pinned to 0
    so identical grids produce identical bytes)."""
    payload = np.asarray(grid.labels, dtype="<u2").tobytes()
    if compress:
        with open(path, "wb") as fh:
            # pin name and mtime so identical grids give identical bytes
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)
    sidecar = {
        "dims": list(grid.dims),
        "spacing_mm": list(grid.spacing_mm),
        "origin_mm": list(grid.origin_mm),
        "dtype": "u16",
    }
    if compress:
        sidecar["gzip"] = True
    with open(_sidecar_path(path), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_sidecar(path: str) -> dict:
    sc_path = _sidecar_path(path)
    if not os.path.exists(sc_path):
        raise GridError(f"missing sidecar {sc_path}")
    with open(sc_path) as fh:
        sc = json.load(fh)
    for key in ("dims", "spacing_mm", "origin_mm", "dtype"):
        if key not in sc:
            raise GridError(f"sidecar {sc_path} missing field {key!r}")
    if sc["dtype"] not in _ALLOWED_DTYPES:
        raise GridError(f"unsupported sidecar dtype {sc['dtype']!r}")
    return sc


def _read_payload(path: str, gzipped: bool) -> bytes:
    if gzipped:
        with gzip.open(path, "rb") as fh:
            return fh.read()
    with open(path, "rb") as fh:
        return fh.read()


def read_label_grid(path: str, format: str | None = None) -> VoxelGrid:
    """Read a label volume.

    ``format`` is "raw-sidecar" or "nifti1"; by default it is inferred
    from the extension (.nii/.nii.gz -> NIfTI, otherwise raw-sidecar).
    u8 payloads are widened to u16.
    """
    fmt = format or _infer_format(path)
    if fmt == "nifti1":
        from . import nifti

        return nifti.read_nifti(path)
    if fmt != "raw-sidecar":
        raise GridError(f"unknown format {fmt!r}")
    if not os.path.exists(path):
        raise GridError(f"no such file {path}")
    sc = _load_sidecar(path)
    dims = tuple(int(d) for d in sc["dims"])
    dtype = _ALLOWED_DTYPES[sc["dtype"]]
    payload = _read_payload(path, bool(sc.get("gzip", False)))
    expected = dims[0] * dims[1] * dims[2] * dtype().itemsize
    if len(payload) != expected:
        raise GridError(
            f"payload of {path} is {len(payload)} bytes, "
            f"expected {expected} for dims {dims} dtype {sc['dtype']}"
        )
    labels = np.frombuffer(payload, dtype=np.dtype(dtype).newbyteorder("<"))
    labels = labels.astype(np.uint16)
    return VoxelGrid(
        dims=dims,
        spacing_mm=tuple(float(s) for s in sc["spacing_mm"]),
        origin_mm=tuple(float(o) for o in sc["origin_mm"]),
        labels=labels,
        meta={"source": str(path), "format": "raw-sidecar"},
    )


def _infer_format(path: str) -> str:
    p = str(path)
    if p.endswith(".nii") or p.endswith(".nii.gz"):
        return "nifti1"
    return "raw-sidecar"


def iter_label_slices(path: str) -> Iterator[tuple[int, np.ndarray]]:
    """Stream z-slices of a raw-sidecar volume without loading the payload.

    Yields (z, slice) where slice is indexed [x, y].  Working memory is
    one slice regardless of volume size; gzip payloads are decompressed
    incrementally.
    """
    sc = _load_sidecar(path)
    nx, ny, nz = (int(d) for d in sc["dims"])
    dtype = _ALLOWED_DTYPES[sc["dtype"]]
    slice_bytes = nx * ny * dtype().itemsize
    opener = gzip.open if sc.get("gzip", False) else open
    with opener(path, "rb") as fh:
        for z in range(nz):
            buf = fh.read(slice_bytes)
            if len(buf) != slice_bytes:
                raise GridError(f"short read in {path} at slice {z}")
            raw = np.frombuffer(buf, dtype=np.dtype(dtype).newbyteorder("<"))
            yield z, raw.astype(np.uint16).reshape((ny, nx)).T
        if fh.read(1):
            raise GridError(f"trailing bytes in {path} beyond declared dims")


def extract_mask(grid: VoxelGrid, structure_id: int) -> VoxelGrid:
    """Binary mask (labels in {0,1}) of one structure; geometry preserved.

    An ID absent from the grid yields an all-zero mask.
    """
    if structure_id <= 0:
        raise GridError("structure_id must be positive")
    mask = (grid.labels == structure_id).astype(np.uint16)
    return grid.with_labels(mask, meta={"mask_of": int(structure_id)})
