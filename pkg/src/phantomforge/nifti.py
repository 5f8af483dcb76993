"""Minimal NIfTI-1 reader for label maps (read-only convenience path).

Single-file .nii / .nii.gz with magic "n+1\\0" only.  Accepted voxel
datatypes: uint8 (2), int16 (4), uint16 (512).  Spacing comes from
pixdim[1..3]; the affine (sform preferred, then qform, else pixdim
scaling) must be axis-aligned up to sign or the file is rejected --
silent reorientation would corrupt laterality.
"""

from __future__ import annotations

import gzip
import struct

import numpy as np

from .grid import GridError, VoxelGrid

HEADER_SIZE = 348

_DT_UINT8 = 2
_DT_INT16 = 4
_DT_UINT16 = 512

_DTYPES = {_DT_UINT8: np.uint8, _DT_INT16: np.int16, _DT_UINT16: np.uint16}


def _open(path: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _unpack(endian: str, header: bytes) -> dict:
    dim = struct.unpack_from(endian + "8h", header, 40)
    datatype, bitpix = struct.unpack_from(endian + "2h", header, 70)
    pixdim = struct.unpack_from(endian + "8f", header, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", header, 108)
    qform_code, sform_code = struct.unpack_from(endian + "2h", header, 252)
    quatern = struct.unpack_from(endian + "6f", header, 256)
    srow_x = struct.unpack_from(endian + "4f", header, 280)
    srow_y = struct.unpack_from(endian + "4f", header, 296)
    srow_z = struct.unpack_from(endian + "4f", header, 312)
    magic = header[344:348]
    return {
        "dim": dim,
        "datatype": datatype,
        "bitpix": bitpix,
        "pixdim": pixdim,
        "vox_offset": vox_offset,
        "qform_code": qform_code,
        "sform_code": sform_code,
        "quatern": quatern,
        "srow": (srow_x, srow_y, srow_z),
        "magic": magic,
    }


def _parse_header(header: bytes) -> tuple[dict, str]:
    if len(header) < HEADER_SIZE:
        raise GridError("truncated NIfTI header")
    for endian in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(endian + "i", header, 0)
        if sizeof_hdr == HEADER_SIZE:
            hdr = _unpack(endian, header)
            if hdr["magic"] not in (b"n+1\x00",):
                raise GridError(
                    f"unsupported NIfTI magic {hdr['magic']!r} (single-file n+1 only)"
                )
            return hdr, endian
    raise GridError("not a NIfTI-1 file (sizeof_hdr != 348 in either byte order)")


def _quaternion_rotation(quatern: tuple, pixdim0: float) -> np.ndarray:
    b, c, d = quatern[0], quatern[1], quatern[2]
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a2, 0.0))
    qfac = -1.0 if pixdim0 == -1.0 else 1.0
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    rot[:, 2] *= qfac
    return rot


def _affine_from_header(hdr: dict) -> np.ndarray:
    pixdim = hdr["pixdim"]
    if hdr["sform_code"] > 0:
        aff = np.eye(4)
        aff[0, :] = hdr["srow"][0]
        aff[1, :] = hdr["srow"][1]
        aff[2, :] = hdr["srow"][2]
        return aff
    if hdr["qform_code"] > 0:
        rot = _quaternion_rotation(hdr["quatern"], pixdim[0])
        aff = np.eye(4)
        aff[:3, :3] = rot * np.array(pixdim[1:4])
        aff[:3, 3] = hdr["quatern"][3:6]
        return aff
    aff = np.diag([pixdim[1], pixdim[2], pixdim[3], 1.0])
    return aff


def _check_axis_aligned(aff: np.ndarray) -> None:
    rot = aff[:3, :3]
    scale = max(np.abs(rot).max(), 1e-12)
    tol = 1e-4 * scale
    for axis in range(3):
        col = np.abs(rot[:, axis])
        big = col > tol
        if big.sum() != 1:
            raise GridError(
                "NIfTI affine is not axis-aligned up to sign; this reader refuses "
                "to resample or reorient (laterality would be at risk). "
                f"Affine 3x3 block:\n{rot}"
            )


def read_nifti(path: str) -> VoxelGrid:
    """Read a 3-D label volume from a NIfTI-1 file."""
    with _open(path) as fh:
        header = fh.read(HEADER_SIZE)
        hdr, endian = _parse_header(header)
        dim = hdr["dim"]
        ndim = dim[0]
        if ndim < 3 or any(d > 1 for d in dim[4 : 1 + max(3, ndim)]):
            raise GridError(f"expected a 3-D volume, got dim={dim}")
        nx, ny, nz = int(dim[1]), int(dim[2]), int(dim[3])
        if hdr["datatype"] not in _DTYPES:
            raise GridError(
                f"unsupported NIfTI datatype {hdr['datatype']} "
                "(accepted: uint8=2, int16=4, uint16=512)"
            )
        dtype = np.dtype(_DTYPES[hdr["datatype"]]).newbyteorder(endian)
        aff = _affine_from_header(hdr)
        _check_axis_aligned(aff)
        n_bytes = nx * ny * nz * dtype.itemsize
        skip = int(hdr["vox_offset"]) - HEADER_SIZE
        if skip < 0:
            raise GridError(f"bad vox_offset {hdr['vox_offset']}")
        if skip:
            fh.read(skip)
        payload = fh.read(n_bytes)
    if len(payload) != n_bytes:
        raise GridError(
            f"NIfTI payload is {len(payload)} bytes, expected {n_bytes} "
            f"for dims ({nx},{ny},{nz})"
        )
    data = np.frombuffer(payload, dtype=dtype)
    if hdr["datatype"] == _DT_INT16 and data.size and int(data.min()) < 0:
        raise GridError("int16 NIfTI volume contains negative values; not a label map")
    labels = data.astype(np.uint16)
    spacing = tuple(abs(float(p)) for p in hdr["pixdim"][1:4])
    if min(spacing) <= 0:
        raise GridError(f"non-positive pixdim spacing {spacing}")
    origin = tuple(float(x) for x in aff[:3, 3])
    return VoxelGrid(
        dims=(nx, ny, nz),
        spacing_mm=spacing,
        origin_mm=origin,
        labels=labels,
        meta={"source": str(path), "format": "nifti1", "affine": aff.tolist()},
    )
