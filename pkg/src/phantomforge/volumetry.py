"""Per-structure volumes, zero-volume fractions, and Dice overlap.

Volumes are exact: voxel count times voxel volume, reported in mL.
The tally runs slice-by-slice so working memory stays O(slice) even for
full-body grids.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .grid import VoxelGrid
from .taxonomy import Taxonomy

_LABEL_BINS = 0x10000


@dataclass
class VolumeTable:
    """Map structure id -> volume (mL) with grid provenance.

    ``counts`` holds the exact voxel tallies the volumes derive from;
    ``unknown`` collects nonzero labels absent from the taxonomy.
    """

    volumes_ml: dict[int, float]
    counts: dict[int, int]
    unknown: dict[int, int]
    total_voxels: int
    dims: tuple[int, int, int]
    spacing_mm: tuple[float, float, float]
    names: dict[int, str] = field(default_factory=dict)

    def volume(self, structure_id: int) -> float:
        return self.volumes_ml.get(structure_id, 0.0)

    def nonzero_ids(self) -> set[int]:
        return {i for i, v in self.volumes_ml.items() if v > 0}

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "spacing_mm": list(self.spacing_mm),
            "total_voxels": self.total_voxels,
            "volumes_ml": {str(k): v for k, v in sorted(self.volumes_ml.items())},
            "counts": {str(k): v for k, v in sorted(self.counts.items())},
            "unknown": {str(k): v for k, v in sorted(self.unknown.items())},
            "names": {str(k): v for k, v in sorted(self.names.items())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "VolumeTable":
        return cls(
            volumes_ml={int(k): float(v) for k, v in doc["volumes_ml"].items()},
            counts={int(k): int(v) for k, v in doc["counts"].items()},
            unknown={int(k): int(v) for k, v in doc.get("unknown", {}).items()},
            total_voxels=int(doc["total_voxels"]),
            dims=tuple(doc["dims"]),
            spacing_mm=tuple(doc["spacing_mm"]),
            names={int(k): v for k, v in doc.get("names", {}).items()},
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["structure_id", "name", "volume_ml"])
        for sid in sorted(self.volumes_ml):
            writer.writerow([sid, self.names.get(sid, ""), repr(self.volumes_ml[sid])])
        return buf.getvalue()


def _tally(grid: VoxelGrid) -> np.ndarray:
    """One pass over the labels, slice by slice (O(slice) extra memory)."""
    nx, ny, nz = grid.dims
    plane = nx * ny
    total = np.zeros(_LABEL_BINS, dtype=np.int64)
    flat = grid.labels
    for z in range(nz):
        part = np.bincount(flat[z * plane : (z + 1) * plane], minlength=_LABEL_BINS)
        total += part
    return total


def structure_volumes(grid: VoxelGrid, t: Taxonomy) -> VolumeTable:
    """Exact per-structure volumes in mL; taxonomy ids absent from the
    grid get 0, labels absent from the taxonomy are reported separately."""
    tally = _tally(grid)
    vox_ml = grid.voxel_volume_mm3 / 1000.0
    known = set(t.by_id)
    volumes, counts, names = {}, {}, {}
    for sid in sorted(known):
        c = int(tally[sid]) if sid < _LABEL_BINS else 0
        counts[sid] = c
        volumes[sid] = c * vox_ml
        names[sid] = t.by_id[sid].name
    unknown = {}
    present = np.nonzero(tally)[0]
    for lab in present:
        lab = int(lab)
        if lab != 0 and lab not in known:
            unknown[lab] = int(tally[lab])
    return VolumeTable(
        volumes_ml=volumes,
        counts=counts,
        unknown=unknown,
        total_voxels=int(tally.sum()),
        dims=grid.dims,
        spacing_mm=grid.spacing_mm,
        names=names,
    )


def zero_volume_fraction(vt: VolumeTable, expected: set[int]) -> float:
    """Fraction of expected structures with zero volume."""
    if not expected:
        raise ValueError("expected structure set is empty")
    zero = sum(1 for sid in expected if vt.volume(sid) == 0)
    return zero / len(expected)


def dice(a: VoxelGrid, b: VoxelGrid) -> float:
    """Dice similarity 2|A∩B| / (|A|+|B|) between two binary grids.

    Both masks empty is defined as 1.0.
    """
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch {a.dims} vs {b.dims}")
    fa = a.labels != 0
    fb = b.labels != 0
    na = int(fa.sum())
    nb = int(fb.sum())
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.count_nonzero(fa & fb))
    return 2.0 * inter / (na + nb)
