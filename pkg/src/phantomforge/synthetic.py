"""Seeded synthetic cohorts with planted QC defects.

Exact funnel accounting needs clean scans that can never trip a stage by
chance.  Two constructions make that structural rather than seed-luck:

* Per-structure cohort volumes are a *stratified quantile lattice*: a
  seeded permutation of population quantiles ((rank+0.5)/n) instead of
  iid draws.  Fitted medians/IQRs then match the population almost
  exactly and the most extreme clean value sits at a known quantile,
  chosen so its outlier probability stays below ~0.89 (threshold 0.9).
  Lattices are also "super-uniform", so the dip test never fires on the
  unimodal structures.

* Population shapes are bounded.  Unimodal structures use a truncated
  normal (bound 1.05 sigma) whose IQR-fitted model is wider than the
  support; the three bimodal structures use well-separated modes with
  bathtub-shaped (edge-heavy Beta) within-mode spread, whose variance is
  close to its half-range so EM-fitted components also contain the
  support under the 0.9 contour.

Planted defects sit on disjoint scans: symmetry (3 pairs at 60% relative
difference), truncation (40 expected structures at zero), triple
outliers (3 structures at 3x the population mean), duplicate patients
(clean scan pairs), and a gallbladder missing in a fixed fraction of
clean scans.  Volumes are integer voxel counts times the voxel volume,
so the grid path and the in-memory path agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaincinv, ndtr, ndtri

from .catalog import Catalog
from .config import PipelineConfig
from .grid import VoxelGrid
from .qc import CohortScan
from .records import PatientRecord
from .taxonomy import Taxonomy, expected_structures, load_taxonomy
from .volumetry import VolumeTable

SPACING_MM = (2.0, 2.0, 2.0)
DIMS = (128, 128, 64)
VOXEL_ML = SPACING_MM[0] * SPACING_MM[1] * SPACING_MM[2] / 1000.0

GALLBLADDER = 86
BIMODAL_STRUCTURES = (105, 107, 109)  # lung lobes: two acquisition protocols
OUTLIER_TARGETS = (85, 88, 110)  # liver, spleen, heart
SYMMETRY_TARGET_PAIRS = ((48, 60), (50, 62), (46, 47))  # ribs 1 & 3, femurs
# 40 unpaired-or-both-zeroed structures: all 24 ribs + 16 vertebrae
TRUNCATION_ZEROED = tuple(range(48, 72)) + tuple(range(11, 27))

_UNIMODAL_BOUND = 1.05  # truncation of the unimodal shape, in sigmas
_UNIMODAL_CV = 0.12
_BIMODAL_HIGH_FACTOR = 2.2
_BIMODAL_CV = 0.08
_BATHTUB_SHAPE = 0.65


@dataclass
class SyntheticTruth:
    seed: int
    n_scans: int
    symmetry_scans: list[str] = field(default_factory=list)
    truncation_scans: list[str] = field(default_factory=list)
    outlier_scans: list[str] = field(default_factory=list)
    duplicate_patients: dict[str, list[str]] = field(default_factory=dict)
    gallbladder_zero_scans: list[str] = field(default_factory=list)
    male_ages: list[float] = field(default_factory=list)
    female_ages: list[float] = field(default_factory=list)


def _tnorm_ppf(u: np.ndarray, bound: float) -> np.ndarray:
    lo, hi = ndtr(-bound), ndtr(bound)
    return ndtri(lo + u * (hi - lo))


def _bathtub_ppf(u: np.ndarray) -> np.ndarray:
    return 2.0 * betaincinv(_BATHTUB_SHAPE, _BATHTUB_SHAPE, u) - 1.0


def _lattice(rng: np.random.Generator, n: int) -> np.ndarray:
    """Permuted stratified quantile ranks in (0, 1)."""
    return (rng.permutation(n) + 0.5) / n


def _structure_means(rng: np.random.Generator, t: Taxonomy) -> dict[int, float]:
    means = {sid: float(rng.uniform(18.0, 60.0)) for sid in sorted(t.by_id)}
    for left, right in t.symmetry_set:
        means[right] = means[left]  # contralateral structures share a scale
    return means


def generate_cohort(
    n_scans: int = 200,
    seed: int = 20240809,
    n_duplicate_patients: int = 10,
    n_symmetry_defects: int = 5,
    n_truncations: int = 4,
    n_triple_outliers: int = 3,
    gallbladder_zero_fraction: float = 0.16,
    taxonomy: Taxonomy | None = None,
) -> tuple[list[CohortScan], dict[str, PatientRecord], SyntheticTruth]:
    """Build the in-memory cohort: scans, patients, and planted truth."""
    t = taxonomy or load_taxonomy()
    rng = np.random.default_rng(seed)
    means = _structure_means(rng, t)

    n_dup_scans = 2 * n_duplicate_patients
    n_defect = n_symmetry_defects + n_truncations + n_triple_outliers
    if n_scans < n_dup_scans + n_defect:
        raise ValueError("n_scans too small for the requested plants")

    patients: dict[str, PatientRecord] = {}
    scan_plan: list[tuple[str, str]] = []  # (scan_id, patient_id)
    n_single = n_scans - n_dup_scans
    n_patients = n_duplicate_patients + n_single
    truth = SyntheticTruth(seed=seed, n_scans=n_scans)

    races = np.array(["White", "Black", "Asian", "Other"])
    race_p = np.array([0.60, 0.25, 0.08, 0.07])
    for p_idx in range(n_patients):
        pid = f"P{p_idx + 1:04d}"
        sex = "male" if rng.random() < 0.55 else "female"
        if sex == "male":
            age = float(np.clip(rng.normal(64.9, 14.0), 15.0, 95.0))
            height = float(np.clip(rng.normal(1.76, 0.08), 1.45, 2.05))
            weight = float(np.clip(rng.normal(88.0, 16.0), 45.0, 160.0))
            truth.male_ages.append(age)
        else:
            age = float(np.clip(rng.normal(61.2, 15.6), 15.0, 95.0))
            height = float(np.clip(rng.normal(1.63, 0.07), 1.40, 1.95))
            weight = float(np.clip(rng.normal(74.0, 15.0), 40.0, 150.0))
            truth.female_ages.append(age)
        patients[pid] = PatientRecord(
            patient_id=pid,
            sex=sex,
            age_years=age,
            height_m=height,
            weight_kg=weight,
            race=str(rng.choice(races, p=race_p)),
        )
        n_scans_here = 2 if p_idx < n_duplicate_patients else 1
        for k in range(n_scans_here):
            scan_id = f"{pid}-{k + 1}"
            scan_plan.append((scan_id, pid))
            patients[pid].scans.append(scan_id)
        if n_scans_here == 2:
            truth.duplicate_patients[pid] = list(patients[pid].scans)

    # defect assignment: only single-scan patients carry plants
    single_scans = [sid for sid, pid in scan_plan if pid not in truth.duplicate_patients]
    cursor = 0
    truth.symmetry_scans = single_scans[cursor : cursor + n_symmetry_defects]
    cursor += n_symmetry_defects
    truth.truncation_scans = single_scans[cursor : cursor + n_truncations]
    cursor += n_truncations
    truth.outlier_scans = single_scans[cursor : cursor + n_triple_outliers]
    cursor += n_triple_outliers
    clean_scans = single_scans[cursor:] + [
        sid for sid, pid in scan_plan if pid in truth.duplicate_patients
    ]
    n_gall_zero = int(round(gallbladder_zero_fraction * n_scans))
    truth.gallbladder_zero_scans = sorted(
        rng.choice(np.array(clean_scans), size=n_gall_zero, replace=False).tolist()
    )

    # per-structure stratified volume lattices over the scans expecting them
    sex_of = {sid_: patients[pid].sex for sid_, pid in scan_plan}
    all_scan_ids = [sid for sid, _ in scan_plan]
    expected_by_sex = {
        s: expected_structures(t, s) for s in ("male", "female", "unknown")
    }
    volume_of: dict[int, dict[str, float]] = {}
    for sid in sorted(t.by_id):
        expecting = [s for s in all_scan_ids if sid in expected_by_sex[sex_of[s]]]
        n_exp = len(expecting)
        if n_exp == 0:
            volume_of[sid] = {}
            continue
        mean = means[sid]
        if sid in BIMODAL_STRUCTURES:
            hi_set = set(
                np.array(expecting)[
                    rng.permutation(n_exp)[: int(round(0.45 * n_exp))]
                ].tolist()
            )
            vals = {}
            half_width = _BIMODAL_CV * mean  # same absolute width for both
            # modes: with equal component sigmas the HDR level of an edge
            # draw is weight-independent (~0.87); a wider mode would sit
            # below the narrow mode's bulk density and flag spuriously
            for subset, factor in (
                ([s for s in expecting if s in hi_set], _BIMODAL_HIGH_FACTOR),
                ([s for s in expecting if s not in hi_set], 1.0),
            ):
                if not subset:
                    continue
                mode = mean * factor
                w = _bathtub_ppf(_lattice(rng, len(subset)))
                for s, wi in zip(subset, w):
                    vals[s] = mode + half_width * float(wi)
            volume_of[sid] = vals
        else:
            z = _tnorm_ppf(_lattice(rng, n_exp), _UNIMODAL_BOUND)
            volume_of[sid] = {
                s: mean * (1.0 + _UNIMODAL_CV * float(zi))
                for s, zi in zip(expecting, z)
            }

    scans: list[CohortScan] = []
    for scan_id, pid in scan_plan:
        patient = patients[pid]
        counts: dict[int, int] = {}
        for sid in sorted(t.by_id):
            vol = volume_of[sid].get(scan_id)
            counts[sid] = 0 if vol is None else max(int(round(vol / VOXEL_ML)), 1)

        if scan_id in truth.gallbladder_zero_scans:
            counts[GALLBLADDER] = 0
        if scan_id in truth.symmetry_scans:
            for left, right in SYMMETRY_TARGET_PAIRS:
                counts[right] = max(int(round(counts[left] * 0.4)), 1)
        if scan_id in truth.truncation_scans:
            for sid in TRUNCATION_ZEROED:
                counts[sid] = 0
        if scan_id in truth.outlier_scans:
            for sid in OUTLIER_TARGETS:
                counts[sid] = int(round(3.0 * means[sid] / VOXEL_ML))

        volumes = {sid: c * VOXEL_ML for sid, c in counts.items()}
        vt = VolumeTable(
            volumes_ml=volumes,
            counts=dict(counts),
            unknown={},
            total_voxels=sum(counts.values()),
            dims=DIMS,
            spacing_mm=SPACING_MM,
            names={sid: t.by_id[sid].name for sid in counts},
        )
        scans.append(
            CohortScan(
                scan_id=scan_id,
                patient_id=pid,
                sex=patient.sex,
                age_years=patient.age_years,
                volumes=vt,
            )
        )
    return scans, patients, truth


def grid_for_scan(scan: CohortScan) -> VoxelGrid:
    """Materialize a label grid realizing the scan's exact voxel counts."""
    nx, ny, nz = DIMS
    capacity = nx * ny * nz
    total = sum(scan.volumes.counts.values())
    if total > capacity:
        raise ValueError(f"scan {scan.scan_id} needs {total} voxels > {capacity}")
    labels = np.zeros(capacity, dtype=np.uint16)
    pos = 0
    for sid in sorted(scan.volumes.counts):
        c = scan.volumes.counts[sid]
        labels[pos : pos + c] = sid
        pos += c
    return VoxelGrid(DIMS, SPACING_MM, (0.0, 0.0, 0.0), labels)


def fixture_config(**overrides) -> PipelineConfig:
    """Pipeline config stored with synthetic fixtures.

    The bathtub-shaped bimodal components would tempt BIC into splitting
    one mode's edge humps at k=3, which un-contains clean draws; the
    fixture pins the mixture size to the planted two modes.
    """
    settings = {"gmm_components": (2,)}
    settings.update(overrides)
    return PipelineConfig(**settings)


def generate_cohort_catalog(
    root,
    n_scans: int = 200,
    seed: int = 20240809,
    config: PipelineConfig | None = None,
    **kwargs,
) -> tuple[Catalog, SyntheticTruth]:
    """Materialize the synthetic cohort as an on-disk catalog fixture."""
    scans, patients, truth = generate_cohort(n_scans=n_scans, seed=seed, **kwargs)
    catalog = Catalog.init(root, config=config or fixture_config())
    for scan in scans:
        catalog.ingest_scan(
            grid_for_scan(scan), patients[scan.patient_id], scan.scan_id
        )
    return catalog, truth
