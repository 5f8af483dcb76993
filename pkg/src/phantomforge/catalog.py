"""File-backed phantom catalog with an event-sourced review workflow.

Layout under the catalog directory:

    config.json              effective pipeline config (provenance)
    patients.json            demographics + patient -> scan ids
    scans/<scan_id>/         volume.lvol(.json), volumes.json/.csv,
                             qc.json (pre-review baseline), previews/*.png,
                             scan.json
    models.json              fitted per-structure volume models
    funnel.json              funnel of the current state
    reviews.log              append-only JSON-lines review events
    phantoms/<phantom_id>/   manifest.json, <structure_id>.ply, voxel/*

Review state is event-sourced: qc.json files hold the pipeline baseline
(pending/rejected, before any review), reviews.log holds every verdict,
and the in-memory state is always baseline + replay.  Replaying the log
from scratch therefore reproduces final statuses exactly; nothing under
scans/ is ever rewritten by a review.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
import threading
from pathlib import Path

import numpy as np

from . import qc as qc_mod
from .config import PipelineConfig
from .grid import VoxelGrid, read_label_grid, write_label_grid
from .previews import AXES, write_previews
from .qc import (
    STATUS_ACCEPTED,
    STATUS_PENDING,
    CohortScan,
    FunnelReport,
    QcOutcome,
    apply_review,
    build_funnel,
    dedup_patient,
    run_qc_pipeline,
)
from .records import PatientRecord, ScanRecord
from .taxonomy import Taxonomy, load_taxonomy
from .volume_model import VolumeModel
from .volumetry import VolumeTable, structure_volumes

PIPELINE_VERSION = "0.1.0"


class CatalogError(ValueError):
    """Catalog misuse: duplicates, unknown ids, bad filters."""


class NotFoundError(CatalogError):
    """Lookup of a scan/phantom id that does not exist."""


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _write_json(path: Path, doc) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _read_json(path: Path):
    with open(path) as fh:
        return json.load(fh)


class Catalog:
    def __init__(self, root: str | Path, taxonomy: Taxonomy | None = None):
        self.root = Path(root)
        self.taxonomy = taxonomy or load_taxonomy()
        self.patients: dict[str, PatientRecord] = {}
        self.scan_records: dict[str, ScanRecord] = {}
        self.outcomes: dict[str, QcOutcome] = {}
        self.models: dict[int, VolumeModel] = {}
        self.warnings: list[str] = []
        self._volumes_cache: dict[str, VolumeTable] = {}
        self._write_lock = threading.Lock()

    # ---------------------------------------------------------------- paths
    @property
    def scans_dir(self) -> Path:
        return self.root / "scans"

    @property
    def phantoms_dir(self) -> Path:
        return self.root / "phantoms"

    @property
    def reviews_log_path(self) -> Path:
        return self.root / "reviews.log"

    def scan_dir(self, scan_id: str) -> Path:
        return self.scans_dir / scan_id

    def phantom_dir(self, phantom_id: str) -> Path:
        return self.phantoms_dir / phantom_id

    # ------------------------------------------------------------ lifecycle
    @classmethod
    def init(
        cls,
        root: str | Path,
        config: PipelineConfig | None = None,
        taxonomy: Taxonomy | None = None,
    ) -> "Catalog":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        (root / "scans").mkdir(exist_ok=True)
        (root / "phantoms").mkdir(exist_ok=True)
        cat = cls(root, taxonomy=taxonomy)
        _write_json(root / "config.json", (config or PipelineConfig()).to_json())
        if not (root / "patients.json").exists():
            _write_json(root / "patients.json", {})
        cat.patients = {}
        return cat

    @classmethod
    def load(cls, root: str | Path, taxonomy: Taxonomy | None = None) -> "Catalog":
        root = Path(root)
        if not (root / "patients.json").exists():
            raise CatalogError(f"{root} is not a catalog (no patients.json)")
        cat = cls(root, taxonomy=taxonomy)
        cat.patients = {
            pid: PatientRecord.from_json(doc)
            for pid, doc in _read_json(root / "patients.json").items()
        }
        for scan_json in sorted(root.glob("scans/*/scan.json")):
            rec = ScanRecord.from_json(_read_json(scan_json))
            cat.scan_records[rec.scan_id] = rec
        models_path = root / "models.json"
        if models_path.exists():
            doc = _read_json(models_path)
            cat.models = {
                int(sid): VolumeModel.from_json(m) for sid, m in doc["models"].items()
            }
            cat.warnings = list(doc.get("warnings", []))
        cat._load_outcomes_and_replay()
        return cat

    def config(self) -> PipelineConfig:
        path = self.root / "config.json"
        if path.exists():
            return PipelineConfig.from_dict(_read_json(path))
        return PipelineConfig()

    def _load_outcomes_and_replay(self) -> None:
        """Rebuild review state: qc.json baselines + reviews.log replay."""
        self.outcomes = {}
        for qc_json in sorted(self.root.glob("scans/*/qc.json")):
            out = QcOutcome.from_json(_read_json(qc_json))
            self.outcomes[out.scan_id] = out
        for event in self._read_events():
            try:
                self._apply_event(event)
            except qc_mod.QcStateError:
                # stale event (baseline changed since it was logged): skip
                continue

    def _read_events(self) -> list[dict]:
        if not self.reviews_log_path.exists():
            return []
        events = []
        with open(self.reviews_log_path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events

    def _apply_event(self, event: dict) -> QcOutcome:
        scan_id = event["scan_id"]
        outcome = self.outcomes.get(scan_id)
        if outcome is None:
            raise qc_mod.QcStateError(f"unknown scan {scan_id!r}")
        apply_review(
            outcome,
            verdict=event["verdict"],
            rating=event["rating"],
            reviewer=event.get("reviewer", ""),
            timestamp=event["timestamp"],
            notes=event.get("notes", ""),
        )
        self._dedup_for_patient_of(scan_id)
        return outcome

    def _dedup_for_patient_of(self, scan_id: str) -> None:
        patient_id = self.scan_records[scan_id].patient_id
        patient = self.patients.get(patient_id)
        if patient is None:
            return
        sibling = [
            self.outcomes[sid]
            for sid in patient.scans
            if sid in self.outcomes
        ]
        dedup_patient(sibling)

    # -------------------------------------------------------------- ingest
    def ingest_scan(
        self,
        grid: VoxelGrid,
        patient: PatientRecord | dict,
        scan_id: str,
        compress: bool = True,
    ) -> ScanRecord:
        """Store a scan: grid, volume table, previews, patient linkage.

        Fails (leaving the catalog unchanged) on a duplicate scan id.
        """
        if isinstance(patient, dict):
            patient = PatientRecord.from_json(patient)
        if scan_id in self.scan_records or self.scan_dir(scan_id).exists():
            raise CatalogError(f"duplicate scan_id {scan_id!r}")
        vt = structure_volumes(grid, self.taxonomy)

        sdir = self.scan_dir(scan_id)
        (sdir / "previews").mkdir(parents=True)
        write_label_grid(grid, str(sdir / "volume.lvol"), compress=compress)
        _write_json(sdir / "volumes.json", vt.to_json())
        with open(sdir / "volumes.csv", "w") as fh:
            fh.write(vt.to_csv())
        write_previews(grid, sdir / "previews")
        rec = ScanRecord(
            scan_id=scan_id,
            patient_id=patient.patient_id,
            grid_file="volume.lvol",
            created_at=_utcnow(),
        )
        _write_json(sdir / "scan.json", rec.to_json())

        existing = self.patients.get(patient.patient_id)
        if existing is None:
            existing = PatientRecord(
                patient_id=patient.patient_id,
                sex=patient.sex,
                age_years=patient.age_years,
                height_m=patient.height_m,
                weight_kg=patient.weight_kg,
                race=patient.race,
                scans=[],
            )
            self.patients[patient.patient_id] = existing
        if scan_id not in existing.scans:
            existing.scans.append(scan_id)
        self._persist_patients()
        self.scan_records[scan_id] = rec
        self._volumes_cache[scan_id] = vt
        return rec

    def _persist_patients(self) -> None:
        _write_json(
            self.root / "patients.json",
            {pid: p.to_json() for pid, p in sorted(self.patients.items())},
        )

    def volumes_of(self, scan_id: str) -> VolumeTable:
        vt = self._volumes_cache.get(scan_id)
        if vt is None:
            vt = VolumeTable.from_json(
                _read_json(self.scan_dir(scan_id) / "volumes.json")
            )
            self._volumes_cache[scan_id] = vt
        return vt

    def load_grid(self, scan_id: str) -> VoxelGrid:
        rec = self.scan_records[scan_id]
        return read_label_grid(str(self.scan_dir(scan_id) / rec.grid_file))

    # ------------------------------------------------------------------ qc
    def run_qc(self, config: PipelineConfig | None = None, jobs: int = 1):
        """Run the QC cascade over every ingested scan and persist the
        baseline (qc.json, models.json, funnel.json); existing review
        events are replayed on top afterwards."""
        config = config or self.config()
        cohort = []
        for scan_id, rec in sorted(self.scan_records.items()):
            patient = self.patients[rec.patient_id]
            cohort.append(
                CohortScan(
                    scan_id=scan_id,
                    patient_id=rec.patient_id,
                    sex=patient.sex,
                    age_years=patient.age_years,
                    volumes=self.volumes_of(scan_id),
                )
            )
        result = run_qc_pipeline(cohort, self.taxonomy, config, jobs=jobs)
        for scan_id, outcome in result.outcomes.items():
            _write_json(self.scan_dir(scan_id) / "qc.json", outcome.to_json())
        _write_json(
            self.root / "models.json",
            {
                "models": {
                    str(sid): m.to_json() for sid, m in sorted(result.models.items())
                },
                "warnings": result.warnings,
            },
        )
        self.models = result.models
        self.warnings = result.warnings
        _write_json(self.root / "config.json", config.to_json())
        self._load_outcomes_and_replay()
        _write_json(self.root / "funnel.json", self.funnel().to_json())
        return result

    def funnel(self) -> FunnelReport:
        return build_funnel(list(self.outcomes.values()), self.warnings)

    # -------------------------------------------------------------- review
    def submit_review(
        self,
        scan_id: str,
        verdict: str,
        rating: int,
        reviewer: str,
        notes: str = "",
        timestamp: str | None = None,
    ) -> QcOutcome:
        """Append a verdict to the review log and apply it.

        Only pending scans can be reviewed; the log is append-only and a
        rejected submission is never written to it.
        """
        with self._write_lock:
            outcome = self.outcomes.get(scan_id)
            if outcome is None:
                raise NotFoundError(f"unknown scan {scan_id!r}")
            event = {
                "scan_id": scan_id,
                "verdict": verdict,
                "rating": rating,
                "reviewer": reviewer,
                "notes": notes,
                "timestamp": timestamp or _utcnow(),
            }
            # validate by applying first; only then persist the event
            apply_review(
                outcome,
                verdict=verdict,
                rating=int(rating),
                reviewer=reviewer,
                timestamp=event["timestamp"],
                notes=notes,
            )
            self._dedup_for_patient_of(scan_id)
            with open(self.reviews_log_path, "a") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
            _write_json(self.root / "funnel.json", self.funnel().to_json())
            return outcome

    def pending_reviews(self) -> list[dict]:
        out = []
        for scan_id in sorted(self.outcomes):
            o = self.outcomes[scan_id]
            if o.final_status != STATUS_PENDING:
                continue
            previews = {
                axis: str(self.scan_dir(scan_id) / "previews" / f"{axis}.png")
                for axis in AXES
            }
            out.append(
                {
                    "scan_id": scan_id,
                    "patient_id": self.scan_records[scan_id].patient_id,
                    "previews": previews,
                    "qc": _qc_summary(o),
                }
            )
        return out

    # ------------------------------------------------------------ phantoms
    def accepted_scan_ids(self) -> list[str]:
        return sorted(
            sid for sid, o in self.outcomes.items() if o.final_status == STATUS_ACCEPTED
        )

    def manifest(self, phantom_id: str) -> dict:
        """Phantom package description (phantom_id == scan_id).

        Derived from catalog state plus whatever meshes exist on disk,
        so mesh_path entries always point at real files.
        """
        if phantom_id not in self.scan_records:
            raise NotFoundError(f"unknown phantom {phantom_id!r}")
        rec = self.scan_records[phantom_id]
        patient = self.patients[rec.patient_id]
        outcome = self.outcomes.get(phantom_id)
        vt = self.volumes_of(phantom_id)
        pdir = self.phantom_dir(phantom_id)
        structures = []
        for sid in sorted(vt.volumes_ml):
            vol = vt.volumes_ml[sid]
            mesh_file = pdir / f"{sid}.ply"
            entry = {
                "id": sid,
                "name": self.taxonomy.by_id[sid].name,
                "volume_ml": vol,
            }
            if mesh_file.exists():
                entry["mesh_path"] = str(mesh_file.relative_to(self.root))
            structures.append(entry)
        review = outcome.review.to_json() if outcome and outcome.review else None
        return {
            "phantom_id": phantom_id,
            "patient": {
                "patient_id": patient.patient_id,
                "sex": patient.sex,
                "age_years": patient.age_years,
                "height_m": patient.height_m,
                "weight_kg": patient.weight_kg,
                "race": patient.race,
                "bmi": patient.bmi,
            },
            "structures": structures,
            "qc": outcome.to_json() if outcome else None,
            "review_rating": review["rating"] if review else None,
            "pipeline_version": PIPELINE_VERSION,
            "created_at": rec.created_at,
        }

    def write_manifest(self, phantom_id: str) -> Path:
        pdir = self.phantom_dir(phantom_id)
        pdir.mkdir(parents=True, exist_ok=True)
        path = pdir / "manifest.json"
        _write_json(path, self.manifest(phantom_id))
        return path

    def query_phantoms(
        self,
        sex: str | None = None,
        age_range: tuple[float | None, float | None] | None = None,
        race: str | None = None,
        bmi_range: tuple[float | None, float | None] | None = None,
        structure: int | None = None,
        include_all: bool = False,
    ) -> list[dict]:
        """Conjunctive demographic filtering over accepted phantoms.

        Phantoms without height/weight are excluded whenever a BMI range
        is requested; ordering is by phantom_id.
        """
        for name, rng in (("age", age_range), ("bmi", bmi_range)):
            if rng and rng[0] is not None and rng[1] is not None and rng[0] > rng[1]:
                raise CatalogError(f"malformed {name} range: min > max")
        ids = (
            sorted(self.scan_records)
            if include_all
            else self.accepted_scan_ids()
        )
        out = []
        for pid in ids:
            man = self.manifest(pid)
            pat = man["patient"]
            if sex and pat["sex"] != sex:
                continue
            if race and pat["race"] != race:
                continue
            if age_range:
                lo, hi = age_range
                if lo is not None and pat["age_years"] < lo:
                    continue
                if hi is not None and pat["age_years"] > hi:
                    continue
            if bmi_range:
                lo, hi = bmi_range
                bmi = pat["bmi"]
                if bmi is None:
                    continue
                if lo is not None and bmi < lo:
                    continue
                if hi is not None and bmi > hi:
                    continue
            if structure is not None:
                vols = {s["id"]: s["volume_ml"] for s in man["structures"]}
                if vols.get(int(structure), 0.0) <= 0.0:
                    continue
            out.append(man)
        return out

    # --------------------------------------------------------------- stats
    def demographics_summary(self) -> dict:
        """Cohort report over accepted phantoms: age-by-race histogram
        (5-year bins), sex counts, height/weight 2-D histogram (0.05 m x
        5 kg bins), per-structure volume mean/std with missing fractions."""
        accepted = self.accepted_scan_ids()
        if not accepted:
            raise CatalogError("no accepted phantoms in catalog")
        patients = [self.patients[self.scan_records[sid].patient_id] for sid in accepted]

        sex_counts: dict[str, int] = {}
        for p in patients:
            sex_counts[p.sex] = sex_counts.get(p.sex, 0) + 1

        age_bin = 5.0
        by_race: dict[str, dict[str, int]] = {}
        for p in patients:
            lo = int(p.age_years // age_bin) * int(age_bin)
            label = f"{lo}-{lo + int(age_bin)}"
            by_race.setdefault(p.race, {})
            by_race[p.race][label] = by_race[p.race].get(label, 0) + 1

        hw = [
            (p.height_m, p.weight_kg)
            for p in patients
            if p.height_m is not None and p.weight_kg is not None
        ]
        hw_hist: dict[str, int] = {}
        for h, w in hw:
            hb = round(int(h / 0.05) * 0.05, 2)
            wb = int(w // 5) * 5
            key = f"{hb:.2f}m/{wb}kg"
            hw_hist[key] = hw_hist.get(key, 0) + 1

        age_by_sex = {}
        for sex in ("male", "female"):
            ages = [p.age_years for p in patients if p.sex == sex]
            if ages:
                age_by_sex[sex] = {
                    "mean": float(np.mean(ages)),
                    "std": float(np.std(ages)),
                    "n": len(ages),
                }

        return {
            "n_phantoms": len(accepted),
            "sex_counts": sex_counts,
            "age_bin_years": age_bin,
            "age_histogram_by_race": by_race,
            "age_by_sex": age_by_sex,
            "height_bin_m": 0.05,
            "weight_bin_kg": 5.0,
            "height_weight_histogram": hw_hist,
            "volume_stats": self.volume_stats(),
        }

    def volume_stats(self) -> dict:
        """Per-structure volume mean/std over accepted phantoms; zero
        volumes are excluded from the moments and reported as a missing
        fraction instead."""
        accepted = self.accepted_scan_ids()
        if not accepted:
            raise CatalogError("no accepted phantoms in catalog")
        tables = [self.volumes_of(sid) for sid in accepted]
        stats = {}
        for sid in sorted(self.taxonomy.by_id):
            vols = np.array([vt.volume(sid) for vt in tables])
            nonzero = vols[vols > 0]
            entry = {
                "name": self.taxonomy.by_id[sid].name,
                "n": int(nonzero.size),
                "missing_fraction": float(1.0 - nonzero.size / len(vols)),
            }
            if nonzero.size:
                entry["mean_ml"] = float(np.mean(nonzero))
                entry["std_ml"] = float(np.std(nonzero))
            stats[str(sid)] = entry
        return stats


def _qc_summary(o: QcOutcome) -> dict:
    return {
        "final_status": o.final_status,
        "age_pass": o.age_pass,
        "symmetry_discrepancies": len(o.symmetry.discrepant_pairs)
        if o.symmetry
        else None,
        "zero_volume_fraction": o.zero_volume.fraction if o.zero_volume else None,
        "flagged_ids": o.statistical.flagged_ids if o.statistical else None,
        "skull_flag": o.statistical.skull_flag if o.statistical else None,
        "mean_outlier_probability": o.statistical.mean_outlier_probability
        if o.statistical
        else None,
    }
