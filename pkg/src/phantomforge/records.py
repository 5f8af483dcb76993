"""Patient, scan, and phantom-manifest records (plain JSON on disk)."""

from __future__ import annotations

from dataclasses import dataclass, field

SEX_VALUES = ("male", "female", "unknown")


class RecordError(ValueError):
    """Malformed record data."""


@dataclass
class PatientRecord:
    patient_id: str
    sex: str = "unknown"
    age_years: float = 0.0
    height_m: float | None = None
    weight_kg: float | None = None
    race: str = "Unknown"
    scans: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.sex not in SEX_VALUES:
            raise RecordError(f"sex must be one of {SEX_VALUES}, got {self.sex!r}")
        if self.age_years < 0:
            raise RecordError(f"age_years must be >= 0, got {self.age_years}")

    @property
    def bmi(self) -> float | None:
        if self.height_m and self.weight_kg and self.height_m > 0:
            return self.weight_kg / (self.height_m**2)
        return None

    def to_json(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "sex": self.sex,
            "age_years": self.age_years,
            "height_m": self.height_m,
            "weight_kg": self.weight_kg,
            "race": self.race,
            "scans": list(self.scans),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PatientRecord":
        return cls(
            patient_id=doc["patient_id"],
            sex=doc.get("sex", "unknown"),
            age_years=float(doc.get("age_years", 0.0)),
            height_m=doc.get("height_m"),
            weight_kg=doc.get("weight_kg"),
            race=doc.get("race", "Unknown"),
            scans=list(doc.get("scans", [])),
        )


@dataclass
class ScanRecord:
    scan_id: str
    patient_id: str
    grid_file: str
    created_at: str

    def to_json(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "patient_id": self.patient_id,
            "grid_file": self.grid_file,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScanRecord":
        return cls(doc["scan_id"], doc["patient_id"], doc["grid_file"], doc["created_at"])
