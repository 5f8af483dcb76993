"""The QC cascade: per-scan verdicts, population scoring, deduplication.

Stage order is fixed: age -> bilateral symmetry -> zero-volume fraction
-> statistical outliers -> human review -> unique-patient dedup.  A scan
rejected at stage k records no stage-(k+1) results.  Threshold semantics
are strict where the source procedure says "exceeding"/"more than":
rel-diff 0.50 passes, 36/140 zero fraction fails while 35/140 passes,
two flagged organs pass while three fail, age 14.0 passes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .seeds import derive_seed
from .taxonomy import Taxonomy, expected_structures, symmetric_pairs
from .volume_model import VolumeModel, fit_volume_model, outlier_probability
from .volumetry import VolumeTable, zero_volume_fraction

STATUS_ACCEPTED = "accepted"
STATUS_REJECTED_AGE = "rejected_age"
STATUS_REJECTED_SYMMETRY = "rejected_symmetry"
STATUS_REJECTED_ZERO_VOLUME = "rejected_zero_volume"
STATUS_REJECTED_STATISTICAL = "rejected_statistical"
STATUS_REJECTED_REVIEW = "rejected_review"
STATUS_PENDING = "pending_review"
STATUS_SUPERSEDED = "superseded_duplicate"

VERDICTS = ("approved", "flagged", "rejected")


class QcStateError(ValueError):
    """Review/dedup state-machine violation."""


@dataclass
class SymmetryResult:
    discrepant_pairs: list[tuple[int, int, float]]
    passed: bool

    def to_json(self) -> dict:
        return {
            "discrepant_pairs": [list(p) for p in self.discrepant_pairs],
            "pass": self.passed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SymmetryResult":
        return cls(
            [(int(a), int(b), float(r)) for a, b, r in doc["discrepant_pairs"]],
            bool(doc["pass"]),
        )


@dataclass
class ZeroVolumeResult:
    fraction: float
    passed: bool

    def to_json(self) -> dict:
        return {"fraction": self.fraction, "pass": self.passed}

    @classmethod
    def from_json(cls, doc: dict) -> "ZeroVolumeResult":
        return cls(float(doc["fraction"]), bool(doc["pass"]))


@dataclass
class StatisticalResult:
    p_out: dict[int, float]
    flagged_ids: list[int]
    skull_flag: bool
    passed: bool
    mean_outlier_probability: float

    def to_json(self) -> dict:
        return {
            "p_out": {str(k): v for k, v in sorted(self.p_out.items())},
            "flagged_ids": list(self.flagged_ids),
            "skull_flag": self.skull_flag,
            "pass": self.passed,
            "mean_outlier_probability": self.mean_outlier_probability,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "StatisticalResult":
        return cls(
            {int(k): float(v) for k, v in doc["p_out"].items()},
            [int(i) for i in doc["flagged_ids"]],
            bool(doc["skull_flag"]),
            bool(doc["pass"]),
            float(doc["mean_outlier_probability"]),
        )


@dataclass
class ReviewRecord:
    verdict: str
    rating: int
    reviewer: str
    timestamp: str
    notes: str = ""

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "rating": self.rating,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
            "notes": self.notes,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ReviewRecord":
        return cls(
            doc["verdict"],
            int(doc["rating"]),
            doc["reviewer"],
            doc["timestamp"],
            doc.get("notes", ""),
        )


@dataclass
class QcOutcome:
    scan_id: str
    age_pass: bool
    symmetry: SymmetryResult | None = None
    zero_volume: ZeroVolumeResult | None = None
    statistical: StatisticalResult | None = None
    review: ReviewRecord | None = None
    final_status: str = STATUS_PENDING

    def to_json(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "age_pass": self.age_pass,
            "symmetry": self.symmetry.to_json() if self.symmetry else None,
            "zero_volume": self.zero_volume.to_json() if self.zero_volume else None,
            "statistical": self.statistical.to_json() if self.statistical else None,
            "review": self.review.to_json() if self.review else None,
            "final_status": self.final_status,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QcOutcome":
        return cls(
            scan_id=doc["scan_id"],
            age_pass=bool(doc["age_pass"]),
            symmetry=SymmetryResult.from_json(doc["symmetry"])
            if doc.get("symmetry")
            else None,
            zero_volume=ZeroVolumeResult.from_json(doc["zero_volume"])
            if doc.get("zero_volume")
            else None,
            statistical=StatisticalResult.from_json(doc["statistical"])
            if doc.get("statistical")
            else None,
            review=ReviewRecord.from_json(doc["review"]) if doc.get("review") else None,
            final_status=doc["final_status"],
        )


@dataclass
class CohortScan:
    """One scan's inputs to the pipeline."""

    scan_id: str
    patient_id: str
    sex: str
    age_years: float
    volumes: VolumeTable


@dataclass
class StageReport:
    name: str
    entrants: int
    passed: int
    rejected: int
    rejected_ids: list[str]
    pending: int = 0

    def to_json(self) -> dict:
        doc = {
            "name": self.name,
            "entrants": self.entrants,
            "passed": self.passed,
            "rejected": self.rejected,
            "rejected_ids": list(self.rejected_ids),
        }
        if self.name in ("review", "dedup"):
            doc["pending"] = self.pending
        return doc


@dataclass
class FunnelReport:
    stages: list[StageReport]
    warnings: list[str] = field(default_factory=list)

    def stage(self, name: str) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "stages": [s.to_json() for s in self.stages],
            "warnings": list(self.warnings),
        }


@dataclass
class PipelineResult:
    outcomes: dict[str, QcOutcome]
    funnel: FunnelReport
    models: dict[int, VolumeModel]
    warnings: list[str]
    patient_of: dict[str, str]


def symmetry_check(
    vt: VolumeTable,
    pairs: list[tuple[int, int]],
    rel_diff_threshold: float = 0.5,
    max_discrepancies: int = 2,
) -> SymmetryResult:
    """Bilateral volume agreement: a pair is discrepant when
    |V_L - V_R| / max(V_L, V_R) strictly exceeds the threshold.  Pairs
    where both sides are zero are skipped (coverage is the zero-volume
    check's job).  Up to ``max_discrepancies`` discrepancies pass."""
    if not pairs:
        raise ValueError("no symmetric pairs configured")
    discrepant = []
    for left, right in pairs:
        vl = vt.volume(left)
        vr = vt.volume(right)
        big = max(vl, vr)
        if big == 0:
            continue
        rel = abs(vl - vr) / big
        if rel > rel_diff_threshold:
            discrepant.append((left, right, rel))
    return SymmetryResult(discrepant, len(discrepant) <= max_discrepancies)


def statistical_check(
    p_out: dict[int, float],
    skull_trio: tuple[int, int, int],
    threshold: float = 0.9,
    max_flagged: int = 2,
    nonzero_ids: set[int] | None = None,
) -> StatisticalResult:
    """Flag structures whose outlier probability strictly exceeds the
    threshold; the scan fails when strictly more than ``max_flagged`` are
    flagged.  The skull flag (>= 2 of the trio above threshold) marks
    partial coverage as metadata and does not reject by itself."""
    flagged = sorted(sid for sid, p in p_out.items() if p > threshold)
    trio_hits = sum(1 for sid in skull_trio if p_out.get(sid, 0.0) > threshold)
    if nonzero_ids is None:
        scored = list(p_out.values())
    else:
        scored = [p for sid, p in p_out.items() if sid in nonzero_ids]
    mean_p = float(np.mean(sorted(scored))) if scored else 0.0
    return StatisticalResult(
        p_out=dict(p_out),
        flagged_ids=flagged,
        skull_flag=trio_hits >= 2,
        passed=len(flagged) <= max_flagged,
        mean_outlier_probability=mean_p,
    )


@dataclass
class ScanScore:
    scan_id: str
    p_out: dict[int, float]
    nonzero_ids: set[int] | None = None

    def mean(self) -> float:
        if self.nonzero_ids is None:
            vals = list(self.p_out.values())
        else:
            vals = [p for sid, p in self.p_out.items() if sid in self.nonzero_ids]
        return float(np.mean(sorted(vals))) if vals else 0.0


def select_unique_scan(scans: list[ScanScore]) -> str:
    """Scan with the lowest mean outlier probability over structures with
    nonzero volume; ties break to the lexicographically smallest id."""
    if not scans:
        raise ValueError("no scans to select from")
    return min(scans, key=lambda s: (s.mean(), s.scan_id)).scan_id


def fit_cohort_models(
    scans: list[CohortScan], t: Taxonomy, config: PipelineConfig, jobs: int = 1
) -> dict[int, VolumeModel]:
    """Per-structure population models over the given scans.

    Each structure's sample contains only scans whose sex expects it, so
    sex-specific organs are not diluted with structural zeros.  Results
    are independent of ``jobs``: seeds are derived per structure and the
    dip-null table depends on the sample size alone.
    """
    expected_by_sex = {
        sex: expected_structures(t, sex) for sex in ("male", "female", "unknown")
    }
    dip_seed = derive_seed(config.base_seed, "dip-null")

    def fit_one(sid: int) -> tuple[int, VolumeModel] | None:
        samples = [
            s.volumes.volume(sid)
            for s in scans
            if sid in expected_by_sex.get(s.sex, expected_by_sex["unknown"])
        ]
        if not samples:
            return None
        model = fit_volume_model(
            samples,
            sid,
            dip_alpha=config.dip_alpha,
            dip_bootstrap=config.dip_bootstrap,
            dip_seed=dip_seed,
            mc_seed=derive_seed(config.base_seed, "mc", sid),
            mc_draws=config.mc_draws,
            min_nonzero=config.min_nonzero_fit,
            gmm_components=config.gmm_components,
            em_tol=config.em_tol,
            em_max_iter=config.em_max_iter,
            var_floor_frac=config.var_floor_frac,
        )
        return sid, model

    sids = sorted(t.by_id)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fitted = list(pool.map(fit_one, sids))
    else:
        fitted = [fit_one(sid) for sid in sids]
    return {sid: m for item in fitted if item for sid, m in [item]}


def score_scan(
    scan: CohortScan, models: dict[int, VolumeModel], t: Taxonomy
) -> dict[int, float]:
    """Outlier probabilities for every sex-expected, modeled structure."""
    expected = expected_structures(t, scan.sex)
    return {
        sid: outlier_probability(models[sid], scan.volumes.volume(sid))
        for sid in sorted(expected)
        if sid in models
    }


def run_qc_pipeline(
    scans: list[CohortScan],
    t: Taxonomy,
    config: PipelineConfig | None = None,
    jobs: int = 1,
) -> PipelineResult:
    """Run stages 1-4 over a cohort; survivors end up pending_review.

    Review verdicts and dedup are applied afterwards (see apply_review /
    dedup_patient); build_funnel reflects whatever state the outcomes
    are in.
    """
    config = config or PipelineConfig()
    warnings: list[str] = []
    outcomes: dict[str, QcOutcome] = {}
    patient_of = {s.scan_id: s.patient_id for s in scans}
    pairs = symmetric_pairs(t)

    survivors: list[CohortScan] = []
    for scan in sorted(scans, key=lambda s: s.scan_id):
        age_ok = scan.age_years >= config.min_age_years
        out = QcOutcome(scan_id=scan.scan_id, age_pass=age_ok)
        if not age_ok:
            out.final_status = STATUS_REJECTED_AGE
            outcomes[scan.scan_id] = out
            continue
        out.symmetry = symmetry_check(
            scan.volumes,
            pairs,
            config.symmetry_rel_diff,
            config.max_symmetry_discrepancies,
        )
        if not out.symmetry.passed:
            out.final_status = STATUS_REJECTED_SYMMETRY
            outcomes[scan.scan_id] = out
            continue
        fraction = zero_volume_fraction(
            scan.volumes, expected_structures(t, scan.sex)
        )
        out.zero_volume = ZeroVolumeResult(fraction, not (fraction > config.zero_volume_max))
        if not out.zero_volume.passed:
            out.final_status = STATUS_REJECTED_ZERO_VOLUME
            outcomes[scan.scan_id] = out
            continue
        survivors.append(scan)
        outcomes[scan.scan_id] = out

    models: dict[int, VolumeModel] = {}
    if len(survivors) < config.min_cohort:
        warnings.append(
            f"statistical stage disabled: only {len(survivors)} scans survive "
            f"volume checks (< {config.min_cohort} required to fit models)"
        )
        for scan in survivors:
            outcomes[scan.scan_id].final_status = STATUS_PENDING
    else:
        models = fit_cohort_models(survivors, t, config, jobs=jobs)

        def score_one(scan: CohortScan) -> tuple[str, StatisticalResult]:
            p_out = score_scan(scan, models, t)
            stat = statistical_check(
                p_out,
                t.skull_trio,
                threshold=config.outlier_threshold,
                max_flagged=config.max_flagged_organs,
                nonzero_ids=scan.volumes.nonzero_ids(),
            )
            return scan.scan_id, stat

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                scored = list(pool.map(score_one, survivors))
        else:
            scored = [score_one(s) for s in survivors]
        for scan_id, stat in scored:
            out = outcomes[scan_id]
            out.statistical = stat
            out.final_status = (
                STATUS_PENDING if stat.passed else STATUS_REJECTED_STATISTICAL
            )

    funnel = build_funnel(list(outcomes.values()), warnings)
    return PipelineResult(
        outcomes=outcomes,
        funnel=funnel,
        models=models,
        warnings=warnings,
        patient_of=patient_of,
    )


def apply_review(
    outcome: QcOutcome,
    verdict: str,
    rating: int,
    reviewer: str,
    timestamp: str,
    notes: str = "",
) -> QcOutcome:
    """Record a physician verdict on a pending scan.

    approved/flagged both accept (flagged keeps its anomaly notes in the
    review record); rejected becomes rejected_review.  Anything but a
    pending scan is a state error.
    """
    if verdict not in VERDICTS:
        raise QcStateError(f"unknown verdict {verdict!r}")
    if not 1 <= int(rating) <= 5:
        raise QcStateError(f"rating must be 1..5, got {rating}")
    if outcome.final_status != STATUS_PENDING:
        raise QcStateError(
            f"scan {outcome.scan_id} is not pending review "
            f"(status {outcome.final_status})"
        )
    outcome.review = ReviewRecord(verdict, int(rating), reviewer, timestamp, notes)
    outcome.final_status = (
        STATUS_REJECTED_REVIEW if verdict == "rejected" else STATUS_ACCEPTED
    )
    return outcome


def dedup_patient(outcomes: list[QcOutcome]) -> None:
    """Keep one accepted scan per patient: the one with the lowest mean
    outlier probability; the rest become superseded_duplicate."""
    candidates = [
        o for o in outcomes if o.final_status in (STATUS_ACCEPTED, STATUS_SUPERSEDED)
    ]
    if not candidates:
        return
    means = {
        o.scan_id: (o.statistical.mean_outlier_probability if o.statistical else 0.0)
        for o in candidates
    }
    winner = min(candidates, key=lambda o: (means[o.scan_id], o.scan_id)).scan_id
    for o in candidates:
        o.final_status = STATUS_ACCEPTED if o.scan_id == winner else STATUS_SUPERSEDED


def build_funnel(outcomes: list[QcOutcome], warnings: list[str] | None = None) -> FunnelReport:
    """Per-stage entrants/passed/rejected counts from current outcomes."""
    outcomes = sorted(outcomes, key=lambda o: o.scan_id)
    stages: list[StageReport] = []

    def report(name: str, entrants: list[QcOutcome], rejected_status: str, passed: list[QcOutcome]):
        rejected = [o.scan_id for o in entrants if o.final_status == rejected_status]
        stages.append(
            StageReport(
                name=name,
                entrants=len(entrants),
                passed=len(passed),
                rejected=len(rejected),
                rejected_ids=rejected,
            )
        )
        return passed

    alive = outcomes
    alive = report("age", alive, STATUS_REJECTED_AGE, [o for o in alive if o.age_pass])
    alive = report(
        "symmetry",
        alive,
        STATUS_REJECTED_SYMMETRY,
        [o for o in alive if o.symmetry is not None and o.symmetry.passed],
    )
    alive = report(
        "zero_volume",
        alive,
        STATUS_REJECTED_ZERO_VOLUME,
        [o for o in alive if o.zero_volume is not None and o.zero_volume.passed],
    )
    stat_passed = [
        o
        for o in alive
        if o.final_status != STATUS_REJECTED_STATISTICAL
        and (o.statistical is None or o.statistical.passed)
    ]
    alive = report("statistical", alive, STATUS_REJECTED_STATISTICAL, stat_passed)

    reviewed_ok = [
        o
        for o in alive
        if o.final_status in (STATUS_ACCEPTED, STATUS_SUPERSEDED)
    ]
    review_stage = StageReport(
        name="review",
        entrants=len(alive),
        passed=len(reviewed_ok),
        rejected=len([o for o in alive if o.final_status == STATUS_REJECTED_REVIEW]),
        rejected_ids=[
            o.scan_id for o in alive if o.final_status == STATUS_REJECTED_REVIEW
        ],
        pending=len([o for o in alive if o.final_status == STATUS_PENDING]),
    )
    stages.append(review_stage)

    superseded = [o.scan_id for o in reviewed_ok if o.final_status == STATUS_SUPERSEDED]
    stages.append(
        StageReport(
            name="dedup",
            entrants=len(reviewed_ok),
            passed=len(reviewed_ok) - len(superseded),
            rejected=len(superseded),
            rejected_ids=superseded,
        )
    )
    return FunnelReport(stages=stages, warnings=list(warnings or []))
