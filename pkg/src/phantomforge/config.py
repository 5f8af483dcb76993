"""Pipeline configuration: every threshold, seed, and tunable in one place.

A config file (TOML or JSON) fully determines the QC run; the catalog
stores the effective config next to its outputs for provenance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib


class ConfigError(ValueError):
    """Out-of-range threshold or malformed config file."""


@dataclass
class PipelineConfig:
    taxonomy_path: str | None = None
    # QC thresholds (strict-inequality semantics documented per check)
    symmetry_rel_diff: float = 0.5
    max_symmetry_discrepancies: int = 2
    zero_volume_max: float = 0.25
    outlier_threshold: float = 0.9
    max_flagged_organs: int = 2
    min_age_years: float = 14.0
    dip_alpha: float = 0.05
    # statistics
    dip_bootstrap: int = 2000
    gmm_components: tuple[int, ...] = (2, 3)
    em_tol: float = 1e-8
    em_max_iter: int = 500
    var_floor_frac: float = 1e-6
    mc_draws: int = 10_000
    min_nonzero_fit: int = 20
    min_cohort: int = 20
    # meshing
    smoothing_lambda: float = 0.5
    smoothing_iterations: int = 20
    # reproducibility
    base_seed: int = 20240809
    jobs: int = 1

    def __post_init__(self):
        checks = [
            (0.0 < self.symmetry_rel_diff <= 1.0, "symmetry_rel_diff in (0, 1]"),
            (self.max_symmetry_discrepancies >= 0, "max_symmetry_discrepancies >= 0"),
            (0.0 < self.zero_volume_max < 1.0, "zero_volume_max in (0, 1)"),
            (0.0 < self.outlier_threshold < 1.0, "outlier_threshold in (0, 1)"),
            (self.max_flagged_organs >= 0, "max_flagged_organs >= 0"),
            (self.min_age_years >= 0, "min_age_years >= 0"),
            (0.0 < self.dip_alpha < 1.0, "dip_alpha in (0, 1)"),
            (self.dip_bootstrap >= 200, "dip_bootstrap >= 200"),
            (0.0 <= self.smoothing_lambda <= 1.0, "smoothing_lambda in [0, 1]"),
            (self.smoothing_iterations >= 0, "smoothing_iterations >= 0"),
            (self.jobs >= 1, "jobs >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(f"config violates: {msg}")
        self.gmm_components = tuple(int(k) for k in self.gmm_components)

    def to_json(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["gmm_components"] = list(self.gmm_components)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def load_config(path: str | None = None) -> PipelineConfig:
    """Load a TOML or JSON config; no path returns all defaults."""
    if path is None:
        return PipelineConfig()
    text_path = str(path)
    if text_path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
    else:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    return PipelineConfig.from_dict(doc)
