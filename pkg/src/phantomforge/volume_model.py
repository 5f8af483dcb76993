"""Per-structure population volume models and outlier probabilities.

Zero volumes never enter the distribution fits; they are tracked as a
zero-prevalence and scored by the rule p_out(0) = 1 - zero_prevalence
(an absent organ is only as anomalous as absence is rare -- a gallbladder
missing in 16% of a cohort scores 0.84 and stays under the 0.9 flag).

For nonzero volumes the outlier probability is the highest-density-region
level p_out(x) = Pr[f(X) > f(x)] under the fitted density: 0 at the mode,
approaching 1 in the tails.  Unimodal fits (robust normal via median and
IQR) have the closed form 2*Phi(|x - median| / robust_sigma) - 1, so the
classic IQR fence Q3 + 1.5*IQR sits at 2*Phi(2.698) - 1 ~ 0.9930.
Multimodal fits (GMM) use a seeded Monte Carlo estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import dip as dip_mod
from .gmm import GmmParams, fit_single_gaussian, gmm_bic, gmm_fit_em, gmm_logpdf, gmm_sample

IQR_TO_SIGMA = 1.349  # IQR of a normal in units of sigma


class ModelError(ValueError):
    """Model misuse (scoring an unfitted model, bad configuration)."""


def _phi(z):
    return 0.5 * (1.0 + erf(np.asarray(z, dtype=float) / np.sqrt(2.0)))


@dataclass
class UnimodalParams:
    median: float
    q1: float
    q3: float
    robust_sigma: float

    def to_json(self) -> dict:
        return {
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "robust_sigma": self.robust_sigma,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "UnimodalParams":
        return cls(doc["median"], doc["q1"], doc["q3"], doc["robust_sigma"])


@dataclass
class VolumeModel:
    structure_id: int
    n_samples: int  # nonzero samples used for the fit
    zero_prevalence: float
    dip: tuple[float, float] | None  # (statistic, p_value)
    kind: str  # "unimodal" | "multimodal"
    unimodal_params: UnimodalParams | None = None
    gmm_params: GmmParams | None = None
    mc_seed: int = 0
    mc_draws: int = 10_000
    low_confidence: bool = False
    _mc_cache: dict = field(default_factory=dict, repr=False)

    @property
    def fitted(self) -> bool:
        return self.unimodal_params is not None or self.gmm_params is not None

    def to_json(self) -> dict:
        return {
            "structure_id": self.structure_id,
            "n_samples": self.n_samples,
            "zero_prevalence": self.zero_prevalence,
            "dip": list(self.dip) if self.dip else None,
            "kind": self.kind,
            "unimodal_params": self.unimodal_params.to_json()
            if self.unimodal_params
            else None,
            "gmm_params": self.gmm_params.to_json() if self.gmm_params else None,
            "mc_seed": self.mc_seed,
            "mc_draws": self.mc_draws,
            "low_confidence": self.low_confidence,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "VolumeModel":
        return cls(
            structure_id=int(doc["structure_id"]),
            n_samples=int(doc["n_samples"]),
            zero_prevalence=float(doc["zero_prevalence"]),
            dip=tuple(doc["dip"]) if doc.get("dip") else None,
            kind=doc["kind"],
            unimodal_params=UnimodalParams.from_json(doc["unimodal_params"])
            if doc.get("unimodal_params")
            else None,
            gmm_params=GmmParams.from_json(doc["gmm_params"])
            if doc.get("gmm_params")
            else None,
            mc_seed=int(doc.get("mc_seed", 0)),
            mc_draws=int(doc.get("mc_draws", 10_000)),
            low_confidence=bool(doc.get("low_confidence", False)),
        )


def fit_volume_model(
    samples,
    structure_id: int,
    dip_alpha: float = 0.05,
    dip_bootstrap: int = 2000,
    dip_seed: int = 0,
    mc_seed: int = 0,
    mc_draws: int = 10_000,
    min_nonzero: int = 20,
    gmm_components: tuple[int, ...] = (2, 3),
    em_tol: float = 1e-8,
    em_max_iter: int = 500,
    var_floor_frac: float = 1e-6,
) -> VolumeModel:
    """Fit the population model for one structure from cohort volumes.

    ``samples`` includes zeros; those only feed zero_prevalence.  With
    >= ``min_nonzero`` nonzero values, the dip test at ``dip_alpha``
    decides unimodal (robust median/IQR) versus multimodal (GMM with k
    chosen by BIC).  Below that the fit falls back to a deliberately
    wide unimodal model (robust_sigma at least |median|) flagged
    low-confidence.  No nonzero samples at all yields an unfitted model
    with zero_prevalence 1.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ModelError("empty cohort sample")
    nonzero = np.sort(x[x > 0])
    zero_prev = 1.0 - nonzero.size / x.size

    if nonzero.size == 0:
        return VolumeModel(
            structure_id=structure_id,
            n_samples=0,
            zero_prevalence=1.0,
            dip=None,
            kind="unimodal",
            mc_seed=mc_seed,
            mc_draws=mc_draws,
        )

    q1, med, q3 = np.quantile(nonzero, [0.25, 0.5, 0.75])
    robust_sigma = (q3 - q1) / IQR_TO_SIGMA

    if nonzero.size < min_nonzero:
        wide = max(robust_sigma, abs(float(med)))
        return VolumeModel(
            structure_id=structure_id,
            n_samples=int(nonzero.size),
            zero_prevalence=zero_prev,
            dip=None,
            kind="unimodal",
            unimodal_params=UnimodalParams(float(med), float(q1), float(q3), wide),
            mc_seed=mc_seed,
            mc_draws=mc_draws,
            low_confidence=True,
        )

    d = dip_mod.dip_statistic(nonzero)
    p = dip_mod.dip_pvalue(d, nonzero.size, dip_bootstrap, dip_seed)

    if p < dip_alpha:
        candidates = []
        for k in gmm_components:
            if nonzero.size >= 5 * k:
                fit = gmm_fit_em(
                    nonzero,
                    k,
                    seed=mc_seed,
                    tol=em_tol,
                    max_iter=em_max_iter,
                    var_floor_frac=var_floor_frac,
                )
                candidates.append((gmm_bic(fit, nonzero.size), k, fit))
        if candidates:
            candidates.sort(key=lambda t: (t[0], t[1]))
            best = candidates[0][2]
            return VolumeModel(
                structure_id=structure_id,
                n_samples=int(nonzero.size),
                zero_prevalence=zero_prev,
                dip=(float(d), float(p)),
                kind="multimodal",
                gmm_params=best,
                mc_seed=mc_seed,
                mc_draws=mc_draws,
            )

    return VolumeModel(
        structure_id=structure_id,
        n_samples=int(nonzero.size),
        zero_prevalence=zero_prev,
        dip=(float(d), float(p)),
        kind="unimodal",
        unimodal_params=UnimodalParams(
            float(med), float(q1), float(q3), float(robust_sigma)
        ),
        mc_seed=mc_seed,
        mc_draws=mc_draws,
    )


def _mc_log_density_draws(model: VolumeModel) -> np.ndarray:
    """Sorted log-densities of seeded draws from the fitted GMM (cached)."""
    key = (model.mc_seed, model.mc_draws)
    cached = model._mc_cache.get(key)
    if cached is None:
        draws = gmm_sample(model.gmm_params, model.mc_draws, model.mc_seed)
        cached = np.sort(gmm_logpdf(draws, model.gmm_params))
        model._mc_cache[key] = cached
    return cached


def outlier_probability(model: VolumeModel, x: float) -> float:
    """Highest-density-region level of volume x under the fitted model.

    p_out(x) = Pr[f(X) > f(x)] for nonzero x; p_out(0) = 1 - zero_prevalence.
    """
    if x == 0:
        return 1.0 - model.zero_prevalence
    if not model.fitted:
        # the cohort never exhibits this structure; any nonzero volume is
        # maximally anomalous
        return 1.0
    if model.kind == "unimodal":
        up = model.unimodal_params
        if up.robust_sigma <= 0:
            return 0.0 if x == up.median else 1.0
        z = abs(x - up.median) / up.robust_sigma
        return float(2.0 * _phi(z) - 1.0)
    log_f = _mc_log_density_draws(model)
    log_fx = gmm_logpdf(float(x), model.gmm_params)
    idx = np.searchsorted(log_f, log_fx, side="right")
    return float(log_f.size - idx) / log_f.size
