"""One-dimensional Gaussian mixtures fitted by EM, with BIC selection.

Initialization is deterministic: component j starts at the (j-0.5)/k
sample quantile with a shared variance, so fits are reproducible and
exactly scale-equivariant.  Variances are floored at 1e-6 times the
sample variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

_LOG_2PI = float(np.log(2.0 * np.pi))


class GmmError(ValueError):
    """Degenerate input or invalid mixture size."""


@dataclass
class GmmParams:
    k: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float = float("nan")
    ll_history: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_likelihood": self.log_likelihood,
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GmmParams":
        return cls(
            k=int(doc["k"]),
            weights=np.asarray(doc["weights"], dtype=float),
            means=np.asarray(doc["means"], dtype=float),
            variances=np.asarray(doc["variances"], dtype=float),
            log_likelihood=float(doc.get("log_likelihood", float("nan"))),
            n_iter=int(doc.get("n_iter", 0)),
            converged=bool(doc.get("converged", False)),
        )


def _component_logpdf(x: np.ndarray, params: GmmParams) -> np.ndarray:
    """log of weight_j * N(x | mean_j, var_j), shape (len(x), k)."""
    x = np.asarray(x, dtype=float)[:, None]
    var = params.variances[None, :]
    mean = params.means[None, :]
    log_w = np.log(params.weights)[None, :]
    return log_w - 0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def gmm_logpdf(x, params: GmmParams) -> np.ndarray:
    """Log density of the mixture at x (scalar or array)."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = logsumexp(_component_logpdf(arr, params), axis=1)
    return out if np.ndim(x) else float(out[0])


def gmm_sample(params: GmmParams, n: int, seed: int) -> np.ndarray:
    """Deterministic draws from the mixture."""
    rng = np.random.default_rng(seed)
    comp = rng.choice(params.k, size=n, p=params.weights / params.weights.sum())
    z = rng.standard_normal(n)
    return params.means[comp] + np.sqrt(params.variances[comp]) * z


def gmm_fit_em(
    samples,
    k: int,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 500,
    var_floor_frac: float = 1e-6,
) -> GmmParams:
    """Fit a k-component 1-D Gaussian mixture by EM.

    ``seed`` is accepted for interface stability but unused: the
    quantile initialization makes the whole fit deterministic.
    """
    x = np.asarray(samples, dtype=float)
    if k < 1:
        raise GmmError(f"k must be >= 1, got {k}")
    if x.size < 5 * k:
        raise GmmError(f"need at least 5k = {5 * k} samples, got {x.size}")
    total_var = float(np.var(x))
    if total_var == 0.0:
        raise GmmError("degenerate sample: all values equal")
    var_floor = var_floor_frac * total_var

    means = np.quantile(x, [(j + 0.5) / k for j in range(k)])
    variances = np.full(k, total_var)
    weights = np.full(k, 1.0 / k)
    params = GmmParams(k=k, weights=weights, means=means, variances=variances)

    prev_ll = -np.inf
    history: list[float] = []
    for it in range(1, max_iter + 1):
        log_joint = _component_logpdf(x, params)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(log_norm.sum())
        history.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])

        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        params.weights = nk / x.size
        params.means = (resp * x[:, None]).sum(axis=0) / nk
        dev2 = (x[:, None] - params.means[None, :]) ** 2
        params.variances = np.maximum((resp * dev2).sum(axis=0) / nk, var_floor)

        if ll - prev_ll < tol and it > 1:
            params.converged = True
            prev_ll = ll
            break
        prev_ll = ll
    params.n_iter = len(history)
    params.ll_history = history
    params.log_likelihood = prev_ll
    return params


def gmm_bic(params: GmmParams, n: int) -> float:
    """Bayesian information criterion (lower is better).

    Free parameters: k-1 weights, k means, k variances.
    """
    n_free = 3 * params.k - 1
    return -2.0 * params.log_likelihood + n_free * float(np.log(n))


def fit_single_gaussian(samples) -> GmmParams:
    """MLE normal fit expressed as a 1-component mixture (the k=1 path)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise GmmError("need at least 2 samples")
    var = float(np.var(x))
    if var == 0.0:
        raise GmmError("degenerate sample: all values equal")
    params = GmmParams(
        k=1,
        weights=np.array([1.0]),
        means=np.array([float(np.mean(x))]),
        variances=np.array([var]),
    )
    params.log_likelihood = float(gmm_logpdf(x, params).sum())
    params.n_iter = 1
    params.converged = True
    params.ll_history = [params.log_likelihood]
    return params
