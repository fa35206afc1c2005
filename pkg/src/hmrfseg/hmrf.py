"""Unsupervised segmentation: alternating MAP labeling, posterior computation,
and per-label mixture refits.

Each iteration (1) re-estimates the label field by iterated conditional
updates under the current models, (2) computes per-site label posteriors that
combine the emission density with a neighborhood smoothness prior, and
(3) refits every label's mixture with those posterior columns as weights.
Labels are initialized by k-means and canonicalized by ascending mean
intensity at the very end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .emission import ModelSet, SingularCovarianceError, log_gmm_pdf, logsumexp
from .gmm_fit import FitConfig, fit_gmm
from .icm import EnergyTrace, MapConfig, map_estimate
from .kmeans import kmeans
from .lattice import Lattice

__all__ = [
    "EmConfig",
    "LabelCollapseError",
    "SegmentationResult",
    "neighborhood_label_prior",
    "posterior_step",
    "m_step",
    "run_hmrf_em",
]

# a label whose total posterior mass falls below this fraction of the site
# count has effectively no observations left to fit
COLLAPSE_FRACTION = 1e-6


class LabelCollapseError(RuntimeError):
    """A label's posterior mass vanished, leaving its parameters undefined."""

    def __init__(self, label: int, mass: float, iteration: int | None = None):
        self.label = label
        self.mass = mass
        self.iteration = iteration
        super().__init__()

    def __str__(self):
        where = f" at EM iteration {self.iteration}" if self.iteration is not None else ""
        return f"label {self.label} collapsed{where} (posterior mass {self.mass:.3e})"


@dataclass
class EmConfig:
    """Outer-loop settings: label count, iteration budget, sub-configs."""

    n_labels: int
    em_iters: int = 10
    map_config: MapConfig = field(default_factory=MapConfig)
    fit_config: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.n_labels < 2:
            raise ValueError(f"n_labels must be >= 2, got {self.n_labels}")
        if self.em_iters < 1:
            raise ValueError(f"em_iters must be >= 1, got {self.em_iters}")


@dataclass
class SegmentationResult:
    """Final labels, fitted models, per-EM-iteration energies, posteriors."""

    labels: np.ndarray
    models: ModelSet
    trace: EnergyTrace
    posteriors: np.ndarray


def neighborhood_label_prior(labels, lattice: Lattice, i: int, beta: float, n_labels: int) -> np.ndarray:
    """Label distribution at site `i` implied by its neighbors' labels.

    Returns exp(-beta * disagreements(l)) normalized over the `n_labels`
    labels; a site without neighbors gets the uniform distribution.
    """
    labels = lattice.check_label_field(labels, n_labels)
    flat = labels.reshape(-1)
    nbrs = lattice.neighbors(i)
    energies = np.array(
        [beta * sum(int(flat[j]) != l for j in nbrs) for l in range(n_labels)], dtype=float
    )
    p = np.exp(-(energies - energies.min()))
    return p / p.sum()


def _log_neighbor_prior(labels, lattice: Lattice, beta: float, n_labels: int) -> np.ndarray:
    """Unnormalized log prior -beta * disagreement count, shape (K, *dims)."""
    same = lattice.neighbor_label_counts(labels, n_labels)
    deg = lattice.neighbor_counts()
    return -beta * (deg[None, ...] - same)


def posterior_step(observations, labels, models: ModelSet, lattice: Lattice, beta: float = 0.5) -> np.ndarray:
    """Per-site label posteriors: emission density times neighborhood prior.

    Returns an array of shape dims + (K,) whose rows sum to 1; all work is
    done in the log domain, so far-tail sites keep finite posteriors.
    """
    labels = lattice.check_label_field(labels, models.n_labels)
    sites = np.asarray(lattice.flatten_sites(observations), dtype=float)
    k = models.n_labels
    logp = np.empty((k,) + lattice.dims, dtype=float)
    for l in range(k):
        logp[l] = np.asarray(log_gmm_pdf(sites, models[l])).reshape(lattice.dims)
    logp += _log_neighbor_prior(labels, lattice, beta, k)
    logp = np.moveaxis(logp, 0, -1)
    norm = logsumexp(logp, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        raise FloatingPointError("no label has positive posterior density at some site")
    return np.exp(logp - norm)


def _flatten_for_fit(observations, dims) -> np.ndarray:
    obs = np.asarray(observations, dtype=float)
    n = int(np.prod(dims))
    if obs.shape == tuple(dims):
        return obs.reshape(n)
    if obs.ndim == len(dims) + 1 and obs.shape[:-1] == tuple(dims):
        return obs.reshape(n, obs.shape[-1])
    raise ValueError(f"observations shape {obs.shape} does not match posterior grid {dims}")


def m_step(observations, posteriors, fit_config: FitConfig, init: ModelSet | None = None) -> ModelSet:
    """Refit every label's mixture using its posterior column as weights.

    `posteriors` has shape dims + (K,).  A label whose posterior mass is
    below COLLAPSE_FRACTION of the site count raises LabelCollapseError;
    `init` supplies warm starts for the inner EM when component counts match.
    """
    post = np.asarray(posteriors, dtype=float)
    if post.ndim < 2:
        raise ValueError("posteriors must have shape dims + (n_labels,)")
    k = post.shape[-1]
    dims = post.shape[:-1]
    sites = _flatten_for_fit(observations, dims)
    weights = post.reshape(-1, k)
    n = weights.shape[0]

    models = []
    for l in range(k):
        mass = float(weights[:, l].sum())
        if mass < COLLAPSE_FRACTION * n:
            raise LabelCollapseError(label=l, mass=mass)
        warm = init[l] if init is not None else None
        try:
            models.append(fit_gmm(sites, weights[:, l], fit_config, init=warm))
        except SingularCovarianceError as exc:
            exc.label = l
            raise
    return ModelSet(tuple(models))


def _canonicalize(labels: np.ndarray, models: ModelSet, posteriors: np.ndarray):
    """Reorder labels by ascending mixture-mean norm for stable output."""
    norms = [float(np.linalg.norm(np.atleast_1d(m.mean))) for m in models.models]
    order = np.argsort(norms, kind="stable")
    if np.array_equal(order, np.arange(len(norms))):
        return labels, models, posteriors
    relabel = np.empty(len(norms), dtype=np.int64)
    relabel[order] = np.arange(len(norms))
    return (
        relabel[labels],
        ModelSet(tuple(models[int(old)] for old in order)),
        posteriors[..., order],
    )


def _hard_posteriors(flat_labels: np.ndarray, n_labels: int, dims) -> np.ndarray:
    return np.eye(n_labels)[flat_labels].reshape(tuple(dims) + (n_labels,))


def run_hmrf_em(observations, lattice: Lattice, config: EmConfig, seed: int = 0) -> SegmentationResult:
    """Segment an observation field without training data.

    Labels start from deterministic k-means and the models from a refit on
    those hard assignments; each EM iteration then runs the MAP search,
    recomputes posteriors, and refits the models.  The energy trace holds one
    record per EM iteration, taken right after the MAP step under the models
    that step used.  Identical (observations, config, seed) reproduce the
    result bit for bit.
    """
    sites = np.asarray(lattice.flatten_sites(observations), dtype=float)
    k = config.n_labels
    beta = config.map_config.beta

    km = kmeans(sites, k, seed=seed)
    labels = km.labels.reshape(lattice.dims)
    try:
        models = m_step(
            observations, _hard_posteriors(km.labels, k, lattice.dims), config.fit_config
        )
    except LabelCollapseError as exc:
        exc.iteration = 0
        raise

    trace = EnergyTrace()
    posteriors = None
    for t in range(1, config.em_iters + 1):
        labels, map_trace = map_estimate(labels, observations, models, lattice, config.map_config)
        best = map_trace.best()
        trace.append(t, best.likelihood, best.prior, best.total)
        posteriors = posterior_step(observations, labels, models, lattice, beta)
        try:
            models = m_step(observations, posteriors, config.fit_config, init=models)
        except LabelCollapseError as exc:
            exc.iteration = t
            raise

    labels, models, posteriors = _canonicalize(labels, models, posteriors)
    return SegmentationResult(labels=labels, models=models, trace=trace, posteriors=posteriors)
