"""Weighted Gaussian-mixture fitting: the parameter-update inner loop.

Given per-site nonnegative weights, `fit_gmm` maximizes the weighted mixture
log-likelihood sum_i weight_i * ln G_mix(y_i).  With a single component the
weighted mean / population (co)variance closed form applies directly; with
several components an inner EM iterates soft responsibilities and weighted
refits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emission import (
    Gaussian1D,
    LabelModel,
    MvGaussian,
    log_component_pdf,
    log_gmm_pdf,
    logsumexp,
    regularize_covariance,
)

__all__ = ["FitConfig", "fit_gmm", "responsibilities"]


@dataclass
class FitConfig:
    """Mixture-fit settings: component count, inner-EM budget, floors."""

    g: int = 1
    max_inner_iters: int = 20
    tol: float = 1e-6
    cov_epsilon: float = 1e-6

    def __post_init__(self):
        if self.g < 1:
            raise ValueError(f"g must be >= 1, got {self.g}")
        if self.max_inner_iters < 1:
            raise ValueError(f"max_inner_iters must be >= 1, got {self.max_inner_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not self.cov_epsilon > 0:
            raise ValueError(f"cov_epsilon must be positive, got {self.cov_epsilon}")


def responsibilities(observations, model: LabelModel) -> np.ndarray:
    """Per-site, per-component posterior assignment probabilities.

    Entry [i, c] is w_c G(y_i; comp_c) / sum_c' w_c' G(y_i; comp_c'),
    evaluated in the log domain; every row sums to 1.
    """
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    cols = [
        np.atleast_1d(np.asarray(log_component_pdf(observations, comp), dtype=float)) + w
        for w, comp in zip(logw, model.components)
    ]
    logr = np.stack(cols, axis=-1)
    logr -= logsumexp(logr, axis=-1, keepdims=True)
    return np.exp(logr)


def _check_inputs(observations, weights, g: int):
    data = np.asarray(observations, dtype=float)
    if data.ndim == 1:
        pts = data.reshape(-1, 1)
        scalar = True
    elif data.ndim == 2:
        pts = data
        scalar = False
    else:
        raise ValueError(f"observations must be (N,) or (N, d), got shape {data.shape}")
    w = np.asarray(weights, dtype=float)
    if w.shape != (pts.shape[0],):
        raise ValueError(f"weights shape {w.shape} does not match {pts.shape[0]} observations")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not w.sum() > 0:
        raise ValueError("all weights are zero")
    if int(np.count_nonzero(w)) < g:
        raise ValueError(
            f"only {np.count_nonzero(w)} observations carry weight, need >= {g} for g={g}"
        )
    return data, pts, w, scalar


def _weighted_moments(pts: np.ndarray, w: np.ndarray):
    """Weighted mean and population (co)variance, normalized by sum(w)."""
    wn = w / w.sum()
    mu = wn @ pts
    diff = pts - mu
    cov = (wn[:, None] * diff).T @ diff
    return mu, 0.5 * (cov + cov.T)


def _make_component(mu: np.ndarray, cov: np.ndarray, scalar: bool, eps: float):
    if scalar:
        var = max(float(cov[0, 0]), eps)
        return Gaussian1D(mu=float(mu[0]), sigma=float(np.sqrt(var)))
    return MvGaussian(mu=mu, cov=regularize_covariance(cov, eps))


def _split_init(pts: np.ndarray, w: np.ndarray, scalar: bool, config: FitConfig) -> LabelModel:
    """Spread g initial means along the principal axis of the weighted cloud."""
    mu, cov = _weighted_moments(pts, w)
    if scalar:
        axis = np.array([1.0])
        spread = float(np.sqrt(max(cov[0, 0], config.cov_epsilon)))
    else:
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        axis = vecs[:, -1]
        spread = float(np.sqrt(max(vals[-1], config.cov_epsilon)))
    comps = [
        _make_component(mu + t * spread * axis, cov, scalar, config.cov_epsilon)
        for t in np.linspace(-1.0, 1.0, config.g)
    ]
    return LabelModel(weights=np.full(config.g, 1.0 / config.g), components=tuple(comps))


def fit_gmm(observations, weights, config: FitConfig, init: LabelModel | None = None) -> LabelModel:
    """Fit a g-component Gaussian mixture to weighted observations.

    With g=1 the closed-form weighted mean and population (co)variance are
    used directly (variances floored at `cov_epsilon`).  With g>1 an inner EM
    runs from `init` when it matches (warm start) or from a principal-axis
    split otherwise, until the relative weighted log-likelihood change drops
    below `config.tol` or `config.max_inner_iters` is exhausted.  Scaling all
    weights by a positive constant does not change the result.
    """
    data, pts, w, scalar = _check_inputs(observations, weights, config.g)
    total = w.sum()

    if config.g == 1:
        mu, cov = _weighted_moments(pts, w)
        comp = _make_component(mu, cov, scalar, config.cov_epsilon)
        return LabelModel(weights=np.array([1.0]), components=(comp,))

    init_matches = (
        init is not None
        and init.g == config.g
        and init.d == pts.shape[1]
        and isinstance(init.components[0], Gaussian1D) == scalar
    )
    model = init if init_matches else _split_init(pts, w, scalar, config)

    prev_ll = None
    for _ in range(config.max_inner_iters):
        resp = responsibilities(data, model)
        u = w[:, None] * resp
        masses = u.sum(axis=0)

        comps = []
        new_w = np.empty(config.g)
        for c in range(config.g):
            if masses[c] <= 0:
                # starved component: keep its parameters, weight goes to zero
                comps.append(model.components[c])
                new_w[c] = 0.0
                continue
            mu = (u[:, c] @ pts) / masses[c]
            diff = pts - mu
            cov = (u[:, c, None] * diff).T @ diff / masses[c]
            comps.append(_make_component(mu, 0.5 * (cov + cov.T), scalar, config.cov_epsilon))
            new_w[c] = masses[c] / total
        new_w /= new_w.sum()
        model = LabelModel(weights=new_w, components=tuple(comps))

        ll = float(w @ np.atleast_1d(log_gmm_pdf(data, model)))
        if prev_ll is not None and abs(ll - prev_ll) <= config.tol * abs(prev_ll):
            break
        prev_ll = ll
    return model
