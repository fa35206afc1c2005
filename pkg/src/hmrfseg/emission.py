"""Emission models: Gaussians and Gaussian mixtures, evaluated in the log domain.

Scalar observations use (mu, sigma) parameters; vector observations (e.g. RGB)
use a mean vector and a full covariance matrix.  Mixture densities are always
combined with log-sum-exp so that far-tail observations never underflow the
energies used during inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Gaussian1D",
    "MvGaussian",
    "LabelModel",
    "ModelSet",
    "SingularCovarianceError",
    "gaussian_pdf",
    "log_component_pdf",
    "log_gmm_pdf",
    "gmm_pdf",
    "likelihood_energy",
    "regularize_covariance",
    "logsumexp",
]

LOG_SQRT_2PI = 0.5 * float(np.log(2.0 * np.pi))


class SingularCovarianceError(np.linalg.LinAlgError):
    """A covariance matrix is not positive definite."""

    def __init__(self, message: str, label: int | None = None):
        super().__init__(message)
        self.label = label

    def __str__(self):
        base = super().__str__()
        if self.label is not None:
            return f"{base} (label {self.label})"
        return base


def logsumexp(a: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
    """log(sum(exp(a))) computed without overflow via the max-shift identity."""
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Gaussian1D:
    """Scalar Gaussian with mean `mu` and standard deviation `sigma` > 0."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def d(self) -> int:
        return 1


@dataclass(frozen=True, eq=False)
class MvGaussian:
    """Multivariate Gaussian with mean vector `mu` and full covariance `cov`.

    The covariance must be symmetric positive definite; the Cholesky factor
    is cached at construction so repeated density evaluations stay cheap.
    """

    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mu.ndim != 1:
            raise ValueError(f"mu must be a vector, got shape {mu.shape}")
        if cov.shape != (mu.size, mu.size):
            raise ValueError(f"cov shape {cov.shape} incompatible with mu of size {mu.size}")
        if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12):
            raise ValueError("cov must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError(f"covariance is not positive definite: {exc}") from exc
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_half_log_det", float(np.sum(np.log(np.diag(chol)))))

    @property
    def d(self) -> int:
        return self.mu.size


@dataclass(frozen=True, eq=False)
class LabelModel:
    """Gaussian mixture attached to one label: weights plus g components.

    Weights must sum to 1 (within 1e-9) and all components must share the
    same dimensionality.  A single-component model degenerates to a plain
    Gaussian.
    """

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        components = tuple(self.components)
        if weights.ndim != 1 or len(components) != weights.size:
            raise ValueError("weights and components must have matching length")
        if weights.size < 1:
            raise ValueError("a model needs at least one component")
        if np.any(weights < 0) or np.any(weights > 1):
            raise ValueError("component weights must lie in [0, 1]")
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {weights.sum()!r}")
        dims = {c.d for c in components}
        kinds = {type(c) for c in components}
        if len(dims) != 1 or len(kinds) != 1:
            raise ValueError("all components must share one type and dimensionality")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)

    @property
    def g(self) -> int:
        return len(self.components)

    @property
    def d(self) -> int:
        return self.components[0].d

    @property
    def mean(self):
        """Mixture mean: the weight-averaged component means."""
        if isinstance(self.components[0], Gaussian1D):
            return float(sum(w * c.mu for w, c in zip(self.weights, self.components)))
        return np.sum(self.weights[:, None] * np.stack([c.mu for c in self.components]), axis=0)


@dataclass(frozen=True, eq=False)
class ModelSet:
    """Per-label emission models for labels 0..K-1; all share d and g."""

    models: tuple

    def __post_init__(self):
        models = tuple(self.models)
        if len(models) < 2:
            raise ValueError("a model set needs at least 2 labels")
        if len({m.d for m in models}) != 1 or len({m.g for m in models}) != 1:
            raise ValueError("all labels must share the same d and g")
        object.__setattr__(self, "models", models)

    def __getitem__(self, label: int) -> LabelModel:
        return self.models[label]

    def __len__(self) -> int:
        return len(self.models)

    @property
    def n_labels(self) -> int:
        return len(self.models)

    @property
    def d(self) -> int:
        return self.models[0].d

    @property
    def g(self) -> int:
        return self.models[0].g


def _as_points(z, d: int):
    """Normalize observations to a (n, d) matrix plus their original lead shape."""
    z = np.asarray(z, dtype=float)
    if d == 1:
        if z.ndim == 0:
            return z.reshape(1, 1), ()
        return z.reshape(-1, 1), z.shape
    if z.ndim >= 1 and z.shape[-1] == d:
        return z.reshape(-1, d), z.shape[:-1]
    raise ValueError(f"observation shape {z.shape} does not match dimensionality d={d}")


def _restore(values: np.ndarray, lead_shape) -> np.ndarray:
    if lead_shape == ():
        return float(values[0])
    return values.reshape(lead_shape)


def gaussian_pdf(z, p: Gaussian1D):
    """Scalar Gaussian density (1/sqrt(2*pi*sigma^2)) exp(-(z-mu)^2/(2 sigma^2)).

    Mathematically strictly positive; in float64 the value underflows to 0
    beyond roughly 38 standard deviations — use the log-domain functions there.
    """
    z = np.asarray(z, dtype=float)
    out = np.exp(-((z - p.mu) ** 2) / (2.0 * p.sigma**2)) / np.sqrt(2.0 * np.pi * p.sigma**2)
    return float(out) if out.ndim == 0 else out


def log_component_pdf(z, component):
    """Log-density of a single Gaussian component (scalar or multivariate)."""
    if isinstance(component, Gaussian1D):
        z = np.asarray(z, dtype=float)
        out = (
            -((z - component.mu) ** 2) / (2.0 * component.sigma**2)
            - np.log(component.sigma)
            - LOG_SQRT_2PI
        )
        return float(out) if out.ndim == 0 else out
    pts, lead = _as_points(z, component.d)
    diff = pts - component.mu
    # (z-mu)^T cov^-1 (z-mu) via the cached Cholesky factor
    sol = np.linalg.solve(component._chol, diff.T)
    maha = np.sum(sol**2, axis=0)
    out = -0.5 * maha - component._half_log_det - component.d * LOG_SQRT_2PI
    return _restore(out, lead)


def log_gmm_pdf(z, m: LabelModel):
    """Log-density of a Gaussian mixture, combined with log-sum-exp."""
    pts_shape = None
    logs = []
    with np.errstate(divide="ignore"):
        logw = np.log(m.weights)
    for w, comp in zip(logw, m.components):
        lp = np.asarray(log_component_pdf(z, comp), dtype=float)
        pts_shape = lp.shape
        logs.append(lp + w)
    stacked = np.stack(logs, axis=0)
    out = logsumexp(stacked, axis=0)
    if pts_shape == ():
        return float(out)
    return out


def gmm_pdf(z, m: LabelModel):
    """Mixture density sum_c w_c G(z; component_c)."""
    out = np.exp(np.asarray(log_gmm_pdf(z, m)))
    return float(out) if out.ndim == 0 else out


def likelihood_energy(z, m: LabelModel):
    """Per-site emission energy of observation(s) `z` under model `m`.

    Single-component scalar models use (z-mu)^2/(2 sigma^2) + ln sigma and
    single-component vector models use the corresponding half-quadratic form
    plus half the covariance log-determinant; both drop the constant
    (2*pi)^(d/2) normalizer.  Multi-component models use -ln of the full
    mixture density, which differs from the single-component convention only
    by that parameter-independent constant.
    """
    if m.g == 1:
        comp = m.components[0]
        if isinstance(comp, Gaussian1D):
            z = np.asarray(z, dtype=float)
            out = ((z - comp.mu) ** 2) / (2.0 * comp.sigma**2) + np.log(comp.sigma)
            return float(out) if out.ndim == 0 else out
        pts, lead = _as_points(z, comp.d)
        diff = pts - comp.mu
        sol = np.linalg.solve(comp._chol, diff.T)
        out = 0.5 * np.sum(sol**2, axis=0) + comp._half_log_det
        return _restore(out, lead)
    out = log_gmm_pdf(z, m)
    return -out if isinstance(out, float) else -np.asarray(out)


def regularize_covariance(cov: np.ndarray, epsilon: float) -> np.ndarray:
    """Add epsilon to the diagonal when the smallest eigenvalue falls below it.

    A symmetric matrix whose smallest eigenvalue is already >= epsilon is
    returned unchanged.  Severely indefinite inputs get a larger shift so the
    result is always positive definite.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"cov must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12):
        raise ValueError("cov must be symmetric")
    smallest = float(np.linalg.eigvalsh(cov)[0])
    if smallest >= epsilon:
        return cov
    shift = epsilon if smallest + epsilon > 0 else epsilon - smallest
    return cov + shift * np.eye(cov.shape[0])
