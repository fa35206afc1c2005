"""Unsupervised image and volume segmentation with a smoothness prior.

Labels form a Markov random field over the pixel/voxel lattice; each label
emits observations through a Gaussian or Gaussian-mixture model whose
parameters are estimated jointly with the labeling by expectation-
maximization.  Works on 2D grayscale images, 2D color images, and 3D volumes.
"""

from .emission import (
    Gaussian1D,
    LabelModel,
    ModelSet,
    MvGaussian,
    SingularCovarianceError,
    gaussian_pdf,
    gmm_pdf,
    likelihood_energy,
    log_gmm_pdf,
    logsumexp,
    regularize_covariance,
)
from .gmm_fit import FitConfig, fit_gmm, responsibilities
from .hmrf import (
    EmConfig,
    LabelCollapseError,
    SegmentationResult,
    m_step,
    neighborhood_label_prior,
    posterior_step,
    run_hmrf_em,
)
from .icm import (
    EnergyRecord,
    EnergyTrace,
    MapConfig,
    clique_potential,
    count_label_disagreements,
    icm_sweep,
    map_estimate,
    prior_energy,
    total_posterior_energy,
)
from .io import dice, gaussian_blur
from .kmeans import KmeansResult, kmeans
from .lattice import Lattice
from .synth import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "EmConfig",
    "EnergyRecord",
    "EnergyTrace",
    "FitConfig",
    "Gaussian1D",
    "KmeansResult",
    "LabelCollapseError",
    "LabelModel",
    "Lattice",
    "MapConfig",
    "ModelSet",
    "MvGaussian",
    "SegmentationResult",
    "SingularCovarianceError",
    "SynthSpec",
    "clique_potential",
    "count_label_disagreements",
    "dice",
    "fit_gmm",
    "gaussian_blur",
    "gaussian_pdf",
    "generate",
    "gmm_pdf",
    "icm_sweep",
    "kmeans",
    "likelihood_energy",
    "log_gmm_pdf",
    "logsumexp",
    "m_step",
    "map_estimate",
    "neighborhood_label_prior",
    "posterior_step",
    "prior_energy",
    "regularize_covariance",
    "responsibilities",
    "run_hmrf_em",
    "total_posterior_energy",
]
