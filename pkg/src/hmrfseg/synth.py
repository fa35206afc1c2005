"""Synthetic noisy-sphere volumes with ground-truth masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SynthSpec", "generate"]


@dataclass
class SynthSpec:
    """Cubic test volume: a bright sphere on a dark background plus uniform noise.

    The sphere (closed ball, radius in voxels) sits at the geometric center
    (extent-1)/2 of the cube.  Uniform noise from [noise_low, noise_high) is
    added at every voxel, foreground and background alike.
    """

    extent: int = 50
    radius: float = 20.0
    fg_intensity: float = 100.0
    bg_intensity: float = 0.0
    noise_low: float = 0.0
    noise_high: float = 120.0
    seed: int = 0

    def __post_init__(self):
        if self.extent < 1:
            raise ValueError(f"extent must be >= 1, got {self.extent}")
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if not self.radius < self.extent / 2 + 1:
            raise ValueError(f"radius {self.radius} too large for extent {self.extent}")
        if self.noise_low > self.noise_high:
            raise ValueError("noise_low must not exceed noise_high")


def generate(spec: SynthSpec):
    """Build (volume, truth) grids of shape (extent, extent, extent).

    truth is 1 inside the sphere and 0 outside; volume is the two base
    intensities plus one uniform draw per voxel.  Noise comes from numpy's
    PCG64 generator seeded with `spec.seed`, drawn in a single row-major
    block, so identical specs yield bit-identical volumes on any platform.
    """
    e = spec.extent
    center = (e - 1) / 2.0
    axis = np.arange(e, dtype=float) - center
    dist_sq = axis[:, None, None] ** 2 + axis[None, :, None] ** 2 + axis[None, None, :] ** 2
    truth = (dist_sq <= spec.radius**2).astype(np.uint8)

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    base = np.where(truth == 1, spec.fg_intensity, spec.bg_intensity)
    volume = base + rng.uniform(spec.noise_low, spec.noise_high, size=(e, e, e))
    return volume, truth
