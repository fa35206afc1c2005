"""Rectangular site lattices: linear indexing and neighborhood systems."""

from __future__ import annotations

import itertools

import numpy as np

__all__ = ["NEIGHBORHOOD_OFFSETS", "Lattice", "offset_slices"]


def _build_offsets() -> dict:
    n4 = [d for d in itertools.product((-1, 0, 1), repeat=2) if sum(map(abs, d)) == 1]
    n8 = [d for d in itertools.product((-1, 0, 1), repeat=2) if any(d)]
    n6 = [d for d in itertools.product((-1, 0, 1), repeat=3) if sum(map(abs, d)) == 1]
    n26 = [d for d in itertools.product((-1, 0, 1), repeat=3) if any(d)]
    return {"n4": tuple(n4), "n8": tuple(n8), "n6": tuple(n6), "n26": tuple(n26)}


NEIGHBORHOOD_OFFSETS = _build_offsets()


def offset_slices(dims, offset):
    """Slice pairs (at, shifted) pairing each site with its neighbor at `offset`.

    grid[at] and grid[shifted] are equally shaped views such that for every
    position p in them, shifted = at + offset; sites whose neighbor would fall
    outside the grid are excluded.
    """
    at, shifted = [], []
    for extent, step in zip(dims, offset):
        if step >= 0:
            at.append(slice(0, extent - step))
            shifted.append(slice(step, extent))
        else:
            at.append(slice(-step, extent))
            shifted.append(slice(0, extent + step))
    return tuple(at), tuple(shifted)


class Lattice:
    """A 2D or 3D grid of sites with a fixed neighborhood system.

    Sites are addressed by coordinate tuples or by row-major linear indices
    (last dimension varies fastest).  Valid neighborhoods are "n4" and "n8"
    for 2D grids, "n6" and "n26" for 3D grids; out-of-bounds neighbors are
    simply absent (truncation, no wrapping or mirroring).
    """

    def __init__(self, dims, neighborhood: str | None = None):
        dims = tuple(int(n) for n in dims)
        if len(dims) not in (2, 3):
            raise ValueError(f"dims must have length 2 or 3, got {dims}")
        if any(n < 1 for n in dims):
            raise ValueError(f"every extent must be >= 1, got {dims}")
        if neighborhood is None:
            neighborhood = "n4" if len(dims) == 2 else "n6"
        neighborhood = neighborhood.lower()
        if neighborhood not in NEIGHBORHOOD_OFFSETS:
            raise ValueError(f"unknown neighborhood {neighborhood!r}")
        if len(NEIGHBORHOOD_OFFSETS[neighborhood][0]) != len(dims):
            raise ValueError(
                f"neighborhood {neighborhood!r} is invalid for a {len(dims)}D grid"
            )
        self.dims = dims
        self.neighborhood = neighborhood
        self.offsets = NEIGHBORHOOD_OFFSETS[neighborhood]

    def __repr__(self):
        return f"Lattice(dims={self.dims}, neighborhood={self.neighborhood!r})"

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    def _check_index(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n_sites:
            raise IndexError(f"site index {i} out of range [0, {self.n_sites})")
        return i

    def to_coords(self, i: int) -> tuple:
        """Coordinates of linear site index `i` (row-major)."""
        i = self._check_index(i)
        return tuple(int(c) for c in np.unravel_index(i, self.dims))

    def from_coords(self, coords) -> int:
        """Linear index of a coordinate tuple; inverse of `to_coords`."""
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.ndim:
            raise ValueError(f"expected {self.ndim} coordinates, got {coords}")
        for c, extent in zip(coords, self.dims):
            if not 0 <= c < extent:
                raise IndexError(f"coordinates {coords} outside grid {self.dims}")
        return int(np.ravel_multi_index(coords, self.dims))

    def neighbors(self, i: int) -> list:
        """Linear indices of all in-bounds neighbors of site `i`."""
        coords = self.to_coords(i)
        out = []
        for off in self.offsets:
            nb = tuple(c + d for c, d in zip(coords, off))
            if all(0 <= c < extent for c, extent in zip(nb, self.dims)):
                out.append(int(np.ravel_multi_index(nb, self.dims)))
        return out

    def neighbor_counts(self) -> np.ndarray:
        """Number of in-bounds neighbors of every site, as a grid array."""
        deg = np.zeros(self.dims, dtype=np.int64)
        for off in self.offsets:
            at, _ = offset_slices(self.dims, off)
            deg[at] += 1
        return deg

    def neighbor_label_counts(self, labels: np.ndarray, n_labels: int) -> np.ndarray:
        """Per-site counts of neighbors carrying each label.

        Returns an array of shape (n_labels, *dims) where entry [l, site]
        is the number of neighbors of `site` labeled `l`.
        """
        labels = self.check_label_field(labels)
        counts = np.zeros((n_labels,) + self.dims, dtype=np.int64)
        for off in self.offsets:
            at, shifted = offset_slices(self.dims, off)
            nb = labels[shifted]
            for l in range(n_labels):
                counts[l][at] += nb == l
        return counts

    def check_label_field(self, labels: np.ndarray, n_labels: int | None = None) -> np.ndarray:
        """Validate a per-site label array against this lattice."""
        labels = np.asarray(labels)
        if labels.shape != self.dims:
            raise ValueError(f"label field shape {labels.shape} != lattice dims {self.dims}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError(f"label field must be integer, got dtype {labels.dtype}")
        if labels.size and (labels.min() < 0 or (n_labels is not None and labels.max() >= n_labels)):
            raise ValueError("label field contains values outside the label set")
        return labels

    def flatten_sites(self, field: np.ndarray) -> np.ndarray:
        """Flatten an observation field to site-major form.

        A scalar field shaped like `dims` becomes (N,); a vector field shaped
        `dims + (d,)` becomes (N, d). Row-major site order throughout.
        """
        field = np.asarray(field)
        if field.shape == self.dims:
            return field.reshape(self.n_sites)
        if field.ndim == self.ndim + 1 and field.shape[: self.ndim] == self.dims:
            return field.reshape(self.n_sites, field.shape[-1])
        raise ValueError(
            f"field shape {field.shape} does not match lattice dims {self.dims} "
            f"(expected {self.dims} or {self.dims} + (channels,))"
        )
