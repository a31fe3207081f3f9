"""Spatial location sampling for the patch-contrastive loss.

One LocationSet is drawn per optimization step and applied to both the
source and generated feature stacks, so index i in the gathered output is
query i's positive on the other stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .models import FeatureStack


@dataclass(frozen=True)
class LocationSet:
    """Per tap layer: unique flat indices into the H*W grid, plus shapes."""

    indices: tuple[np.ndarray, ...]
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.indices) != len(self.shapes):
            raise ValueError("indices/shapes length mismatch")
        for idx, (h, w) in zip(self.indices, self.shapes):
            if len(np.unique(idx)) != len(idx):
                raise ValueError("duplicate locations within a layer")
            if idx.size and (idx.min() < 0 or idx.max() >= h * w):
                raise IndexError("location out of bounds")

    def coords(self, layer: int) -> np.ndarray:
        """(n, 2) array of (row, col) pairs for one layer."""
        h, w = self.shapes[layer]
        flat = self.indices[layer]
        return np.stack([flat // w, flat % w], axis=1)


def sample_locations(
    shapes: list[tuple[int, int]], num_locations: int, rng: np.random.Generator
) -> LocationSet:
    """Uniform without-replacement draw per layer, capped at H*W."""
    if num_locations < 1:
        raise ValueError("num_locations must be >= 1")
    indices = []
    for h, w in shapes:
        if h <= 0 or w <= 0:
            raise ValueError(f"zero-sized layer {h}x{w}")
        n = min(num_locations, h * w)
        indices.append(np.sort(rng.choice(h * w, size=n, replace=False)))
    return LocationSet(tuple(indices), tuple((h, w) for h, w in shapes))


def gather(stack: FeatureStack, locs: LocationSet) -> list[torch.Tensor]:
    """Per layer: (B, n, C) channel vectors at the sampled locations."""
    if len(stack.maps) != len(locs.indices):
        raise ValueError("location set does not match stack layer count")
    out = []
    for fmap, idx, (h, w) in zip(stack.maps, locs.indices, locs.shapes):
        if tuple(fmap.shape[2:]) != (h, w):
            raise IndexError(
                f"stack layer {tuple(fmap.shape[2:])} does not match sampled shape {(h, w)}"
            )
        b, c = fmap.shape[0], fmap.shape[1]
        flat = fmap.reshape(b, c, h * w)
        sel = flat[:, :, torch.from_numpy(idx).to(fmap.device)]
        out.append(sel.permute(0, 2, 1))
    return out
