"""Rectangular patches encoded as paired key-points: mask construction and
patch application."""

from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch
from .images import Image


class Candidate(NamedTuple):
    """Paired key-points (i1, j1) and (i2, j2) marking opposite corners of an
    axis-aligned rectangle. Valid when 0 <= i1 < i2 < H and 0 <= j1 < j2 < W."""

    i1: int
    j1: int
    i2: int
    j2: int

    def is_valid(self, h: int, w: int) -> bool:
        return 0 <= self.i1 < self.i2 < h and 0 <= self.j1 < self.j2 < w


def make_mask(candidate, h: int, w: int) -> np.ndarray:
    """Boolean (h, w) mask covering the inclusive rectangle [i1, i2] × [j1, j2].

    Key-points that are out of range or out of order produce an all-zero mask
    rather than an error.
    """
    if h < 2 or w < 2:
        raise ValueError(f"mask dimensions must be >= 2, got {h}×{w}")
    i1, j1, i2, j2 = candidate
    mask = np.zeros((h, w), dtype=bool)
    if 0 <= i1 < i2 < h and 0 <= j1 < j2 < w:
        mask[i1 : i2 + 1, j1 : j2 + 1] = True
    return mask


def apply_patch(x: Image, x_t: Image, mask: np.ndarray) -> Image:
    """Replace the masked pixels of x with the same pixels of x_t.

    The mask broadcasts across channels: a set bit replaces the pixel in every
    channel. Inputs are left untouched.
    """
    if x.shape != x_t.shape:
        raise DimensionMismatch(f"source {x.shape} and target {x_t.shape} differ")
    if mask.shape != (x.height, x.width):
        raise DimensionMismatch(
            f"mask {mask.shape} does not match image plane {(x.height, x.width)}"
        )
    return Image(np.where(mask[np.newaxis, :, :], x_t.data, x.data))


def patch_pixel_area(mask: np.ndarray) -> int:
    """Number of set pixels; (i2-i1+1)*(j2-j1+1) for a valid candidate's mask."""
    return int(np.count_nonzero(mask))
