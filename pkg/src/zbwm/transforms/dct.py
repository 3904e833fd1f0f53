"""Orthonormal 2-D DCT and low-frequency DCT subspaces."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft


def dct2d(x: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT over the first two axes."""
    return sfft.dctn(np.asarray(x, dtype=np.float64), type=2, norm="ortho", axes=(0, 1))


def idct2d(c: np.ndarray) -> np.ndarray:
    return sfft.idctn(np.asarray(c, dtype=np.float64), type=2, norm="ortho", axes=(0, 1))


def zigzag_order(height: int, width: int) -> np.ndarray:
    """Flat indices of an ``height x width`` grid in JPEG zig-zag order."""
    r, c = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    r = r.ravel()
    c = c.ravel()
    s = r + c
    # odd anti-diagonals run down the rows, even ones run up
    secondary = np.where(s % 2 == 1, r, -r)
    return np.lexsort((secondary, s))


@dataclass(frozen=True)
class FrequencyMask:
    """The lowest-frequency DCT coefficients (zig-zag order, DC included)."""

    height: int
    width: int
    fraction: float
    indices: np.ndarray

    @property
    def count(self) -> int:
        return int(self.indices.size)

    def as_bool(self) -> np.ndarray:
        m = np.zeros(self.height * self.width, dtype=bool)
        m[self.indices] = True
        return m.reshape(self.height, self.width)

    def _corner(self) -> tuple[int, int]:
        rows, cols = np.unravel_index(self.indices, (self.height, self.width))
        return int(rows.max()) + 1, int(cols.max()) + 1

    def project(self, img: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a plane or image onto the masked subspace."""
        coeffs = dct2d(img)
        keep = self.as_bool()
        if coeffs.ndim == 3:
            keep = keep[:, :, None]
        return idct2d(np.where(keep, coeffs, 0.0))

    def random_direction(self, rng: np.random.Generator, channels: int = 1) -> np.ndarray:
        """Unit-norm pixel-domain vector drawn isotropically inside the subspace."""
        coeffs = np.zeros((self.height, self.width, channels))
        rows, cols = np.unravel_index(self.indices, (self.height, self.width))
        coeffs[rows, cols, :] = rng.standard_normal((self.count, channels))
        coeffs /= np.linalg.norm(coeffs)
        # only the low corner is populated; inverting the full grid is still cheaper
        # than a dense partial-basis product at these sizes
        return idct2d(coeffs)


def build_lowfreq_mask(height: int, width: int, fraction: float) -> FrequencyMask:
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    total = height * width
    keep = max(1, math.ceil(round(fraction * total, 9)))
    order = zigzag_order(height, width)
    return FrequencyMask(height, width, float(fraction), np.sort(order[:keep]))
