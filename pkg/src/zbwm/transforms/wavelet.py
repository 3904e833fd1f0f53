"""Orthogonal periodized 2-D discrete wavelet transform.

Each analysis stage is a pair of sparse ``(n/2, n)`` matrices (lowpass and
highpass) with circular boundary handling. Because the filter bank is
orthogonal the synthesis stage is the transpose, which gives perfect
reconstruction and exact coefficient-count conservation for dyadic sizes.

Band layout per level follows the usual toolbox convention: a triplet
``(LH, HL, HH)`` where ``LH`` is highpass along axis 0 and lowpass along
axis 1 (horizontal edges), ``HL`` the converse and ``HH`` highpass on both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionError

# Daubechies wavelet with 9 vanishing moments (18 taps), decomposition
# lowpass. Values from Daubechies, "Ten Lectures on Wavelets" (1992) as
# tabulated by PyWavelets under the name "db9".
DB9_DEC_LO = np.array([
    3.93473203162716e-05,
    -0.0002519631889427101,
    0.00023038576352319597,
    0.0018476468830562265,
    -0.00428150368246343,
    -0.004723204757751397,
    0.022361662123679096,
    0.00025094711483145197,
    -0.06763282906132997,
    0.03072568147933338,
    0.14854074933810638,
    -0.09684078322297646,
    -0.2932737832791749,
    0.13319738582500756,
    0.6572880780513005,
    0.6048231236901112,
    0.24383467461259034,
    0.038077947363878345,
])

HAAR_DEC_LO = np.array([1.0, 1.0]) / np.sqrt(2.0)

WAVELETS = {"db9": DB9_DEC_LO, "haar": HAAR_DEC_LO}
DEFAULT_WAVELET = "db9"
BAND_NAMES = ("LH", "HL", "HH")


def quadrature_mirror(h: np.ndarray) -> np.ndarray:
    n = len(h)
    return np.array([(-1) ** (k + 1) * h[n - 1 - k] for k in range(n)])


@lru_cache(maxsize=64)
def analysis_matrices(n: int, wavelet: str = DEFAULT_WAVELET) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Periodized one-level analysis operators for a length-``n`` signal."""
    if n < 2 or n % 2:
        raise DimensionError(f"signal length must be even and >= 2, got {n}")
    h = WAVELETS[wavelet]
    g = quadrature_mirror(h)
    taps = len(h)
    half = n // 2
    rows = np.repeat(np.arange(half), taps)
    cols = ((2 * np.arange(half)[:, None] + taps // 2 - np.arange(taps)[None, :]) % n).ravel()
    # duplicate (row, col) pairs are summed, which is the wrap-around for n < taps
    lo = sp.csr_matrix((np.tile(h, half), (rows, cols)), shape=(half, n))
    hi = sp.csr_matrix((np.tile(g, half), (rows, cols)), shape=(half, n))
    lo.sum_duplicates()
    hi.sum_duplicates()
    return lo, hi


def _along0(mat, a: np.ndarray) -> np.ndarray:
    flat = a.reshape(a.shape[0], -1)
    out = mat @ flat
    return np.asarray(out).reshape((mat.shape[0],) + a.shape[1:])


def _along1(mat, a: np.ndarray) -> np.ndarray:
    moved = np.moveaxis(a, 1, 0)
    return np.moveaxis(_along0(mat, moved), 0, 1)


def _check_dyadic(shape, levels: int) -> None:
    if levels < 1:
        raise DimensionError("levels must be >= 1")
    step = 2 ** levels
    if shape[0] % step or shape[1] % step:
        raise DimensionError(f"dimensions {shape[:2]} not divisible by 2^{levels}")


@dataclass
class WaveletPyramid:
    """Multilevel coefficients; ``details`` runs from coarsest to finest."""

    approx: np.ndarray
    details: list = field(default_factory=list)
    wavelet: str = DEFAULT_WAVELET

    @property
    def levels(self) -> int:
        return len(self.details)

    def bands(self):
        yield self.approx
        for triplet in self.details:
            yield from triplet

    def coefficient_count(self) -> int:
        return sum(b.size for b in self.bands())

    def scan(self) -> np.ndarray:
        """Linearize: approximation, then each detail triplet coarsest first, row-major."""
        return np.concatenate([b.ravel() for b in self.bands()])

    def detail_scan(self) -> np.ndarray:
        return np.concatenate([b.ravel() for triplet in self.details for b in triplet])

    def from_scan(self, vec: np.ndarray) -> "WaveletPyramid":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.coefficient_count():
            raise DimensionError("scan vector length does not match pyramid")
        pos = 0
        arrays = []
        for b in self.bands():
            arrays.append(vec[pos:pos + b.size].reshape(b.shape))
            pos += b.size
        approx = arrays[0]
        details = [tuple(arrays[1 + 3 * i: 4 + 3 * i]) for i in range(self.levels)]
        return WaveletPyramid(approx, details, self.wavelet)

    def __add__(self, other: "WaveletPyramid") -> "WaveletPyramid":
        return self.from_scan(self.scan() + other.scan())

    def __mul__(self, k: float) -> "WaveletPyramid":
        return self.from_scan(self.scan() * k)

    __rmul__ = __mul__


def dwt_forward(img: np.ndarray, levels: int = 3, wavelet: str = DEFAULT_WAVELET) -> WaveletPyramid:
    """Multilevel 2-D DWT of a plane ``(H, W)`` or image ``(H, W, C)``."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise DimensionError(f"expected a plane or image, got ndim={a.ndim}")
    _check_dyadic(a.shape, levels)
    details = []
    for _ in range(levels):
        lo0, hi0 = analysis_matrices(a.shape[0], wavelet)
        lo1, hi1 = analysis_matrices(a.shape[1], wavelet)
        low = _along0(lo0, a)
        high = _along0(hi0, a)
        details.append((_along1(lo1, high), _along1(hi1, low), _along1(hi1, high)))
        a = _along1(lo1, low)
    details.reverse()
    return WaveletPyramid(a, details, wavelet)


def dwt_inverse(pyr: WaveletPyramid) -> np.ndarray:
    a = np.asarray(pyr.approx, dtype=np.float64)
    for lh, hl, hh in pyr.details:
        if not (lh.shape == hl.shape == hh.shape == a.shape):
            raise DimensionError("malformed pyramid: band shapes disagree within a level")
        lo0, hi0 = analysis_matrices(2 * a.shape[0], pyr.wavelet)
        lo1, hi1 = analysis_matrices(2 * a.shape[1], pyr.wavelet)
        low = _along1(lo1.T, a) + _along1(hi1.T, hl)
        high = _along1(lo1.T, lh) + _along1(hi1.T, hh)
        a = _along0(lo0.T, low) + _along0(hi0.T, high)
    return a


def detail_band_shapes(shape, levels: int) -> list[tuple[int, int]]:
    """Band shapes in detail scan order (coarsest level first, three per level)."""
    out = []
    for level in range(levels, 0, -1):
        s = (shape[0] >> level, shape[1] >> level)
        out.extend([s, s, s])
    return out


def detail_count(shape, levels: int) -> int:
    return sum(h * w for h, w in detail_band_shapes(shape, levels))


def detail_prefix(plane: np.ndarray, levels: int, count: int, wavelet: str = DEFAULT_WAVELET) -> np.ndarray:
    """First ``count`` detail coefficients of a plane in scan order.

    Equivalent to ``dwt_forward(plane, levels).detail_scan()[:count]`` but only
    the bands (and band rows) that contribute are computed.
    """
    plane = np.asarray(plane, dtype=np.float64)
    _check_dyadic(plane.shape, levels)
    if count > detail_count(plane.shape, levels):
        raise DimensionError("requested more detail coefficients than available")
    need = _band_needs(plane.shape, levels, count)
    # approximations a_1..a_levels; details of level l need a_{l-1}
    approx = [plane]
    for _ in range(levels - 1):
        a = approx[-1]
        lo0, _ = analysis_matrices(a.shape[0], wavelet)
        lo1, _ = analysis_matrices(a.shape[1], wavelet)
        approx.append(_along1(lo1, _along0(lo0, a)))
    parts = []
    for level, band, rows in need:
        a = approx[level - 1]
        lo0, hi0 = analysis_matrices(a.shape[0], wavelet)
        lo1, hi1 = analysis_matrices(a.shape[1], wavelet)
        first = hi0 if band in (0, 2) else lo0
        second = lo1 if band == 0 else hi1
        block = _along1(second, _along0(first[:rows], a))
        parts.append(block.ravel())
    return np.concatenate(parts)[:count]


def detail_prefix_adjoint(vec: np.ndarray, shape, levels: int, wavelet: str = DEFAULT_WAVELET) -> np.ndarray:
    """Plane whose ``detail_prefix`` is ``vec`` and which has no other coefficients."""
    vec = np.asarray(vec, dtype=np.float64)
    _check_dyadic(shape, levels)
    need = _band_needs(shape, levels, vec.size)
    bands: dict[tuple[int, int], np.ndarray] = {}
    pos = 0
    for level, band, rows in need:
        h, w = shape[0] >> level, shape[1] >> level
        block = np.zeros((h, w))
        take = min(rows * w, vec.size - pos)
        block.ravel()[:take] = vec[pos:pos + take]
        pos += take
        bands[(level, band)] = block
    a = None
    for level in range(levels, 0, -1):
        h, w = shape[0] >> level, shape[1] >> level
        lo0, hi0 = analysis_matrices(2 * h, wavelet)
        lo1, hi1 = analysis_matrices(2 * w, wavelet)
        low = None if a is None else _along1(lo1.T, a)
        high = None
        if (level, 0) in bands:
            high = _along1(lo1.T, bands[(level, 0)])
        if (level, 1) in bands:
            t = _along1(hi1.T, bands[(level, 1)])
            low = t if low is None else low + t
        if (level, 2) in bands:
            t = _along1(hi1.T, bands[(level, 2)])
            high = t if high is None else high + t
        out = None
        if low is not None:
            out = _along0(lo0.T, low)
        if high is not None:
            t = _along0(hi0.T, high)
            out = t if out is None else out + t
        a = out
    return a if a is not None else np.zeros(shape[:2])


def _band_needs(shape, levels: int, count: int) -> list[tuple[int, int, int]]:
    """(level, band index, rows needed) for every band touched by a prefix."""
    need = []
    remaining = count
    for level in range(levels, 0, -1):
        h, w = shape[0] >> level, shape[1] >> level
        for band in range(3):
            if remaining <= 0:
                return need
            rows = min(h, -(-remaining // w))
            need.append((level, band, rows))
            remaining -= h * w
    return need
