"""Zero-bit detection on top of a multi-bit decoder.

A decoder maps an image to an M-vector. Comparing the whitened output with an
antipodally modulated message key gives a single hypercone detector.

The built-in ``SurrogateDecoder`` stands in for a neural decoder. Each of its
M orthonormal rows is a random combination of a disjoint group of 2-D DCT
coefficients (all channels, DC excluded), the groups being contiguous in
radial frequency. Most rows share a narrow low-frequency annulus and so have
similar natural variance; a few rows sit in a mid band where natural images
carry far less energy. Whitening gives those few rows a large gain. The
embedder spreads its power over all rows, while an attacker can spend it on
the high-gain rows alone, which is the source of the gap between embedding
distortion and minimal removal distortion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericalError
from .hypercone import PValue, abs_cosine, pfa_from_cosine
from .imagecore import as_image, clamp, embed_at_psnr
from .transforms.dct import dct2d, idct2d
from .transforms.resample import resize

DEFAULT_M = 256
LOW_BAND = (0.003, 0.02)
MID_BAND = (0.05, 0.1)
EIG_FLOOR = 1e-6


def antipodal_modulate(bits) -> np.ndarray:
    b = np.asarray(bits).ravel()
    if b.size == 0:
        raise ValueError("need at least one bit")
    if not np.all((b == 0) | (b == 1)):
        raise ValueError("bits must be 0 or 1")
    return np.where(b == 1, 1.0, -1.0) / math.sqrt(b.size)


@dataclass(frozen=True)
class MessageKey:
    bits: np.ndarray

    @property
    def m(self) -> int:
        return int(self.bits.size)

    @property
    def modulated(self) -> np.ndarray:
        return antipodal_modulate(self.bits)

    @classmethod
    def random(cls, rng: np.random.Generator, m: int) -> "MessageKey":
        return cls(rng.integers(0, 2, size=m).astype(np.uint8))


@dataclass(frozen=True)
class Whitener:
    mean: np.ndarray
    transform: np.ndarray

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y) - self.mean) @ self.transform.T

    def save(self, path) -> None:
        np.savez(path, mean=self.mean, transform=self.transform)

    @classmethod
    def load(cls, path) -> "Whitener":
        with np.load(path) as f:
            return cls(f["mean"], f["transform"])

    @classmethod
    def identity(cls, m: int) -> "Whitener":
        return cls(np.zeros(m), np.eye(m))


def fit_whitener(samples) -> Whitener:
    """Mean-centre, then symmetric inverse square root of the covariance."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("samples must be a (count, M) array")
    n, m = x.shape
    if n < 10 * m:
        raise ValueError(f"need at least {10 * m} samples for M={m}, got {n}")
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False)
    vals, vecs = np.linalg.eigh(cov)
    top = vals.max()
    if not top > 0:
        raise NumericalError("sample covariance is zero")
    vals = np.maximum(vals, EIG_FLOOR * top)
    transform = (vecs / np.sqrt(vals)) @ vecs.T
    return Whitener(mean, transform)


def _radial_positions(h: int, w: int) -> np.ndarray:
    """Flat (H, W) positions sorted by normalized radial frequency, DC dropped."""
    u, v = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    rad = np.sqrt(u * u + v * v).ravel()
    order = np.argsort(rad, kind="stable")
    return order[rad[order] > 0]


def default_layout(m: int) -> tuple:
    """Most rows in a narrow low-frequency annulus, a few in a mid band."""
    n_mid = max(1, m // 32)
    return ((m - n_mid, LOW_BAND), (n_mid, MID_BAND))


def band_groups(h: int, w: int, layout) -> list[np.ndarray]:
    """Disjoint position groups: each ``(rows, (lo, hi))`` segment splits the
    rank-quantile range ``[lo, hi)`` of radially sorted positions evenly."""
    order = _radial_positions(h, w)
    total = order.size
    groups = []
    for rows, (lo, hi) in layout:
        if not (0 <= lo < hi <= 1):
            raise ValueError(f"bad band {(lo, hi)}")
        edges = np.linspace(lo * total, hi * total, rows + 1).astype(np.int64)
        if np.any(np.diff(edges) < 1):
            raise DimensionError(f"image too small for {rows} groups in band {(lo, hi)}")
        groups.extend(order[edges[i]:edges[i + 1]] for i in range(rows))
    return groups


class SurrogateDecoder:
    """Linear (optionally tanh-squashed) projection of the image DCT onto M rows."""

    name = "surrogate"

    def __init__(self, seed: int = 0, m: int = DEFAULT_M, shape=(1024, 1024, 3),
                 layout=None, nonlinear: bool = False, tanh_scale: float = 10.0):
        self.seed = int(seed)
        self.m = int(m)
        self.shape = tuple(shape)
        self.layout = tuple(layout) if layout is not None else default_layout(self.m)
        if sum(n for n, _ in self.layout) != self.m:
            raise ValueError("layout rows must sum to M")
        self.nonlinear = bool(nonlinear)
        self.tanh_scale = float(tanh_scale)
        h, w, c = self.shape
        groups = band_groups(h, w, self.layout)
        rng = np.random.default_rng(self.seed)
        # every channel of every position in a group feeds that group's row
        self.index = np.concatenate([(g[:, None] * c + np.arange(c)).ravel() for g in groups])
        self.row = np.concatenate([np.full(g.size * c, i) for i, g in enumerate(groups)])
        wt = rng.standard_normal(self.index.size)
        norms = np.sqrt(np.bincount(self.row, weights=wt * wt, minlength=self.m))
        self.weight = wt / norms[self.row]

    def _check(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != self.shape:
            raise DimensionError(f"decoder expects {self.shape}, got {img.shape}")
        return img

    def linear(self, img) -> np.ndarray:
        coeffs = dct2d(self._check(img)).ravel()
        return self.linear_from_dct(coeffs)

    def linear_from_dct(self, coeffs: np.ndarray) -> np.ndarray:
        return np.bincount(self.row, weights=coeffs[self.index] * self.weight, minlength=self.m)

    def squash(self, y: np.ndarray) -> np.ndarray:
        if self.nonlinear:
            return self.tanh_scale * np.tanh(y / self.tanh_scale)
        return y

    def decode(self, img) -> np.ndarray:
        return self.squash(self.linear(img))

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        """Pixel image P^T v."""
        coeffs = np.zeros(math.prod(self.shape))
        coeffs[self.index] = np.asarray(v)[self.row] * self.weight
        return idct2d(coeffs.reshape(self.shape))

    def vjp(self, img, v: np.ndarray) -> np.ndarray:
        """Pixel gradient of ``v . decode(img)``."""
        if self.nonlinear:
            y = self.linear(img) / self.tanh_scale
            v = v / np.cosh(y) ** 2
        return self.adjoint(v)

    def dense(self) -> np.ndarray:
        """Materialize the M x D projection (small shapes only)."""
        p = np.zeros((self.m, math.prod(self.shape)))
        basis = np.eye(math.prod(self.shape)).reshape((-1,) + self.shape)
        for j, e in enumerate(basis):
            p[:, j] = self.linear(e)
        return p


def decode(dec, img) -> np.ndarray:
    return np.asarray(dec.decode(img), dtype=np.float64)


def zb_statistic(dec, whitener: Whitener, key: MessageKey, img) -> float:
    return abs_cosine(whitener(decode(dec, img)), key.modulated)


def zb_detect(dec, whitener: Whitener, key: MessageKey, img) -> PValue:
    return pfa_from_cosine(zb_statistic(dec, whitener, key, img), key.m)


def zb_embed(dec: SurrogateDecoder, key: MessageKey, img, target_psnr: float = 42.0) -> np.ndarray:
    img = as_image(img)
    stego = img + dec.adjoint(key.modulated)
    return embed_at_psnr(img, stego, target_psnr)


class ZeroBitDetector:
    """Hypercone detector assembled from a decoder, a whitener and a message key."""

    name = "zerobit"

    def __init__(self, dec, whitener: Whitener, key: MessageKey):
        if key.m != whitener.mean.size:
            raise DimensionError("key length and whitener dimension differ")
        self.dec = dec
        self.whitener = whitener
        self.key = key

    @property
    def m(self) -> int:
        return self.key.m

    def score(self, img) -> float:
        return zb_statistic(self.dec, self.whitener, self.key, img)

    def detect(self, img) -> PValue:
        return zb_detect(self.dec, self.whitener, self.key, img)

    def embed(self, img, target_psnr: float = 42.0) -> np.ndarray:
        return zb_embed(self.dec, self.key, img, target_psnr)

    def gradient(self, img) -> np.ndarray:
        """Pixel gradient of the absolute cosine statistic."""
        k = self.key.modulated
        z = self.whitener(decode(self.dec, img))
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return np.zeros(np.shape(img))
        dot = float(z @ k)
        s = 1.0 if dot >= 0 else -1.0
        gz = s * k / nz - (abs(dot) / nz) * z / (nz * nz)
        return self.dec.vjp(img, self.whitener.transform.T @ gz)


# --- whitener training data -------------------------------------------------

def _dihedral(coeffs: np.ndarray, k: int) -> np.ndarray:
    """DCT coefficients of a flipped/transposed image, computed in the DCT domain."""
    h, w = coeffs.shape[:2]
    out = coeffs
    if k & 1:
        out = out * ((-1.0) ** np.arange(h))[:, None, None]
    if k & 2:
        out = out * ((-1.0) ** np.arange(w))[None, :, None]
    if k & 4 and h == w:
        out = out.transpose(1, 0, 2)
    return out


_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def _variant_gather(shape, index: np.ndarray, k: int, perm) -> tuple[np.ndarray, np.ndarray]:
    """Source indices and signs so that ``sign * coeffs.ravel()[src]`` equals
    ``_dihedral(coeffs, k)[..., perm].ravel()[index]``."""
    h, w, c = shape
    u, v, ch = np.unravel_index(index, shape)
    if k & 4 and h == w:
        u, v = v, u
    sign = np.ones(index.size)
    if k & 1:
        sign = np.where(u % 2 == 1, -sign, sign)
    if k & 2:
        sign = np.where(v % 2 == 1, -sign, sign)
    src = np.ravel_multi_index((u, v, np.asarray(perm)[ch]), shape)
    return src, sign


def augmented_decodes(dec: SurrogateDecoder, images, count: int, rng: np.random.Generator,
                      min_crop: float = 0.6) -> np.ndarray:
    """``count`` decodes of randomly cropped, flipped, channel-shuffled and
    gain-jittered versions of ``images``.

    Each random crop costs one DCT; flips, transposes and channel permutations
    are applied to its coefficients directly.
    """
    images = list(images)
    if not images:
        raise ValueError("need at least one image")
    h, w, c = dec.shape
    variants = [(d, p) for d in range(8) for p in (range(6) if c == 3 else [0])]
    out = []
    i = 0
    while len(out) < count:
        img = images[i % len(images)]
        i += 1
        frac = rng.uniform(min_crop, 1.0)
        ch = max(8, int(round(img.shape[0] * frac)))
        cw = max(8, int(round(img.shape[1] * frac)))
        top = rng.integers(0, img.shape[0] - ch + 1)
        left = rng.integers(0, img.shape[1] - cw + 1)
        crop = img[top:top + ch, left:left + cw]
        crop = clamp(resize(crop, (h, w), method="bilinear")) if crop.shape[:2] != (h, w) else crop
        coeffs = dct2d(crop).ravel()
        take = rng.choice(len(variants), size=min(len(variants), count - len(out)), replace=False)
        for t in take:
            d, p = variants[t]
            src, sign = _variant_gather(dec.shape, dec.index, d, _PERMS[p] if c == 3 else (0,))
            gain = rng.uniform(0.8, 1.2)
            y = np.bincount(dec.row, weights=gain * sign * coeffs[src] * dec.weight, minlength=dec.m)
            out.append(dec.squash(y))
    return np.asarray(out)


def pixel_augmented_decodes(decode_fn, images, count: int, rng: np.random.Generator,
                            min_crop: float = 0.6) -> np.ndarray:
    """Slow path of ``augmented_decodes`` for opaque decoders: every sample is
    a full decode of a cropped, flipped, channel-shuffled, gain-jittered image."""
    images = [as_image(x) for x in images]
    if not images:
        raise ValueError("need at least one image")
    out = []
    for i in range(count):
        img = images[i % len(images)]
        h, w = img.shape[:2]
        frac = rng.uniform(min_crop, 1.0)
        ch, cw = max(8, int(round(h * frac))), max(8, int(round(w * frac)))
        top = rng.integers(0, h - ch + 1)
        left = rng.integers(0, w - cw + 1)
        x = clamp(resize(img[top:top + ch, left:left + cw], (h, w), method="bilinear"))
        if rng.random() < 0.5:
            x = x[:, ::-1]
        if rng.random() < 0.5:
            x = x[::-1]
        if x.shape[2] == 3:
            x = x[:, :, rng.permutation(3)]
        x = clamp(x * rng.uniform(0.8, 1.2))
        out.append(np.asarray(decode_fn(np.ascontiguousarray(x)), dtype=np.float64))
    return np.asarray(out)
