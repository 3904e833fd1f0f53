"""Approximate JPEG codec: blockwise DCT quantization without entropy coding.

Every channel is coded independently with the luminance table; there is no
colour conversion or chroma subsampling. Output is not rounded to 8 bits.
"""
from __future__ import annotations

import numpy as np

# ITU-T T.81 Annex K, tables K.1 and K.2 (natural row-major order)
LUMINANCE_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMINANCE_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)

BLOCK = 8


def _dct_matrix(n: int = BLOCK) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    m[0, :] = np.sqrt(1.0 / n)
    return m


DCT8 = _dct_matrix()


def quality_scale(quality: int) -> int:
    if not (1 <= int(quality) <= 100) or int(quality) != quality:
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality}")
    quality = int(quality)
    return 5000 // quality if quality < 50 else 200 - 2 * quality


def quant_table(quality: int, base: np.ndarray = LUMINANCE_TABLE) -> np.ndarray:
    """libjpeg quality mapping: floor((t * scale + 50) / 100) clamped to [1, 255]."""
    scale = quality_scale(quality)
    table = np.floor((base * scale + 50.0) / 100.0)
    return np.clip(table, 1, 255)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def jpeg_approx(img: np.ndarray, quality: int) -> np.ndarray:
    table = quant_table(quality)
    x = np.asarray(img, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    h, w, c = x.shape
    ph = (-h) % BLOCK
    pw = (-w) % BLOCK
    padded = np.pad(x, ((0, ph), (0, pw), (0, 0)), mode="edge") * 255.0 - 128.0
    H, W = padded.shape[:2]
    blocks = padded.reshape(H // BLOCK, BLOCK, W // BLOCK, BLOCK, c)
    coeffs = np.einsum("ui,aibjc,vj->aubvc", DCT8, blocks, DCT8, optimize=True)
    q = table[None, :, None, :, None]
    coeffs = _round_half_away(coeffs / q) * q
    rec = np.einsum("ui,aubvc,vj->aibjc", DCT8, coeffs, DCT8, optimize=True)
    out = (rec.reshape(H, W, c)[:h, :w] + 128.0) / 255.0
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out
