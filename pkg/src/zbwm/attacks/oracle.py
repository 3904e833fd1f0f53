"""Oracle-guided attacks: gradient descent on a proxy score, and WIS
(iterative purification followed by patch-wise refinement under a PSNR oracle)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..imagecore import as_image, clamp, psnr
from ..records import AttackRecord
from ..transforms.resample import resize
from .handle import DetectorHandle, finish

PHASE1_CAP = 64
DEFAULT_GRID = 32
DEFAULT_BETA = 32.0


@dataclass(frozen=True)
class Purifier:
    """A deterministic image-to-image bottleneck; output keeps the input shape."""

    label: str
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, img: np.ndarray) -> np.ndarray:
        out = self.apply(img)
        if out.shape != img.shape:
            raise ValueError(f"purifier {self.label} changed shape {img.shape} -> {out.shape}")
        return out


def identity_purifier() -> Purifier:
    return Purifier("identity", lambda x: np.array(x, dtype=np.float64, copy=True))


def resample_purifier(factor: int = 2, method: str = "bicubic") -> Purifier:
    """Downsample by ``factor`` then back up: a lossy low-pass bottleneck."""

    def apply(x):
        h, w = x.shape[:2]
        small = resize(x, (h // factor, w // factor), method)
        return clamp(resize(small, (h, w), method))

    return Purifier(f"{method}{factor}x", apply)


def default_purifier() -> Purifier:
    return resample_purifier(2, "bicubic")


def oracle_gradient_attack(oracle, img_wm, q_budget: int, step: float,
                           handle: DetectorHandle, sign: float = 1.0) -> AttackRecord:
    """``q_budget`` fixed-length steps ``x <- x - sign * step * sqrt(D) * g / |g|``.

    ``step`` is the per-pixel RMS of each update. ``oracle.gradient`` supplies
    pixel gradients of a watermark-presence score; success is judged afterwards
    by the (uncounted) true detector behind ``handle``.
    """
    x0 = as_image(img_wm)
    x = x0.copy()
    scale = step * math.sqrt(x0.size)
    used = 0
    vanished = False
    if step > 0:
        for _ in range(int(q_budget)):
            g = oracle.gradient(x)
            used += 1
            gn = float(np.linalg.norm(g))
            if gn < 1e-12:
                vanished = True
                break
            x = clamp(x - sign * scale * g / gn)
    rec = finish("oracle_gradient", handle, x0, x, vanished_gradient=vanished)
    rec.queries_used = used
    return rec


def _patch_sse(diff2: np.ndarray, grid: int) -> np.ndarray:
    h, w = diff2.shape[:2]
    return diff2.reshape(grid, h // grid, grid, w // grid, -1).sum(axis=(1, 3, 4))


def wis_attack(img_wm, img_orig_ref, purifier: Purifier, handle: DetectorHandle,
               beta: float = DEFAULT_BETA, grid: int = DEFAULT_GRID, seed: int = 0,
               max_iter: int = PHASE1_CAP) -> AttackRecord:
    """Purify until the PSNR oracle against ``img_orig_ref`` drops to ``beta``,
    then paste purified patches into the previous iterate until it crosses too.

    ``grid`` is the number of patches per side. The detector behind ``handle``
    is only used to score the result.
    """
    x0 = as_image(img_wm)
    ref = as_image(img_orig_ref)
    h, w = x0.shape[:2]
    if h % grid or w % grid:
        raise ValueError(f"grid {grid} does not divide image size {h}x{w}")
    if psnr(ref, x0) <= beta:
        raise ValueError("beta must lie below the PSNR of the watermarked image")

    prev, cur = x0, x0
    iters = 0
    while psnr(ref, cur) > beta:
        if iters >= max_iter:
            return finish("wis", handle, x0, x0.copy(), aborted=True, phase1_iters=iters,
                          patches_replaced=0, fallback=False)
        prev, cur = cur, purifier(cur)
        iters += 1

    xa = prev.copy()
    sse_a = _patch_sse((xa - ref) ** 2, grid)
    sse_b = _patch_sse((cur - ref) ** 2, grid)
    limit = x0.size * 10.0 ** (-beta / 10.0)  # SSE at which PSNR equals beta
    total = float(sse_a.sum())
    ph, pw = h // grid, w // grid
    order = np.random.default_rng(seed).permutation(grid * grid)
    replaced = 0
    for idx in order:
        if total >= limit:
            break
        r, c = divmod(int(idx), grid)
        sl = (slice(r * ph, (r + 1) * ph), slice(c * pw, (c + 1) * pw))
        xa[sl] = cur[sl]
        total += float(sse_b[r, c] - sse_a[r, c])
        replaced += 1
    fallback = replaced == grid * grid
    attacked = cur.copy() if fallback else xa
    return finish("wis", handle, x0, attacked, aborted=False, phase1_iters=iters,
                  patches_replaced=replaced, fallback=fallback)
