"""Decision-only boundary attack with semicircular search (CGBA style).

The attacker only learns detected / not detected. After locating a first
undetected point on the segment toward a blurred copy (or, failing that, a
low-frequency noise image), every iteration
estimates the boundary normal from a couple of random probes restricted to a
low-frequency DCT subspace, then slides along the semicircle whose diameter
joins the watermarked image to the current boundary point. Points on that
circle get closer to the watermarked image as the angle grows, so the largest
still-undetected angle (found by bisection) is accepted.
"""
from __future__ import annotations

import math

import numpy as np

from ..imagecore import as_image, clamp, psnr
from ..records import AttackRecord
from ..transforms.dct import FrequencyMask, build_lowfreq_mask
from ..transforms.resample import gaussian_blur
from .handle import DetectorHandle, finish

DEFAULT_QUERIES = 2000
MASK_FRACTION = 0.0125
BLUR_SIGMA = 8.0
INIT_BISECT = 10
NORMAL_QUERIES = 2
ARC_BISECT = 6
PROBE_SCALE = 0.01
NOISE_TRIES = 4
NOISE_STD = 0.25  # per-pixel std of fallback noise images


def _failure(handle: DetectorHandle, x0: np.ndarray, **extras) -> AttackRecord:
    return finish("cgba", handle, x0, x0.copy(), **extras)


def _init_targets(x0, mask, rng, blur_sigma):
    yield gaussian_blur(x0, blur_sigma)
    # fallback: fresh low-frequency noise images around mid grey. Noise added to
    # x0 instead keeps the sign pattern of x0 under clamping, and a watermark
    # living in the lowest frequencies survives that at any strength.
    scale = NOISE_STD * math.sqrt(x0.size)
    for _ in range(NOISE_TRIES):
        yield clamp(0.5 + scale * mask.random_direction(rng, x0.shape[2]))


def _initial_boundary(handle, x0, mask, rng, blur_sigma, steps):
    """Undetected point on a segment from ``x0``, or ``None``."""
    for target in _init_targets(x0, mask, rng, blur_sigma):
        if handle.remaining() < 1:
            return None
        if handle.is_detected(target):
            continue
        lo, hi = 0.0, 1.0
        for _ in range(steps):
            if handle.remaining() < 1:
                break
            mid = 0.5 * (lo + hi)
            if handle.is_detected(x0 + mid * (target - x0)):
                lo = mid
            else:
                hi = mid
        return x0 + hi * (target - x0)
    return None


def cgba_attack(handle: DetectorHandle, img_wm, q_budget: int = DEFAULT_QUERIES,
                mask: FrequencyMask | None = None, seed: int = 0,
                blur_sigma: float = BLUR_SIGMA, init_steps: int = INIT_BISECT,
                normal_queries: int = NORMAL_QUERIES, arc_steps: int = ARC_BISECT,
                probe_scale: float = PROBE_SCALE) -> AttackRecord:
    x0 = as_image(img_wm)
    h, w, c = x0.shape
    if mask is None:
        mask = build_lowfreq_mask(h, w, MASK_FRACTION)
    rng = np.random.default_rng(seed)
    handle.budget = q_budget if handle.budget is None else min(handle.budget, q_budget)

    xb = _initial_boundary(handle, x0, mask, rng, blur_sigma, init_steps)
    if xb is None:
        return _failure(handle, x0, init_failed=True)
    init_queries = handle.queries
    init_psnr = psnr(x0, xb)
    radius = float(np.linalg.norm(xb - x0))
    norms = [radius]
    theta_scale = math.pi / 32

    def on_arc(u, v, r, th):
        return clamp(x0 + r * math.cos(th) * (math.cos(th) * u + math.sin(th) * v))

    while handle.remaining() >= normal_queries + 1:
        u = (xb - x0) / radius
        eta = np.zeros_like(x0)
        delta = probe_scale * radius
        for _ in range(normal_queries):
            z = mask.random_direction(rng, c)
            # +1 when the probe stays undetected: that side is "outward"
            sign = -1.0 if handle.is_detected(clamp(xb + delta * z)) else 1.0
            eta += sign * z
        v = eta - float(np.sum(eta * u)) * u
        vn = float(np.linalg.norm(v))
        if vn == 0.0:
            continue
        v /= vn

        # grow the trial angle while it stays undetected, then bisect
        lo, hi = 0.0, None
        th = theta_scale
        while handle.remaining() >= 1 and th < math.pi / 2:
            if handle.is_detected(on_arc(u, v, radius, th)):
                hi = th
                break
            lo = th
            th = min(2 * th, math.pi / 2)
        if hi is None and lo == 0.0:
            break
        if hi is None:
            hi = math.pi / 2
        for _ in range(arc_steps):
            if handle.remaining() < 1:
                break
            mid = 0.5 * (lo + hi)
            if handle.is_detected(on_arc(u, v, radius, mid)):
                hi = mid
            else:
                lo = mid
        # next iteration starts near the last scale that worked
        theta_scale = max(lo, hi / 4, 1e-6)
        if lo > 0.0:
            cand = on_arc(u, v, radius, lo)
            new_radius = float(np.linalg.norm(cand - x0))
            if new_radius < radius:
                xb, radius = cand, new_radius
                norms.append(radius)

    return finish("cgba", handle, x0, xb, init_psnr=init_psnr,
                  init_queries=init_queries, accepted_norms=norms)
