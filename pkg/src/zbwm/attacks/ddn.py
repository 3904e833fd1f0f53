"""Decoupled direction and norm (DDN) white-box attack on a detector score."""
from __future__ import annotations

import numpy as np

from ..imagecore import as_image, clamp, perturbation_norm_for_psnr
from ..records import AttackRecord
from .handle import DetectorHandle, GradientUnavailable, finish

DEFAULT_QUERIES = 250
INIT_PSNR = 42.0
GAMMA = 0.05
STEP_FRACTION = 0.1


def ddn_attack(handle: DetectorHandle, img_wm, q_budget: int = DEFAULT_QUERIES,
               gamma: float = GAMMA, step_fraction: float = STEP_FRACTION,
               init_psnr: float = INIT_PSNR) -> AttackRecord:
    """Minimal-norm removal: each query returns the p-value and score gradient
    at the current point. The sphere radius shrinks by ``1 - gamma`` when the
    current point is undetected and grows by ``1 + gamma`` otherwise; the
    perturbation moves down the score gradient by ``step_fraction`` of the
    radius and is projected back to the sphere.
    """
    if not handle.has_gradient:
        raise GradientUnavailable("ddn_attack needs a white-box detector")
    x0 = as_image(img_wm)
    eps = perturbation_norm_for_psnr(x0.size, init_psnr)
    delta = np.zeros_like(x0)
    best = None
    best_norm = np.inf
    best_p = None
    norms = []
    for _ in range(int(q_budget)):
        x = clamp(x0 + delta)
        p, g = handle.gradient(x)
        norm = float(np.linalg.norm(x - x0))
        if not p.detected(handle.alpha):
            if norm < best_norm:
                best, best_norm, best_p = x, norm, p
                norms.append(norm)
            eps *= 1.0 - gamma
        else:
            eps *= 1.0 + gamma
        gn = float(np.linalg.norm(g))
        if gn < 1e-300:
            break
        delta = delta - (step_fraction * eps / gn) * g
        delta *= eps / max(float(np.linalg.norm(delta)), 1e-300)
    if best is None:
        return finish("ddn", handle, x0, x0.copy())
    return finish("ddn", handle, x0, best, best_p, accepted_norms=norms)
