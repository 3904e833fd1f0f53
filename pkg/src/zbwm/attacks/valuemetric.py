"""Blind pixel-value attacks: JPEG, gamma, sharpening, repeated purification."""
from __future__ import annotations

import numpy as np

from ..imagecore import as_image, clamp
from ..records import AttackRecord
from ..transforms.jpeg import jpeg_approx
from ..transforms.resample import gaussian3x3
from .handle import DetectorHandle, finish
from .oracle import Purifier


def gamma(img: np.ndarray, g: float) -> np.ndarray:
    if not g > 0:
        raise ValueError(f"gamma must be positive, got {g}")
    return np.power(np.clip(img, 0.0, 1.0), g)


def sharpen(img: np.ndarray, amount: float) -> np.ndarray:
    """Unsharp mask with a 3x3 Gaussian."""
    if amount < 0:
        raise ValueError(f"sharpen amount must be >= 0, got {amount}")
    if amount == 0:
        return np.array(img, dtype=np.float64, copy=True)
    return clamp(img + amount * (img - gaussian3x3(img)))


def purify(img: np.ndarray, purifier: Purifier, n_steps: int) -> np.ndarray:
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    out = np.array(img, dtype=np.float64, copy=True)
    for _ in range(n_steps):
        out = purifier(out)
    return out


def apply_op(img: np.ndarray, op: str, param, purifier: Purifier | None = None) -> np.ndarray:
    img = as_image(img)
    if op == "jpeg":
        return jpeg_approx(img, int(param))
    if op == "gamma":
        return gamma(img, float(param))
    if op == "sharpen":
        return sharpen(img, float(param))
    if op == "purify":
        if purifier is None:
            raise ValueError("purify needs a purifier")
        return purify(img, purifier, int(param))
    if op == "identity":
        return img.copy()
    raise ValueError(f"unknown valuemetric op {op!r}")


def valuemetric(handle: DetectorHandle, img_wm, op: str, param=None,
                purifier: Purifier | None = None) -> AttackRecord:
    x0 = as_image(img_wm)
    out = apply_op(x0, op, param, purifier)
    name = op if param is None else f"{op}({param})"
    return finish(name, handle, x0, out)
